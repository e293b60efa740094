"""Optimal planning over the symbolic state graph.

Two routes to the same answers, used to cross-check each other in tests:

* :func:`optimal_plan` runs a fresh forward breadth-first search from one
  state and stops at the first goal state.
* :class:`PlanOracle` enumerates the reachable configuration graph once per
  (scene, goal), runs a multi-source reverse BFS from every goal state, and
  then answers distance / on-a-minimal-plan queries in O(1). Verifier
  verdicts and noisy-policy "correct action" lookups go through this.

The planner enumerates navigate/pick/place/open/close successors. find is
omitted because every find effect equals some navigate effect, so distances
are unchanged; toggles are omitted because no goal predicate reads toggle
state; slice is enumerated only when the goal mentions a sliced id or
category (slicing is irreversible and otherwise never helps a placement
goal). This keeps plans optimal for every expressible goal while keeping the
graph small.

Queries on states outside the built graph (possible after off-plan actions
such as slice) fall back to a memoized fresh search.
"""

from __future__ import annotations

import threading
from collections import deque
from dataclasses import replace
from typing import Iterator, Optional

from .engine import goal_holds, step
from .types import Action, EnvState, Goal, Scene, TaskSpec, Verb, START_LOCATION


def planning_actions(state: EnvState, include_slice: bool = False) -> Iterator[Action]:
    """Actions with satisfied preconditions, in deterministic order."""
    for spec in sorted(state.scene.receptacles, key=lambda r: r.id):
        if spec.id != state.agent_at:
            yield Action(Verb.NAVIGATE, spec.id)
    at_receptacle = state.agent_at != START_LOCATION
    accessible = at_receptacle and state.is_accessible(state.agent_at)
    if accessible and state.holding is None:
        for oid in sorted(state.contents_of(state.agent_at)):
            yield Action(Verb.PICK, oid)
    if accessible and state.holding is not None:
        yield Action(Verb.PLACE, state.holding)
    if at_receptacle:
        spec = state.scene.receptacle(state.agent_at)
        assert spec is not None
        if spec.openable:
            verb = Verb.CLOSE if state.agent_at in state.open_ids else Verb.OPEN
            yield Action(verb, state.agent_at)
    if include_slice and accessible and state.holding is None:
        for oid in sorted(state.contents_of(state.agent_at)):
            if not oid.startswith("sliced_"):
                yield Action(Verb.SLICE, oid)


def _unbudgeted(state: EnvState) -> EnvState:
    """Copy with step accounting reset so search depth never trips the
    engine's budget guard. Plan distances are budget-free by contract."""
    if state.step_count == 0:
        return state
    return replace(state, step_count=0)


def _expand(state: EnvState, include_slice: bool) -> list[tuple[Action, EnvState]]:
    base = _unbudgeted(state)
    out = []
    for action in planning_actions(base, include_slice):
        nxt, outcome = step(base, action)
        assert outcome == "ok", f"planning action failed precondition: {action}"
        out.append((action, nxt))
    return out


def optimal_plan(state: EnvState, task: TaskSpec) -> Optional[list[Action]]:
    """Shortest action sequence reaching the goal, or None.

    None means no plan exists within the remaining step budget. Plans are
    deterministic: ties are broken by the fixed successor enumeration order.
    """
    budget = state.step_limit - state.step_count
    if goal_holds(state, task.goal):
        return []
    include_slice = task.goal.mentions_sliced()
    start_key = state.key()
    parents: dict[tuple, tuple[tuple, Action]] = {}
    seen = {start_key}
    frontier = deque([(state, 0)])
    while frontier:
        current, depth = frontier.popleft()
        if depth >= budget:
            continue
        for action, nxt in _expand(current, include_slice):
            key = nxt.key()
            if key in seen:
                continue
            seen.add(key)
            parents[key] = (current.key(), action)
            if goal_holds(nxt, task.goal):
                plan = [action]
                back = current.key()
                while back != start_key:
                    back, prev_action = parents[back]
                    plan.append(prev_action)
                plan.reverse()
                return plan
            frontier.append((nxt, depth + 1))
    return None


class PlanOracle:
    """Distance-to-goal map over the reachable configuration graph.

    Built lazily on the first query. Thread-safe: episode runners may share
    one oracle across parallel episodes of the same (scene, goal).
    """

    def __init__(self, scene: Scene, goal: Goal):
        self.scene = scene
        self.goal = goal
        self._include_slice = goal.mentions_sliced()
        self._lock = threading.Lock()
        self._built = False
        self._states: dict[tuple, EnvState] = {}
        self._adjacency: dict[tuple, tuple[tuple[Action, tuple], ...]] = {}
        self._dist: dict[tuple, int] = {}
        self._fallback: dict[tuple, Optional[int]] = {}

    # -- graph construction -------------------------------------------------

    def _build(self, root: EnvState) -> None:
        states: dict[tuple, EnvState] = {root.key(): root}
        adjacency: dict[tuple, tuple[tuple[Action, tuple], ...]] = {}
        frontier = deque([root])
        while frontier:
            current = frontier.popleft()
            edges = []
            for action, nxt in _expand(current, self._include_slice):
                key = nxt.key()
                edges.append((action, key))
                if key not in states:
                    states[key] = nxt
                    frontier.append(nxt)
            adjacency[current.key()] = tuple(edges)
        reverse: dict[tuple, list[tuple]] = {}
        goal_keys = []
        for key, state in states.items():
            if goal_holds(state, self.goal):
                goal_keys.append(key)
            for _, succ in adjacency[key]:
                reverse.setdefault(succ, []).append(key)
        dist: dict[tuple, int] = {key: 0 for key in goal_keys}
        wave = deque(goal_keys)
        while wave:
            key = wave.popleft()
            d = dist[key]
            for pred in reverse.get(key, ()):
                if pred not in dist:
                    dist[pred] = d + 1
                    wave.append(pred)
        self._states = states
        self._adjacency = adjacency
        self._dist = dist
        self._built = True

    def _ensure_built(self, state: EnvState) -> None:
        if not self._built:
            with self._lock:
                if not self._built:
                    self._build(state)

    # -- queries -------------------------------------------------------------

    def graph_size(self) -> int:
        return len(self._states)

    def distance(self, state: EnvState) -> Optional[int]:
        """Length of a shortest plan from state, ignoring step budget."""
        self._ensure_built(state)
        key = state.key()
        if key in self._states:
            return self._dist.get(key)
        return self._fallback_distance(state)

    def _fallback_distance(self, state: EnvState) -> Optional[int]:
        key = state.key()
        with self._lock:
            if key in self._fallback:
                return self._fallback[key]
        if goal_holds(state, self.goal):
            result: Optional[int] = 0
        else:
            result = None
            seen = {key}
            frontier = deque([(state, 0)])
            while frontier:
                current, depth = frontier.popleft()
                # Joining the prebuilt graph resolves the rest in O(1).
                ckey = current.key()
                if ckey in self._states:
                    known = self._dist.get(ckey)
                    if known is not None:
                        candidate = depth + known
                        result = candidate if result is None else min(result, candidate)
                    continue
                for _, nxt in _expand(current, include_slice=True):
                    nkey = nxt.key()
                    if nkey in seen:
                        continue
                    seen.add(nkey)
                    if goal_holds(nxt, self.goal):
                        candidate = depth + 1
                        result = candidate if result is None else min(result, candidate)
                        frontier.clear()
                        break
                    frontier.append((nxt, depth + 1))
        with self._lock:
            self._fallback[key] = result
        return result

    def successors(self, state: EnvState) -> list[tuple[Action, EnvState]]:
        self._ensure_built(state)
        key = state.key()
        if key in self._adjacency:
            return [(a, self._states[k]) for a, k in self._adjacency[key]]
        return _expand(state, self._include_slice)

    def optimal_actions(self, state: EnvState) -> list[Action]:
        """Actions that start some minimal plan, in enumeration order."""
        d = self.distance(state)
        if d is None or d == 0:
            return []
        out = []
        for action, nxt in self.successors(state):
            nd = self.distance(nxt)
            if nd is not None and nd == d - 1:
                out.append(action)
        return out

    def first_optimal_action(self, state: EnvState) -> Optional[Action]:
        actions = self.optimal_actions(state)
        return actions[0] if actions else None

    def is_progress(self, state: EnvState, action: Action) -> bool:
        """True iff the action lies on some minimal plan from the state:
        it executes ok and strictly decreases the plan distance."""
        d = self.distance(state)
        if d is None or d == 0:
            return False
        nxt, outcome = step(state, action)
        if outcome != "ok":
            return False
        nd = self.distance(nxt)
        return nd is not None and nd == d - 1


_ORACLE_CACHE: dict[tuple[Scene, Goal], PlanOracle] = {}
_ORACLE_CACHE_LOCK = threading.Lock()
_ORACLE_CACHE_MAX = 512


def plan_oracle_for(scene: Scene, goal: Goal) -> PlanOracle:
    """Shared oracle per (scene, goal); graphs are reused across episodes."""
    key = (scene, goal)
    with _ORACLE_CACHE_LOCK:
        oracle = _ORACLE_CACHE.get(key)
        if oracle is None:
            if len(_ORACLE_CACHE) >= _ORACLE_CACHE_MAX:
                _ORACLE_CACHE.clear()
            oracle = PlanOracle(scene, goal)
            _ORACLE_CACHE[key] = oracle
        return oracle

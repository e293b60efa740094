"""Simulated actors with privileged access to the episode's ground truth.

A :class:`TruthChannel` is owned by the episode runner: it holds the task,
the live environment state, and the plan-distance oracle. Simulated actors
read it to decide which actions are correct; remote actors never see it.

Determinism: every draw comes from a generator keyed by the caller-supplied
seed, so fixed seeds reproduce candidates and votes exactly, at any
parallelism width. At temperature 0 a policy commits to a single draw for
the context and returns n copies of it.

The wrong-action builders never emit an action that lies on a minimal plan,
so ``policy_correct_prob`` is exactly the per-decision correctness
probability.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from ..seeding import rng_for
from ..trajectory import VERDICT_NO, VERDICT_YES
from ..world.planner import PlanOracle, planning_actions
from ..world.types import Action, EnvState, START_LOCATION, TaskSpec, Verb
from .base import (
    Candidate,
    CallCounter,
    FAILURE_MODES,
    NoiseProfile,
    PolicyContext,
    Verification,
    make_candidate,
)


@dataclass
class TruthChannel:
    """Mutable ground-truth view for one episode."""

    task: TaskSpec
    oracle: PlanOracle
    state: EnvState

    def update(self, state: EnvState) -> None:
        self.state = state

    def optimal_action(self) -> Optional[Action]:
        return self.oracle.first_optimal_action(self.state)

    def is_progress(self, action: Action) -> bool:
        return self.oracle.is_progress(self.state, action)


def wrong_object_actions(truth: TruthChannel) -> list[Action]:
    """Pick actions aimed at objects no minimal plan wants picked next."""
    state = truth.state
    optimal = {a.canonical() for a in truth.oracle.optimal_actions(state)}
    out = []
    for oid in state.all_object_ids():
        if oid == state.holding:
            continue
        action = Action(Verb.PICK, oid)
        if action.canonical() not in optimal:
            out.append(action)
    return out


def wrong_receptacle_actions(truth: TruthChannel) -> list[Action]:
    """Navigations that leave every minimal plan."""
    state = truth.state
    optimal = {a.canonical() for a in truth.oracle.optimal_actions(state)}
    out = []
    for spec in sorted(state.scene.receptacles, key=lambda r: r.id):
        if spec.id == state.agent_at:
            continue
        action = Action(Verb.NAVIGATE, spec.id)
        if action.canonical() not in optimal:
            out.append(action)
    return out


def precondition_violation_actions(truth: TruthChannel) -> list[Action]:
    """Actions whose precondition fails in the current state."""
    state = truth.state
    out = []
    if state.holding is not None:
        ids = state.all_object_ids()
        if ids:
            out.append(Action(Verb.PICK, ids[0]))
    else:
        target = state.agent_at if state.agent_at != START_LOCATION else state.scene.receptacles[0].id
        out.append(Action(Verb.PLACE, target))
    for spec in sorted(state.scene.receptacles, key=lambda r: r.id):
        if not spec.openable:
            out.append(Action(Verb.OPEN, spec.id))
            break
    if state.agent_at != START_LOCATION:
        out.append(Action(Verb.NAVIGATE, state.agent_at))
    return out


_MODE_BUILDERS = {
    "wrong_object": wrong_object_actions,
    "wrong_receptacle": wrong_receptacle_actions,
    "precondition_violation": precondition_violation_actions,
}


def _fallback_action(state: EnvState) -> Action:
    for action in planning_actions(state):
        return action
    return Action(Verb.NAVIGATE, state.scene.receptacles[0].id)


def _correct_rationale(action: Action) -> str:
    return f"The shortest route to the goal continues with {action.render()}."


def _wrong_rationale(action: Action) -> str:
    return f"It seems reasonable to try {action.render()} next."


class OraclePolicy(CallCounter):
    """Always proposes the canonical next optimal action."""

    def __init__(self, truth: TruthChannel):
        super().__init__()
        self.truth = truth

    def propose(
        self, context: PolicyContext, n: int, temperature: float, seed: int
    ) -> list[Candidate]:
        self.count(n)
        action = self.truth.optimal_action()
        if action is None:
            action = _fallback_action(self.truth.state)
        text = action.render()
        rationale = _correct_rationale(action)
        return [make_candidate(i, rationale, text) for i in range(n)]


class NoisyPolicy(CallCounter):
    """Correct with probability p; otherwise draws a wrong action whose kind
    follows the failure-mode weights."""

    def __init__(self, truth: TruthChannel, noise: NoiseProfile, record_modes: bool = False):
        super().__init__()
        self.truth = truth
        self.noise = noise
        self.record_modes = record_modes
        self.drawn_modes: list[str] = []  # instrumentation, kept only on request

    def _draw(self, rng, optimal: Optional[Action], pools: dict[str, list[Action]]) -> Candidate:
        correct = rng.random() < self.noise.policy_correct_prob
        if correct and optimal is not None:
            if self.record_modes:
                self.drawn_modes.append("correct")
            return make_candidate(0, _correct_rationale(optimal), optimal.render())
        weights = self.noise.normalized_weights()
        modes = [m for m, _ in weights]
        probs = [w for _, w in weights]
        order = list(rng.choice(len(modes), size=len(modes), replace=False, p=probs))
        for idx in order:
            pool = pools[modes[idx]]
            if pool:
                action = pool[int(rng.integers(len(pool)))]
                if self.record_modes:
                    self.drawn_modes.append(modes[idx])
                return make_candidate(0, _wrong_rationale(action), action.render())
        action = _fallback_action(self.truth.state)
        if self.record_modes:
            self.drawn_modes.append("wrong_receptacle")
        return make_candidate(0, _wrong_rationale(action), action.render())

    def propose(
        self, context: PolicyContext, n: int, temperature: float, seed: int
    ) -> list[Candidate]:
        self.count(n)
        rng = rng_for(seed, "noisy-policy")
        optimal = self.truth.optimal_action()
        pools = {mode: builder(self.truth) for mode, builder in _MODE_BUILDERS.items()}
        if temperature == 0:
            proto = self._draw(rng, optimal, pools)
            return [
                Candidate(i, proto.raw_text, proto.rationale, proto.record)
                for i in range(n)
            ]
        out = []
        for i in range(n):
            c = self._draw(rng, optimal, pools)
            out.append(Candidate(i, c.raw_text, c.rationale, c.record))
        return out


class SystematicErrorPolicy(CallCounter):
    """Error model with a dominant wrong mode: correct with probability
    ``correct_prob``, the state's canonical wrong action with probability
    ``wrong_mode_prob``, and a residual spread over other wrong actions.

    The modal wrong action is a deterministic function of the state (first
    wrong-object pick, falling back to first wrong navigation), so repeated
    samples at one decision point concentrate on a single incorrect action.
    """

    def __init__(self, truth: TruthChannel, correct_prob: float, wrong_mode_prob: float):
        super().__init__()
        if correct_prob < 0 or wrong_mode_prob < 0 or correct_prob + wrong_mode_prob > 1:
            raise ValueError("probabilities must be nonnegative and sum to at most 1")
        self.truth = truth
        self.correct_prob = correct_prob
        self.wrong_mode_prob = wrong_mode_prob

    def modal_wrong_action(self) -> Action:
        pool = wrong_object_actions(self.truth) or wrong_receptacle_actions(self.truth)
        if not pool:
            pool = precondition_violation_actions(self.truth)
        return pool[0]

    def _other_wrong_actions(self, modal: Action) -> list[Action]:
        seen = {modal.canonical()}
        out = []
        for mode in FAILURE_MODES:
            for action in _MODE_BUILDERS[mode](self.truth):
                key = action.canonical()
                if key not in seen:
                    seen.add(key)
                    out.append(action)
        return out or [modal]

    def _draw(self, rng, optimal, modal, others) -> Candidate:
        u = rng.random()
        if u < self.correct_prob:
            if optimal is not None:
                return make_candidate(0, _correct_rationale(optimal), optimal.render())
            u = 1.0  # unsolvable state: degrade to the wrong modes
        if u < self.correct_prob + self.wrong_mode_prob:
            action = modal
        else:
            action = others[int(rng.integers(len(others)))]
        return make_candidate(0, _wrong_rationale(action), action.render())

    def propose(
        self, context: PolicyContext, n: int, temperature: float, seed: int
    ) -> list[Candidate]:
        self.count(n)
        rng = rng_for(seed, "systematic-policy")
        optimal = self.truth.optimal_action()
        modal = self.modal_wrong_action()
        others = self._other_wrong_actions(modal)
        if temperature == 0:
            proto = self._draw(rng, optimal, modal, others)
            return [
                Candidate(i, proto.raw_text, proto.rationale, proto.record)
                for i in range(n)
            ]
        out = []
        for i in range(n):
            c = self._draw(rng, optimal, modal, others)
            out.append(Candidate(i, c.raw_text, c.rationale, c.record))
        return out


def _verdict_text(verdict: str) -> str:
    if verdict == VERDICT_YES:
        return "The action lies on a shortest plan for the task. action_is_correct: yes"
    return "The action does not advance a shortest plan. action_is_correct: no"


class OracleVerifier(CallCounter):
    """Votes yes exactly when the candidate lies on a minimal plan."""

    def __init__(self, truth: TruthChannel):
        super().__init__()
        self.truth = truth

    def _true_verdict(self, candidate: Candidate) -> str:
        if not candidate.parsable:
            return VERDICT_NO
        return VERDICT_YES if self.truth.is_progress(candidate.record.action) else VERDICT_NO

    def verify(
        self,
        instruction: str,
        prior_actions: tuple[str, ...],
        observation,
        candidate: Candidate,
        m: int,
        temperature: float,
        seed: int,
    ) -> list[Verification]:
        self.count(m)
        verdict = self._true_verdict(candidate)
        return [
            Verification(candidate.index, vote, _verdict_text(verdict), verdict)
            for vote in range(m)
        ]


class NoisyVerifier(OracleVerifier):
    """Oracle verdict flipped per vote with the configured fpr/fnr."""

    def __init__(self, truth: TruthChannel, fpr: float, fnr: float):
        super().__init__(truth)
        if not 0.0 <= fpr <= 1.0 or not 0.0 <= fnr <= 1.0:
            raise ValueError("fpr/fnr must be in [0, 1]")
        self.fpr = fpr
        self.fnr = fnr

    def verify(
        self,
        instruction: str,
        prior_actions: tuple[str, ...],
        observation,
        candidate: Candidate,
        m: int,
        temperature: float,
        seed: int,
    ) -> list[Verification]:
        self.count(m)
        truth = self._true_verdict(candidate)
        rng = rng_for(seed, "noisy-verifier", candidate.index)
        out = []
        for vote in range(m):
            flip = rng.random() < (self.fnr if truth == VERDICT_YES else self.fpr)
            verdict = (
                (VERDICT_NO if truth == VERDICT_YES else VERDICT_YES) if flip else truth
            )
            out.append(Verification(candidate.index, vote, _verdict_text(verdict), verdict))
        return out


class BernoulliPolicy(CallCounter):
    """Synthetic two-action decision point: hit with probability p.

    Used by coverage estimation to exercise the coverage law without
    environment machinery. Candidates render as pick(target_item) or
    pick(decoy_item); :func:`bernoulli_hit` is the matching oracle judge.
    """

    def __init__(self, p: float):
        super().__init__()
        if not 0.0 <= p <= 1.0:
            raise ValueError("p must be in [0, 1]")
        self.p = p

    def propose(
        self, context: PolicyContext, n: int, temperature: float, seed: int
    ) -> list[Candidate]:
        self.count(n)
        rng = rng_for(seed, "bernoulli-policy")
        if temperature == 0:
            hits = [bool(rng.random() < self.p)] * n
        else:
            hits = [bool(rng.random() < self.p) for _ in range(n)]
        out = []
        for i, hit in enumerate(hits):
            argument = "target_item" if hit else "decoy_item"
            out.append(make_candidate(i, "", f"pick({argument})"))
        return out


def bernoulli_hit(candidate: Candidate) -> bool:
    return candidate.parsable and candidate.record.action.argument == "target_item"

"""Step semantics, observation, and goal evaluation.

step() is a pure function: it returns a new state and an outcome string and
never mutates its input. Precondition failures consume a step and leave the
configuration unchanged. Malformed actions (verb outside the scene's profile,
empty argument) are programming errors and raise instead of stepping.

Reference resolution: arguments name receptacles or objects either by id
("counter_0") or by category ("counter"). Category references resolve to the
lowest matching id so replays are deterministic.
"""

from __future__ import annotations

from dataclasses import replace
from typing import Optional

from .types import (
    Action,
    ActionGrammarError,
    ConditionalGoal,
    EnvState,
    Goal,
    Observation,
    OUTCOME_OK,
    OUTCOME_PRECONDITION_FAILED,
    PROFILE_VERBS,
    PlacementGoal,
    SLICED_PREFIX,
    START_LOCATION,
    StepBudgetError,
    TaskSpec,
    Verb,
)


def resolve_receptacle(state: EnvState, ref: str) -> Optional[str]:
    """Receptacle id for an id-or-category reference, or None."""
    if state.scene.receptacle(ref) is not None:
        return ref
    matches = sorted(r.id for r in state.scene.receptacles if r.category == ref)
    return matches[0] if matches else None


def resolve_object_at(state: EnvState, ref: str, rec_id: str) -> Optional[str]:
    """Effective object id matching ref among the contents of rec_id."""
    matches = []
    for oid in state.contents_of(rec_id):
        if oid == ref:
            return oid
        spec = state.scene.object_spec(oid)
        if spec is not None and spec.category == ref:
            matches.append(oid)
    return min(matches) if matches else None


def _held_matches(state: EnvState, ref: str) -> bool:
    if state.holding is None:
        return False
    if state.holding == ref:
        return True
    spec = state.scene.object_spec(state.holding)
    return spec is not None and spec.category == ref


def _advance(state: EnvState, ok: bool, **changes) -> tuple[EnvState, str]:
    outcome = OUTCOME_OK if ok else OUTCOME_PRECONDITION_FAILED
    if not ok:
        changes = {}
    new_state = replace(
        state, step_count=state.step_count + 1, last_outcome=outcome, **changes
    )
    return new_state, outcome


def _with_location(
    locations: tuple[tuple[str, str], ...], obj_id: str, rec_id: str
) -> tuple[tuple[str, str], ...]:
    return tuple(sorted(locations + ((obj_id, rec_id),)))


def _without_location(
    locations: tuple[tuple[str, str], ...], obj_id: str
) -> tuple[tuple[str, str], ...]:
    return tuple(pair for pair in locations if pair[0] != obj_id)


def step(state: EnvState, action: Action) -> tuple[EnvState, str]:
    """Apply one action. Returns (new state, outcome).

    Raises ActionGrammarError for actions malformed under the scene profile
    and StepBudgetError when the state's step budget is already exhausted.
    """
    if state.step_count >= state.step_limit:
        raise StepBudgetError(
            f"step budget exhausted ({state.step_count}/{state.step_limit})"
        )
    if not isinstance(action.verb, Verb) or action.verb not in PROFILE_VERBS[state.scene.profile]:
        raise ActionGrammarError(
            f"verb {action.verb!r} not in profile {state.scene.profile!r}"
        )
    if not action.argument or not action.argument.strip():
        raise ActionGrammarError("empty action argument")

    verb, ref = action.verb, action.argument.strip()

    if verb == Verb.NAVIGATE:
        target = resolve_receptacle(state, ref)
        if target is None or target == state.agent_at:
            return _advance(state, False)
        return _advance(state, True, agent_at=target)

    if verb == Verb.FIND:
        return _step_find(state, ref)

    if verb == Verb.PICK:
        if state.holding is not None or state.agent_at == START_LOCATION:
            return _advance(state, False)
        if not state.is_accessible(state.agent_at):
            return _advance(state, False)
        obj_id = resolve_object_at(state, ref, state.agent_at)
        if obj_id is None:
            return _advance(state, False)
        return _advance(
            state,
            True,
            holding=obj_id,
            locations=_without_location(state.locations, obj_id),
        )

    if verb == Verb.PLACE:
        if state.holding is None or state.agent_at == START_LOCATION:
            return _advance(state, False)
        if not state.is_accessible(state.agent_at):
            return _advance(state, False)
        # Argument may name the held object or the current receptacle;
        # deposits always land at agent_at.
        rec = resolve_receptacle(state, ref)
        if rec is not None:
            if rec != state.agent_at:
                return _advance(state, False)
        elif not _held_matches(state, ref):
            return _advance(state, False)
        return _advance(
            state,
            True,
            holding=None,
            locations=_with_location(state.locations, state.holding, state.agent_at),
        )

    if verb in (Verb.OPEN, Verb.CLOSE):
        rec = resolve_receptacle(state, ref)
        if rec is None or rec != state.agent_at:
            return _advance(state, False)
        spec = state.scene.receptacle(rec)
        assert spec is not None
        if not spec.openable:
            return _advance(state, False)
        currently_open = rec in state.open_ids
        if verb == Verb.OPEN:
            if currently_open:
                return _advance(state, False)
            return _advance(state, True, open_ids=state.open_ids | {rec})
        if not currently_open:
            return _advance(state, False)
        return _advance(state, True, open_ids=state.open_ids - {rec})

    if verb in (Verb.TOGGLE_ON, Verb.TOGGLE_OFF):
        obj_id = _visible_object(state, ref)
        if obj_id is None:
            return _advance(state, False)
        is_on = obj_id in state.toggled_on
        if verb == Verb.TOGGLE_ON:
            if is_on:
                return _advance(state, False)
            return _advance(state, True, toggled_on=state.toggled_on | {obj_id})
        if not is_on:
            return _advance(state, False)
        return _advance(state, True, toggled_on=state.toggled_on - {obj_id})

    if verb == Verb.SLICE:
        obj_id = _visible_object(state, ref)
        if obj_id is None or obj_id.startswith(SLICED_PREFIX):
            return _advance(state, False)
        sliced_id = SLICED_PREFIX + obj_id
        locations = _with_location(
            _without_location(state.locations, obj_id), sliced_id, state.agent_at
        )
        toggled = state.toggled_on - {obj_id}
        return _advance(state, True, locations=locations, toggled_on=toggled)

    raise ActionGrammarError(f"unhandled verb {verb!r}")  # pragma: no cover


def _visible_object(state: EnvState, ref: str) -> Optional[str]:
    """Object at the agent's location matching ref, if contents are visible."""
    if state.agent_at == START_LOCATION or not state.is_accessible(state.agent_at):
        return None
    return resolve_object_at(state, ref, state.agent_at)


def _step_find(state: EnvState, ref: str) -> tuple[EnvState, str]:
    """Find moves to a receptacle: either one matching ref directly, or the
    lowest-id receptacle with accessible contents containing a matching
    object. Contents of closed receptacles are never searched. Arriving at
    the current location counts as success (the target is already located).
    """
    rec = resolve_receptacle(state, ref)
    if rec is not None:
        return _advance(state, True, agent_at=rec)
    for spec in sorted(state.scene.receptacles, key=lambda r: r.id):
        if not state.is_accessible(spec.id):
            continue
        if resolve_object_at(state, ref, spec.id) is not None:
            return _advance(state, True, agent_at=spec.id)
    return _advance(state, False)


def observe(state: EnvState) -> Observation:
    """Render the agent's partial view of the state."""
    location_is_open: Optional[bool] = None
    visible: tuple[tuple[str, str, tuple[str, ...]], ...] = ()
    if state.agent_at != START_LOCATION:
        spec = state.scene.receptacle(state.agent_at)
        assert spec is not None
        if spec.openable:
            location_is_open = state.agent_at in state.open_ids
        if state.is_accessible(state.agent_at):
            entries = []
            for oid in sorted(state.contents_of(state.agent_at)):
                ospec = state.scene.object_spec(oid)
                assert ospec is not None
                entries.append((oid, ospec.category, tuple(sorted(ospec.attributes))))
            visible = tuple(entries)
    holding_category = None
    if state.holding is not None:
        hspec = state.scene.object_spec(state.holding)
        assert hspec is not None
        holding_category = hspec.category
    return Observation(
        location=state.agent_at,
        location_is_open=location_is_open,
        visible=visible,
        holding=holding_category,
        last_action_outcome=state.last_outcome,
    )


def _placement_holds(state: EnvState, goal: PlacementGoal) -> bool:
    if goal.all_of_category:
        assert goal.category is not None
        found_any = False
        for oid, _ in state.objects.items():
            spec = state.scene.object_spec(oid)
            assert spec is not None
            if spec.category == goal.category:
                found_any = True
                if state.location_of(oid) != goal.receptacle_id:
                    return False
        # A held instance has location None and fails above; a scene with no
        # instances at all cannot satisfy an all-of-category goal.
        return found_any
    return all(state.location_of(oid) == goal.receptacle_id for oid in goal.object_ids)


def _conditional_holds(state: EnvState, goal: ConditionalGoal) -> bool:
    if not all(_placement_holds(state, g) for g in goal.active):
        return False
    return all(state.location_of(oid) == home for oid, home in goal.untouched)


def goal_holds(state: EnvState, goal: Goal) -> bool:
    """Goal predicate; decidable on any state of the goal's scene."""
    if not all(_placement_holds(state, g) for g in goal.placements):
        return False
    if goal.conditional is not None and not _conditional_holds(state, goal.conditional):
        return False
    return True


def is_success(state: EnvState, task: TaskSpec) -> bool:
    return goal_holds(state, task.goal)

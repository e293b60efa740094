"""Synthetic verifier-training data from successful trajectories.

Pipeline: take a successful (positive) trajectory, (1) optionally augment
each step with a chain-of-thought rationale, (2) inject exactly one mistake
to synthesize a corresponding failed (negative) trajectory, (3) annotate
every step with a verification rationale ending in the binary verdict tag,
and (4) flatten matched positive/negative annotations into a balanced
verifier dataset.

Every synthesized trajectory is re-simulated through the world engine from
the original initial state (generate-and-validate): observations and
outcomes are ground-truth consistent, the mistaken step is genuinely wrong
under the plan-distance oracle, and the final state fails the task goal.
Candidates that do not validate are rejected, never repaired.

Mistake modes:

- wrong_object: a pick is redirected to a co-located distractor.
- wrong_receptacle: the navigation feeding a place is retargeted, so the
  object is deposited at the wrong receptacle.
- precondition_violation: a (navigate, pick) pair is swapped so the pick
  runs before the agent has located the object, or a pick is replaced by a
  place of the not-yet-held object; either way the step fails its
  precondition.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

from .actors.base import FAILURE_MODES
from .seeding import rng_for
from .trajectory import (
    ActionRecord,
    Step,
    Trajectory,
    VERDICT_NO,
    VERDICT_YES,
    VerifierSample,
    balance,
    parse_verdict_tag,
    record_from_text,
    trajectory_digest,
)
from .world.engine import is_success, observe, resolve_receptacle, step as world_step
from .world.planner import PlanOracle, plan_oracle_for
from .world.types import (
    Action,
    ActionParseError,
    EnvState,
    OUTCOME_OK,
    OUTCOME_PRECONDITION_FAILED,
    TaskSpec,
    Verb,
    parse_action,
)

log = logging.getLogger(__name__)

MODE_AUTO = "auto"


class SynthesisError(RuntimeError):
    """Synthesis input or candidate failed validation."""


class ModeUnavailableError(SynthesisError):
    """The requested mistake mode has no valid injection site."""


@dataclass(frozen=True, slots=True)
class MistakeSpec:
    """Description of one injected mistake."""

    mode: str
    target_step: int
    replacement: Action
    rationale_template: str

    def __post_init__(self) -> None:
        if self.mode not in FAILURE_MODES:
            raise ValueError(f"unknown mistake mode {self.mode!r}")
        if self.target_step < 0:
            raise ValueError("target_step must be nonnegative")


@dataclass(frozen=True, slots=True)
class AnnotationRecord:
    """Per-step verification texts and labels for one trajectory."""

    trajectory_id: str
    entries: tuple[tuple[str, str], ...]  # (verification text, label)

    def __post_init__(self) -> None:
        for text, label in self.entries:
            if label not in (VERDICT_YES, VERDICT_NO):
                raise ValueError(f"label must be yes/no, got {label!r}")
            if parse_verdict_tag(text) != label:
                raise ValueError("verification text tag disagrees with label")

    def labels(self) -> tuple[str, ...]:
        return tuple(label for _, label in self.entries)

    def matches(self, trajectory: Trajectory) -> None:
        """Raise unless this record is consistent with the trajectory."""
        if len(self.entries) != len(trajectory.steps):
            raise ValueError("one annotation entry per step required")
        labels = self.labels()
        if trajectory.label == "positive":
            if any(label != VERDICT_YES for label in labels):
                raise ValueError("positive trajectories must be all-yes")
        else:
            assert trajectory.failure_index is not None
            if labels[trajectory.failure_index] != VERDICT_NO:
                raise ValueError("label at failure_index must be no")


# -- Rationale augmentation ------------------------------------------------------


def rule_cot_teacher(trajectory: Trajectory, index: int) -> str:
    """Deterministic rationale template; embeds the instruction so the
    target is always mentioned."""
    action = trajectory.steps[index].record.action
    if index == 0:
        lead = "Starting the task"
    else:
        lead = f"After {index} action{'s' if index > 1 else ''}"
    return (
        f"The task is: {trajectory.instruction} "
        f"{lead}, {action.render()} is the next step on the shortest plan."
    )


CotTeacher = Callable[[Trajectory, int], str]


def augment_cot(
    trajectory: Trajectory,
    teacher: Optional[CotTeacher] = None,
    overwrite: bool = False,
) -> Trajectory:
    """Give every step a nonempty rationale; the action sequence is unchanged.

    Steps that already carry a rationale are kept unless ``overwrite``. A
    teacher failure (exception or empty output) raises an error naming the
    step.
    """
    if trajectory.label != "positive":
        raise SynthesisError("only positive trajectories are augmented")
    fill = teacher if teacher is not None else rule_cot_teacher
    new_steps = []
    for i, step in enumerate(trajectory.steps):
        if step.record.rationale and not overwrite:
            new_steps.append(step)
            continue
        try:
            rationale = fill(trajectory, i)
        except Exception as exc:
            raise SynthesisError(f"rationale teacher failed at step {i}: {exc}") from exc
        if not rationale or not rationale.strip():
            raise SynthesisError(f"rationale teacher returned nothing for step {i}")
        record = record_from_text(rationale.strip(), step.record.action_text)
        new_steps.append(Step(step.observation, record, step.outcome))
    return Trajectory(
        instruction=trajectory.instruction,
        steps=tuple(new_steps),
        success=trajectory.success,
        label=trajectory.label,
        failure_index=trajectory.failure_index,
    )


# -- Verification text rendering --------------------------------------------------


def _yes_text(action: Action) -> str:
    return (
        f"Executing {action.render()} keeps the episode on a shortest "
        f"completion of the task. action_is_correct: yes"
    )


def _no_text(action: Action, outcome: str) -> str:
    if outcome != OUTCOME_OK:
        reason = "its precondition does not hold in the current state"
    else:
        reason = "it moves the episode off every shortest completion of the task"
    return f"{action.render()} is a mistake: {reason}. action_is_correct: no"


def annotate_positive(
    trajectory: Trajectory, teacher: Optional[CotTeacher] = None
) -> AnnotationRecord:
    """Label every step of a positive trajectory yes.

    With a teacher, its per-step text must already end in a yes tag;
    otherwise the rule template is rendered. Errors name the step.
    """
    if trajectory.label != "positive":
        raise SynthesisError("annotate_positive requires a positive trajectory")
    entries = []
    for i, step in enumerate(trajectory.steps):
        if teacher is None:
            text = _yes_text(step.record.action)
        else:
            try:
                text = teacher(trajectory, i)
            except Exception as exc:
                raise SynthesisError(
                    f"verification teacher failed at step {i}: {exc}"
                ) from exc
            if parse_verdict_tag(text) != VERDICT_YES:
                raise SynthesisError(
                    f"verification teacher at step {i} did not produce a yes tag"
                )
        entries.append((text, VERDICT_YES))
    record = AnnotationRecord(trajectory_digest(trajectory), tuple(entries))
    record.matches(trajectory)
    return record


# -- Failure synthesis -------------------------------------------------------------


def _clean_states(initial_state: EnvState, records: Sequence[ActionRecord]) -> list[EnvState]:
    """Pre-action state sequence; the source must replay without failures."""
    states = [initial_state]
    for i, record in enumerate(records):
        state, outcome = world_step(states[-1], record.action)
        if outcome != OUTCOME_OK:
            raise SynthesisError(f"source trajectory fails to replay at step {i}")
        states.append(state)
    return states


def _replace(
    records: Sequence[ActionRecord], index: int, record: ActionRecord
) -> list[ActionRecord]:
    out = list(records)
    out[index] = record
    return out


def _wrong_object_candidates(
    states: list[EnvState],
    records: Sequence[ActionRecord],
    oracle: PlanOracle,
) -> list[tuple[MistakeSpec, list[ActionRecord]]]:
    out = []
    for i, record in enumerate(records):
        if record.action.verb != Verb.PICK:
            continue
        state = states[i]
        picked = states[i + 1].holding
        for alt in state.contents_of(state.agent_at):
            if alt == picked:
                continue
            action = Action(Verb.PICK, alt)
            if oracle.is_progress(state, action):
                continue
            rationale = (
                f"The {alt} looks like what the task asks for; "
                f"{action.render()} should satisfy it."
            )
            spec = MistakeSpec("wrong_object", i, action, rationale)
            out.append(
                (spec, _replace(records, i, record_from_text(rationale, action.render())))
            )
    return out


def _wrong_receptacle_candidates(
    states: list[EnvState],
    records: Sequence[ActionRecord],
    oracle: PlanOracle,
) -> list[tuple[MistakeSpec, list[ActionRecord]]]:
    out = []
    for i, record in enumerate(records):
        if record.action.verb != Verb.PLACE:
            continue
        feeder = None
        for j in range(i - 1, -1, -1):
            if records[j].action.verb in (Verb.NAVIGATE, Verb.FIND):
                feeder = j
                break
        if feeder is None:
            continue
        place_state = states[i]
        nav_state = states[feeder]
        for spec_rec in sorted(place_state.scene.receptacles, key=lambda r: r.id):
            wrong = spec_rec.id
            if wrong in (place_state.agent_at, nav_state.agent_at):
                continue
            # Dropping inside a closed receptacle is a different failure
            # kind; keep the deposit executable so the object lands wrong.
            if spec_rec.openable and wrong not in nav_state.open_ids:
                continue
            nav_action = Action(Verb.NAVIGATE, wrong)
            if oracle.is_progress(nav_state, nav_action):
                continue
            rationale = (
                f"The {spec_rec.category} seems like the right destination; "
                f"{nav_action.render()} to drop it off."
            )
            corrupted = _replace(
                records, feeder, record_from_text(rationale, nav_action.render())
            )
            # A place that names the old receptacle must follow the retarget.
            if resolve_receptacle(place_state, record.action.argument) is not None:
                corrupted = _replace(
                    corrupted,
                    i,
                    record_from_text(record.rationale, Action(Verb.PLACE, wrong).render()),
                )
            out.append((MistakeSpec("wrong_receptacle", feeder, nav_action, rationale), corrupted))
    return out


def _precondition_candidates(
    states: list[EnvState],
    records: Sequence[ActionRecord],
    oracle: PlanOracle,
) -> list[tuple[MistakeSpec, list[ActionRecord]]]:
    out = []
    for i in range(len(records) - 1):
        if records[i].action.verb not in (Verb.NAVIGATE, Verb.FIND):
            continue
        if records[i + 1].action.verb != Verb.PICK:
            continue
        early_pick = records[i + 1].action
        # The swap only injects a failure if the pick cannot already
        # succeed where the agent stands.
        _, outcome = world_step(states[i], early_pick)
        if outcome == OUTCOME_OK:
            continue
        rationale = f"{early_pick.render()} should work from right here."
        corrupted = list(records)
        corrupted[i] = record_from_text(rationale, early_pick.render())
        corrupted[i + 1] = records[i]
        out.append(
            (MistakeSpec("precondition_violation", i, early_pick, rationale), corrupted)
        )
    for i, record in enumerate(records):
        if record.action.verb != Verb.PICK or states[i].holding is not None:
            continue
        # Place before pick: the agent holds nothing yet.
        action = Action(Verb.PLACE, record.action.argument)
        rationale = f"{action.render()} should finish this part of the task."
        out.append(
            (
                MistakeSpec("precondition_violation", i, action, rationale),
                _replace(records, i, record_from_text(rationale, action.render())),
            )
        )
    return out


_CANDIDATE_BUILDERS = {
    "wrong_object": _wrong_object_candidates,
    "wrong_receptacle": _wrong_receptacle_candidates,
    "precondition_violation": _precondition_candidates,
}


def _realize(
    task: TaskSpec,
    initial_state: EnvState,
    records: Sequence[ActionRecord],
    spec: MistakeSpec,
    oracle: PlanOracle,
) -> tuple[Trajectory, AnnotationRecord]:
    """Re-simulate a corrupted action list and annotate it, validating that
    the mistake lands where claimed and the task genuinely fails."""
    if spec.target_step >= len(records):
        raise SynthesisError("target_step beyond the trajectory")
    state = initial_state
    steps = []
    labels = []
    for record in records:
        observation = observe(state)
        correct = oracle.is_progress(state, record.action)
        state, outcome = world_step(state, record.action)
        steps.append(Step(observation, record, outcome))
        labels.append(VERDICT_YES if correct else VERDICT_NO)
    if is_success(state, task):
        raise SynthesisError("corrupted trajectory still satisfies the goal")
    for i in range(spec.target_step):
        if labels[i] != VERDICT_YES:
            raise SynthesisError(f"pre-mistake step {i} is not oracle-correct")
    if labels[spec.target_step] != VERDICT_NO:
        raise SynthesisError("mistake step passed the oracle check")
    if (
        spec.mode == "precondition_violation"
        and steps[spec.target_step].outcome != OUTCOME_PRECONDITION_FAILED
    ):
        raise SynthesisError("precondition mistake did not fail its precondition")
    trajectory = Trajectory(
        instruction=task.instruction,
        steps=tuple(steps),
        success=False,
        label="negative",
        failure_index=spec.target_step,
    )
    texts = tuple(
        _yes_text(step.record.action)
        if label == VERDICT_YES
        else _no_text(step.record.action, step.outcome)
        for step, label in zip(steps, labels)
    )
    annotation = AnnotationRecord(
        trajectory_digest(trajectory), tuple(zip(texts, labels))
    )
    annotation.matches(trajectory)
    return trajectory, annotation


def _synthesize_mode(
    task: TaskSpec,
    initial_state: EnvState,
    states: list[EnvState],
    records: Sequence[ActionRecord],
    mode: str,
    seed: int,
    oracle: PlanOracle,
) -> tuple[Trajectory, AnnotationRecord, MistakeSpec]:
    candidates = _CANDIDATE_BUILDERS[mode](states, records, oracle)
    if not candidates:
        raise ModeUnavailableError(f"no injection site for mode {mode!r}")
    rng = rng_for(seed, "synth-site", mode)
    order = rng.permutation(len(candidates))
    last_error: Optional[SynthesisError] = None
    for index in order:
        spec, corrupted = candidates[int(index)]
        try:
            trajectory, annotation = _realize(task, initial_state, corrupted, spec, oracle)
            return trajectory, annotation, spec
        except SynthesisError as exc:
            last_error = exc
    raise ModeUnavailableError(f"no candidate for mode {mode!r} validated: {last_error}")


_TEACHER_LINE = re.compile(r"^(mode|step|action):\s*(.+)$")
_MODE_ALIASES = {
    "wrongobject": "wrong_object",
    "wrong_object": "wrong_object",
    "wrongreceptacle": "wrong_receptacle",
    "wrong_receptacle": "wrong_receptacle",
    "preconditionviolation": "precondition_violation",
    "precondition_violation": "precondition_violation",
}

MistakeTeacher = Callable[[Trajectory, TaskSpec], str]


def parse_teacher_reply(text: str) -> tuple[str, int, Action]:
    """Parse the three-line mistake-teacher reply: mode / step / action."""
    fields: dict[str, str] = {}
    for line in text.strip().splitlines():
        match = _TEACHER_LINE.match(line.strip())
        if match:
            fields[match.group(1)] = match.group(2).strip()
    missing = [key for key in ("mode", "step", "action") if key not in fields]
    if missing:
        raise SynthesisError(f"teacher reply missing fields: {', '.join(missing)}")
    mode = _MODE_ALIASES.get(fields["mode"].strip().lower().replace(" ", ""))
    if mode is None:
        raise SynthesisError(f"teacher reply names unknown mode {fields['mode']!r}")
    try:
        step_index = int(fields["step"])
    except ValueError:
        raise SynthesisError(f"teacher reply step is not an integer: {fields['step']!r}") from None
    try:
        action = parse_action(fields["action"])
    except ActionParseError as exc:
        raise SynthesisError(f"teacher reply action does not parse: {exc}") from None
    return mode, step_index, action


def synthesize_failure(
    trajectory: Trajectory,
    task: TaskSpec,
    initial_state: EnvState,
    mode: str = MODE_AUTO,
    seed: int = 0,
    generator: Union[str, MistakeTeacher] = "rule",
) -> tuple[Trajectory, AnnotationRecord]:
    """Inject one mistake into a positive trajectory; return the validated
    negative trajectory and its per-step annotations.

    ``mode`` is one of the mistake modes or "auto" (seeded-uniform over
    modes, falling back to another mode when the drawn one has no valid
    site). ``generator`` is "rule" or a teacher callable returning a
    mode/step/action reply; teacher proposals are validated by
    re-simulation and rejected (logged, never repaired) when they do not
    produce a genuine failure.
    """
    if trajectory.label != "positive" or not trajectory.success:
        raise SynthesisError("failure synthesis starts from a positive trajectory")
    if mode != MODE_AUTO and mode not in FAILURE_MODES:
        raise ValueError(f"unknown mode {mode!r}")
    records = [step.record for step in trajectory.steps]
    states = _clean_states(initial_state, records)
    oracle = plan_oracle_for(initial_state.scene, task.goal)

    if callable(generator):
        try:
            reply = generator(trajectory, task)
        except Exception as exc:
            raise SynthesisError(f"mistake teacher failed: {exc}") from exc
        teacher_mode, step_index, action = parse_teacher_reply(reply)
        if mode != MODE_AUTO and teacher_mode != mode:
            raise SynthesisError(
                f"teacher proposed mode {teacher_mode!r}, requested {mode!r}"
            )
        if not 0 <= step_index < len(records):
            raise SynthesisError(f"teacher step {step_index} out of range")
        if action.canonical() == records[step_index].action.canonical():
            raise SynthesisError("teacher replacement equals the original action")
        rationale = f"{action.render()} looks like the right move here."
        spec = MistakeSpec(teacher_mode, step_index, action, rationale)
        corrupted = _replace(
            records, step_index, record_from_text(rationale, action.render())
        )
        try:
            result, annotation = _realize(task, initial_state, corrupted, spec, oracle)
        except SynthesisError as exc:
            log.warning("rejected teacher mistake (%s): %s", teacher_mode, exc)
            raise
        return result, annotation
    if generator != "rule":
        raise ValueError(f"unknown generator {generator!r}")

    if mode != MODE_AUTO:
        result, annotation, _ = _synthesize_mode(
            task, initial_state, states, records, mode, seed, oracle
        )
        return result, annotation
    rng = rng_for(seed, "synth-mode")
    order = [FAILURE_MODES[int(i)] for i in rng.permutation(len(FAILURE_MODES))]
    last: Optional[ModeUnavailableError] = None
    for chosen in order:
        try:
            result, annotation, _ = _synthesize_mode(
                task, initial_state, states, records, chosen, seed, oracle
            )
            return result, annotation
        except ModeUnavailableError as exc:
            last = exc
    raise ModeUnavailableError(f"no mistake mode applicable: {last}")


def classify_mistake(trajectory: Trajectory) -> str:
    """Failure mode of a synthesized negative trajectory, read off the
    mistaken step: a precondition failure is precondition_violation, an
    executed wrong pick is wrong_object, and an executed wrong navigation
    or placement is wrong_receptacle."""
    if trajectory.label != "negative" or trajectory.failure_index is None:
        raise ValueError("classify_mistake expects a negative trajectory")
    mistake = trajectory.steps[trajectory.failure_index]
    if mistake.outcome == OUTCOME_PRECONDITION_FAILED:
        return "precondition_violation"
    if mistake.record.action.verb == Verb.PICK:
        return "wrong_object"
    return "wrong_receptacle"


# -- Dataset assembly --------------------------------------------------------------


def flatten_annotation(
    trajectory: Trajectory, annotation: AnnotationRecord
) -> list[VerifierSample]:
    """One VerifierSample per step: instruction + prior action texts +
    decision-time observation, paired with the annotated verdict."""
    annotation.matches(trajectory)
    samples = []
    prior: list[str] = []
    for step, (text, label) in zip(trajectory.steps, annotation.entries):
        samples.append(
            VerifierSample(
                instruction=trajectory.instruction,
                prior_actions=tuple(prior),
                observation=step.observation,
                candidate_rationale=step.record.rationale,
                candidate_action_text=step.record.action_text,
                verification_text=text,
                label=label,
            )
        )
        prior.append(step.record.action_text)
    return samples


def build_verifier_dataset(
    positives: Sequence[tuple[Trajectory, AnnotationRecord]],
    negatives: Sequence[tuple[Trajectory, AnnotationRecord]],
    seed: int = 0,
) -> list[VerifierSample]:
    """Flatten annotated trajectories and balance yes/no classes."""
    if not positives or not negatives:
        raise ValueError("both annotation pools must be nonempty")
    yes_pool: list[VerifierSample] = []
    no_pool: list[VerifierSample] = []
    for trajectory, annotation in list(positives) + list(negatives):
        for sample in flatten_annotation(trajectory, annotation):
            (yes_pool if sample.label == VERDICT_YES else no_pool).append(sample)
    return balance(yes_pool, no_pool, seed)

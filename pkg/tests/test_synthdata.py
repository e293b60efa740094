"""Failure synthesis, rationale augmentation, and verifier dataset assembly."""

from __future__ import annotations

import pytest

from conftest import build_small_scene, oracle_trajectory
from veriact.actors.base import FAILURE_MODES
from veriact.synthdata import (
    AnnotationRecord,
    MistakeSpec,
    ModeUnavailableError,
    SynthesisError,
    annotate_positive,
    augment_cot,
    build_verifier_dataset,
    classify_mistake,
    flatten_annotation,
    parse_teacher_reply,
    rule_cot_teacher,
    synthesize_failure,
)
from veriact.trajectory import (
    Step,
    Trajectory,
    parse_verdict_tag,
    record_from_text,
    trajectory_digest,
)
from veriact.world.engine import is_success, observe, step as world_step
from veriact.world.planner import optimal_plan
from veriact.world.tasks import generate_pick_place
from veriact.world.types import (
    Action,
    Goal,
    OUTCOME_OK,
    OUTCOME_PRECONDITION_FAILED,
    PlacementGoal,
    TaskSpec,
    Verb,
    make_state,
)


def _replay_positive(task, state, action_texts, rationales=None):
    """Drive the engine through the given actions and wrap the result as a
    positive trajectory. Every step must execute and the goal must hold at
    the end; rationales default to empty so augmentation has work to do."""
    steps = []
    for i, text in enumerate(action_texts):
        rationale = rationales[i] if rationales is not None else ""
        record = record_from_text(rationale, text)
        observation = observe(state)
        state, outcome = world_step(state, record.action)
        assert outcome == OUTCOME_OK, (i, text, outcome)
        steps.append(Step(observation, record, outcome))
    assert is_success(state, task)
    return Trajectory(
        instruction=task.instruction,
        steps=tuple(steps),
        success=True,
        label="positive",
        failure_index=None,
    )


def _pick_place(seed: int = 0, n_objects: int = 1):
    task, state = generate_pick_place(seed, n_objects=n_objects)
    plan = optimal_plan(state, task)
    assert plan is not None
    trajectory = _replay_positive(task, state, [a.render() for a in plan])
    return task, state, trajectory


def _small_setup():
    """Handcrafted four-step episode: apple and book share a shelf, so a
    wrong pick is always available."""
    scene = build_small_scene()
    state = make_state(
        scene,
        agent_at="start",
        holding=None,
        placements={"apple_0": "shelf_0", "book_0": "shelf_0", "mug_0": "cabinet_0"},
        step_limit=20,
    )
    task = TaskSpec(
        instruction="Move the apple to the table.",
        category="Base",
        goal=Goal(placements=(PlacementGoal("table_0", object_ids=("apple_0",)),)),
        step_limit=20,
    )
    texts = ["navigate(shelf_0)", "pick(apple_0)", "navigate(table_0)", "place(table_0)"]
    return task, state, _replay_positive(task, state, texts)


# -- Spec and annotation records --------------------------------------------------


class TestMistakeSpec:
    def test_valid(self):
        spec = MistakeSpec("wrong_object", 1, Action(Verb.PICK, "book_0"), "oops")
        assert spec.mode == "wrong_object"

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValueError, match="unknown mistake mode"):
            MistakeSpec("typo_mode", 1, Action(Verb.PICK, "book_0"), "oops")

    def test_negative_step_rejected(self):
        with pytest.raises(ValueError, match="nonnegative"):
            MistakeSpec("wrong_object", -1, Action(Verb.PICK, "book_0"), "oops")


class TestAnnotationRecord:
    def test_label_must_be_yes_or_no(self):
        with pytest.raises(ValueError, match="yes/no"):
            AnnotationRecord("t", (("fine. action_is_correct: yes", "maybe"),))

    def test_text_tag_must_agree_with_label(self):
        with pytest.raises(ValueError, match="disagrees"):
            AnnotationRecord("t", (("fine. action_is_correct: yes", "no"),))

    def test_labels_accessor(self):
        record = AnnotationRecord(
            "t",
            (
                ("ok. action_is_correct: yes", "yes"),
                ("bad. action_is_correct: no", "no"),
            ),
        )
        assert record.labels() == ("yes", "no")

    def test_matches_requires_one_entry_per_step(self):
        _, _, trajectory = _small_setup()
        record = AnnotationRecord("t", (("ok. action_is_correct: yes", "yes"),))
        with pytest.raises(ValueError, match="one annotation entry per step"):
            record.matches(trajectory)

    def test_matches_requires_all_yes_for_positive(self):
        _, _, trajectory = _small_setup()
        entries = tuple(
            ("ok. action_is_correct: yes", "yes") for _ in trajectory.steps[:-1]
        ) + (("bad. action_is_correct: no", "no"),)
        with pytest.raises(ValueError, match="all-yes"):
            AnnotationRecord("t", entries).matches(trajectory)


# -- Rationale augmentation --------------------------------------------------------


class TestAugmentCot:
    def test_rule_teacher_names_task_and_action(self):
        _, _, trajectory = _small_setup()
        text = rule_cot_teacher(trajectory, 2)
        assert trajectory.instruction in text
        assert "navigate(table_0)" in text

    def test_fills_every_step_and_keeps_actions(self):
        task, _, trajectory = _small_setup()
        out = augment_cot(trajectory)
        assert len(out.steps) == len(trajectory.steps)
        for before, after in zip(trajectory.steps, out.steps):
            assert after.record.rationale.strip()
            assert task.instruction in after.record.rationale
            assert after.record.action_text == before.record.action_text
            assert after.outcome == before.outcome
            assert after.observation == before.observation
        assert out.success and out.label == "positive"

    def test_existing_rationales_kept_by_default(self):
        task, state, _ = _small_setup()
        texts = ["navigate(shelf_0)", "pick(apple_0)", "navigate(table_0)", "place(table_0)"]
        rationales = ["head to the shelf first", "", "", ""]
        trajectory = _replay_positive(task, state, texts, rationales)
        out = augment_cot(trajectory)
        assert out.steps[0].record.rationale == "head to the shelf first"
        assert out.steps[1].record.rationale

    def test_overwrite_replaces_existing_rationales(self):
        task, state, _ = _small_setup()
        texts = ["navigate(shelf_0)", "pick(apple_0)", "navigate(table_0)", "place(table_0)"]
        rationales = ["stale note", "stale note", "stale note", "stale note"]
        trajectory = _replay_positive(task, state, texts, rationales)
        out = augment_cot(trajectory, overwrite=True)
        for step in out.steps:
            assert step.record.rationale != "stale note"

    def test_custom_teacher_is_used(self):
        _, _, trajectory = _small_setup()
        out = augment_cot(trajectory, teacher=lambda t, i: f"step {i} reasoning")
        assert [s.record.rationale for s in out.steps] == [
            "step 0 reasoning",
            "step 1 reasoning",
            "step 2 reasoning",
            "step 3 reasoning",
        ]

    def test_negative_trajectory_rejected(self):
        task, state, trajectory = _small_setup()
        negative, _ = synthesize_failure(trajectory, task, state, mode="wrong_object")
        with pytest.raises(SynthesisError, match="positive"):
            augment_cot(negative)

    def test_teacher_exception_names_the_step(self):
        _, _, trajectory = _small_setup()

        def teacher(t, i):
            if i == 2:
                raise RuntimeError("boom")
            return "fine"

        with pytest.raises(SynthesisError, match="step 2"):
            augment_cot(trajectory, teacher=teacher)

    def test_teacher_empty_output_names_the_step(self):
        _, _, trajectory = _small_setup()
        with pytest.raises(SynthesisError, match="step 0"):
            augment_cot(trajectory, teacher=lambda t, i: "   ")


# -- Positive annotation -----------------------------------------------------------


class TestAnnotatePositive:
    def test_every_step_yes(self):
        _, _, trajectory = _small_setup()
        record = annotate_positive(trajectory)
        assert record.trajectory_id == trajectory_digest(trajectory)
        assert len(record.entries) == len(trajectory.steps)
        assert set(record.labels()) == {"yes"}
        for text, _ in record.entries:
            assert parse_verdict_tag(text) == "yes"

    def test_texts_mention_the_action(self):
        _, _, trajectory = _small_setup()
        record = annotate_positive(trajectory)
        for step, (text, _) in zip(trajectory.steps, record.entries):
            assert step.record.action.render() in text

    def test_negative_trajectory_rejected(self):
        task, state, trajectory = _small_setup()
        negative, _ = synthesize_failure(trajectory, task, state, mode="wrong_object")
        with pytest.raises(SynthesisError, match="positive"):
            annotate_positive(negative)

    def test_custom_teacher_text_used_verbatim(self):
        _, _, trajectory = _small_setup()
        record = annotate_positive(
            trajectory, teacher=lambda t, i: f"step {i} holds. action_is_correct: yes"
        )
        assert record.entries[1][0] == "step 1 holds. action_is_correct: yes"

    def test_teacher_without_yes_tag_rejected(self):
        _, _, trajectory = _small_setup()
        with pytest.raises(SynthesisError, match="step 0"):
            annotate_positive(trajectory, teacher=lambda t, i: "looks good to me")

    def test_teacher_exception_names_the_step(self):
        _, _, trajectory = _small_setup()

        def teacher(t, i):
            if i == 3:
                raise RuntimeError("boom")
            return "ok. action_is_correct: yes"

        with pytest.raises(SynthesisError, match="step 3"):
            annotate_positive(trajectory, teacher=teacher)


# -- Failure synthesis: rule generator ---------------------------------------------


class TestSynthesizeFailure:
    @pytest.mark.parametrize("mode", FAILURE_MODES)
    def test_mode_produces_validated_negative(self, mode):
        task, state, trajectory = _pick_place(seed=0)
        negative, annotation = synthesize_failure(trajectory, task, state, mode=mode)
        assert negative.label == "negative"
        assert not negative.success
        assert negative.failure_index is not None
        assert classify_mistake(negative) == mode
        annotation.matches(negative)
        assert annotation.trajectory_id == trajectory_digest(negative)
        labels = annotation.labels()
        assert labels[negative.failure_index] == "no"
        assert all(label == "yes" for label in labels[: negative.failure_index])

    @pytest.mark.parametrize("mode", FAILURE_MODES)
    def test_negative_replays_and_fails_the_goal(self, mode):
        """Independent re-simulation: recorded outcomes are ground truth and
        the final state misses the goal."""
        task, state, trajectory = _pick_place(seed=1)
        negative, _ = synthesize_failure(trajectory, task, state, mode=mode)
        current = state
        for step in negative.steps:
            assert step.observation == observe(current)
            current, outcome = world_step(current, step.record.action)
            assert outcome == step.outcome
        assert not is_success(current, task)

    def test_wrong_object_redirects_a_pick(self):
        task, state, trajectory = _pick_place(seed=2)
        negative, _ = synthesize_failure(trajectory, task, state, mode="wrong_object")
        mistake = negative.steps[negative.failure_index]
        assert mistake.record.action.verb == Verb.PICK
        assert mistake.outcome == OUTCOME_OK
        original = trajectory.steps[negative.failure_index].record.action
        assert mistake.record.action.argument != original.argument

    def test_wrong_receptacle_retargets_the_feeder_navigation(self):
        task, state, trajectory = _pick_place(seed=3)
        negative, _ = synthesize_failure(trajectory, task, state, mode="wrong_receptacle")
        mistake = negative.steps[negative.failure_index]
        assert mistake.record.action.verb in (Verb.NAVIGATE, Verb.FIND)
        assert mistake.outcome == OUTCOME_OK
        # The downstream deposit still executes, landing the object wrong.
        assert all(step.outcome == OUTCOME_OK for step in negative.steps)

    def test_precondition_violation_fails_at_the_mistake(self):
        task, state, trajectory = _pick_place(seed=4)
        negative, _ = synthesize_failure(
            trajectory, task, state, mode="precondition_violation"
        )
        mistake = negative.steps[negative.failure_index]
        assert mistake.outcome == OUTCOME_PRECONDITION_FAILED

    def test_same_seed_is_deterministic(self):
        task, state, trajectory = _pick_place(seed=5)
        first, first_ann = synthesize_failure(trajectory, task, state, seed=11)
        second, second_ann = synthesize_failure(trajectory, task, state, seed=11)
        assert trajectory_digest(first) == trajectory_digest(second)
        assert first_ann == second_ann

    def test_auto_covers_every_mode_across_seeds(self):
        task, state, trajectory = _pick_place(seed=6, n_objects=2)
        seen = {
            classify_mistake(
                synthesize_failure(trajectory, task, state, seed=seed)[0]
            )
            for seed in range(24)
        }
        assert seen == set(FAILURE_MODES)

    def test_generated_categories_support_synthesis(self):
        for category in ("Base", "MultipleObjects", "Conditional"):
            task, state, trajectory = oracle_trajectory(category, task_seed=1)
            negative, annotation = synthesize_failure(trajectory, task, state)
            assert negative.label == "negative"
            annotation.matches(negative)

    def test_negative_source_rejected(self):
        task, state, trajectory = _pick_place(seed=7)
        negative, _ = synthesize_failure(trajectory, task, state)
        with pytest.raises(SynthesisError, match="positive"):
            synthesize_failure(negative, task, state)

    def test_unknown_mode_rejected(self):
        task, state, trajectory = _pick_place(seed=7)
        with pytest.raises(ValueError, match="unknown mode"):
            synthesize_failure(trajectory, task, state, mode="typo")

    def test_unknown_generator_rejected(self):
        task, state, trajectory = _pick_place(seed=7)
        with pytest.raises(ValueError, match="unknown generator"):
            synthesize_failure(trajectory, task, state, generator="llm")

    def test_mismatched_initial_state_rejected(self):
        task, state, trajectory = _small_setup()
        moved = make_state(
            state.scene,
            agent_at="start",
            holding=None,
            placements={"apple_0": "cabinet_0", "book_0": "shelf_0", "mug_0": "cabinet_0"},
            step_limit=20,
        )
        with pytest.raises(SynthesisError, match="fails to replay at step 1"):
            synthesize_failure(trajectory, task, moved)

    def test_mode_without_injection_site_raises(self):
        """One-step episode (the object is already in hand at the target):
        no pick to redirect, no feeder navigation, no swap site."""
        scene = build_small_scene()
        state = make_state(
            scene,
            agent_at="table_0",
            holding="apple_0",
            placements={"book_0": "shelf_0", "mug_0": "cabinet_0"},
            step_limit=20,
        )
        task = TaskSpec(
            instruction="Put down the apple on the table.",
            category="Base",
            goal=Goal(placements=(PlacementGoal("table_0", object_ids=("apple_0",)),)),
            step_limit=20,
        )
        trajectory = _replay_positive(task, state, ["place(table_0)"])
        for mode in FAILURE_MODES:
            with pytest.raises(ModeUnavailableError):
                synthesize_failure(trajectory, task, state, mode=mode)
        with pytest.raises(ModeUnavailableError, match="no mistake mode applicable"):
            synthesize_failure(trajectory, task, state)


class TestClassifyMistake:
    def test_positive_trajectory_rejected(self):
        _, _, trajectory = _small_setup()
        with pytest.raises(ValueError, match="negative"):
            classify_mistake(trajectory)


# -- Failure synthesis: teacher generator ------------------------------------------


class TestParseTeacherReply:
    def test_happy_path(self):
        mode, step_index, action = parse_teacher_reply(
            "mode: wrong_object\nstep: 1\naction: pick(book_0)"
        )
        assert mode == "wrong_object"
        assert step_index == 1
        assert action == Action(Verb.PICK, "book_0")

    @pytest.mark.parametrize(
        "alias,expected",
        [
            ("Wrong Object", "wrong_object"),
            ("WRONG_RECEPTACLE", "wrong_receptacle"),
            ("precondition violation", "precondition_violation"),
        ],
    )
    def test_mode_aliases(self, alias, expected):
        mode, _, _ = parse_teacher_reply(
            f"mode: {alias}\nstep: 0\naction: navigate(shelf_0)"
        )
        assert mode == expected

    def test_surrounding_prose_ignored(self):
        reply = (
            "Here is my proposed mistake.\n"
            "mode: wrong_object\n"
            "step: 1\n"
            "action: pick(book_0)\n"
            "This should derail the episode."
        )
        assert parse_teacher_reply(reply)[0] == "wrong_object"

    def test_missing_fields_listed(self):
        with pytest.raises(SynthesisError, match="step, action"):
            parse_teacher_reply("mode: wrong_object")

    def test_non_integer_step_rejected(self):
        with pytest.raises(SynthesisError, match="not an integer"):
            parse_teacher_reply("mode: wrong_object\nstep: two\naction: pick(book_0)")

    def test_unparsable_action_rejected(self):
        with pytest.raises(SynthesisError, match="does not parse"):
            parse_teacher_reply("mode: wrong_object\nstep: 1\naction: grab the book")

    def test_unknown_mode_rejected(self):
        with pytest.raises(SynthesisError, match="unknown mode"):
            parse_teacher_reply("mode: sideways\nstep: 1\naction: pick(book_0)")


class TestTeacherGenerator:
    @staticmethod
    def _teacher(reply):
        return lambda trajectory, task: reply

    def test_valid_proposal_is_realized(self):
        task, state, trajectory = _small_setup()
        teacher = self._teacher("mode: wrong_object\nstep: 1\naction: pick(book_0)")
        negative, annotation = synthesize_failure(
            trajectory, task, state, generator=teacher
        )
        assert negative.failure_index == 1
        assert negative.steps[1].record.action == Action(Verb.PICK, "book_0")
        assert classify_mistake(negative) == "wrong_object"
        annotation.matches(negative)

    def test_requested_mode_must_match_teacher_mode(self):
        task, state, trajectory = _small_setup()
        teacher = self._teacher("mode: wrong_object\nstep: 1\naction: pick(book_0)")
        with pytest.raises(SynthesisError, match="proposed mode"):
            synthesize_failure(
                trajectory, task, state, mode="wrong_receptacle", generator=teacher
            )

    def test_step_out_of_range_rejected(self):
        task, state, trajectory = _small_setup()
        teacher = self._teacher("mode: wrong_object\nstep: 9\naction: pick(book_0)")
        with pytest.raises(SynthesisError, match="out of range"):
            synthesize_failure(trajectory, task, state, generator=teacher)

    def test_replacement_equal_to_original_rejected(self):
        task, state, trajectory = _small_setup()
        teacher = self._teacher("mode: wrong_object\nstep: 1\naction: PICK( apple_0 )")
        with pytest.raises(SynthesisError, match="equals the original"):
            synthesize_failure(trajectory, task, state, generator=teacher)

    def test_teacher_exception_wrapped(self):
        task, state, trajectory = _small_setup()

        def teacher(t, ts):
            raise RuntimeError("model unavailable")

        with pytest.raises(SynthesisError, match="mistake teacher failed"):
            synthesize_failure(trajectory, task, state, generator=teacher)

    def test_non_failing_proposal_rejected_not_repaired(self):
        """A padded episode recovers from the injected stumble and still
        meets the goal, so the candidate must be discarded."""
        scene = build_small_scene()
        state = make_state(
            scene,
            agent_at="start",
            holding=None,
            placements={"apple_0": "shelf_0", "book_0": "shelf_0", "mug_0": "cabinet_0"},
            step_limit=20,
        )
        task = TaskSpec(
            instruction="Move the apple to the table.",
            category="Base",
            goal=Goal(placements=(PlacementGoal("table_0", object_ids=("apple_0",)),)),
            step_limit=20,
        )
        texts = [
            "navigate(shelf_0)",
            "pick(apple_0)",
            "navigate(cabinet_0)",
            "navigate(table_0)",
            "place(table_0)",
        ]
        trajectory = _replay_positive(task, state, texts)
        teacher = self._teacher(
            "mode: wrong_receptacle\nstep: 2\naction: navigate(shelf_0)"
        )
        with pytest.raises(SynthesisError, match="satisfies the goal"):
            synthesize_failure(trajectory, task, state, generator=teacher)


# -- Dataset assembly --------------------------------------------------------------


class TestFlattenAnnotation:
    def test_one_sample_per_step_with_growing_prior(self):
        task, state, trajectory = _pick_place(seed=8)
        negative, annotation = synthesize_failure(trajectory, task, state)
        samples = flatten_annotation(negative, annotation)
        assert len(samples) == len(negative.steps)
        texts = [step.record.action_text for step in negative.steps]
        for i, (sample, step) in enumerate(zip(samples, negative.steps)):
            assert sample.instruction == task.instruction
            assert sample.prior_actions == tuple(texts[:i])
            assert sample.observation == step.observation
            assert sample.candidate_rationale == step.record.rationale
            assert sample.candidate_action_text == step.record.action_text
            assert sample.label == annotation.entries[i][1]
            assert sample.verification_text == annotation.entries[i][0]

    def test_mismatched_annotation_rejected(self):
        _, _, trajectory = _small_setup()
        record = AnnotationRecord("t", (("ok. action_is_correct: yes", "yes"),))
        with pytest.raises(ValueError, match="one annotation entry per step"):
            flatten_annotation(trajectory, record)


class TestBuildVerifierDataset:
    def _pools(self):
        positives, negatives = [], []
        for seed in range(3):
            task, state, trajectory = _pick_place(seed=seed)
            positives.append((trajectory, annotate_positive(trajectory)))
            negatives.append(synthesize_failure(trajectory, task, state, seed=seed))
        return positives, negatives

    def test_classes_are_balanced(self):
        positives, negatives = self._pools()
        samples = build_verifier_dataset(positives, negatives)
        yes = sum(1 for s in samples if s.label == "yes")
        no = sum(1 for s in samples if s.label == "no")
        assert yes == no > 0

    def test_deterministic_per_seed(self):
        positives, negatives = self._pools()
        first = build_verifier_dataset(positives, negatives, seed=4)
        second = build_verifier_dataset(positives, negatives, seed=4)
        assert first == second

    def test_empty_pool_rejected(self):
        positives, negatives = self._pools()
        with pytest.raises(ValueError, match="nonempty"):
            build_verifier_dataset([], negatives)
        with pytest.raises(ValueError, match="nonempty"):
            build_verifier_dataset(positives, [])

"""Acceptance gate: ten end-to-end behavioral criteria, one test each.

Every test computes its measurements first, prints a single [PASS]/[FAIL]
line with the numbers straight to the terminal, then asserts, so a full
run reads as a checklist. Seeds are fixed; all arms are simulated, so the
numbers are reproducible bit for bit.
"""

from __future__ import annotations

import io
import itertools
import time
from collections import Counter

import yaml

from veriact.actors.base import FAILURE_MODES, PolicyContext, make_candidate
from veriact.actors.simulated import (
    BernoulliPolicy,
    OraclePolicy,
    OracleVerifier,
    SystematicErrorPolicy,
    TruthChannel,
    bernoulli_hit,
    wrong_receptacle_actions,
)
from veriact.bench.cli import main
from veriact.bench.config import ExperimentConfig, PolicyConfig, SuiteEntry, VerifierConfig
from veriact.bench.latency import LatencyModel, simulate_latency
from veriact.bench.runner import run_experiment, sweep_matched_compute
from veriact.seeding import derive_seed
from veriact.selection import (
    METHOD_GREEDY,
    METHOD_SELF_CONSISTENCY,
    METHOD_VEGAS,
    analytic_coverage,
    estimate_coverage,
    select_greedy,
    select_self_consistency,
    select_vegas,
)
from veriact.synthdata import (
    annotate_positive,
    augment_cot,
    build_verifier_dataset,
    classify_mistake,
    synthesize_failure,
)
from veriact.trajectory import (
    Step,
    Trajectory,
    decompose,
    deserialize_chat,
    record_from_text,
    serialize_chat,
)
from veriact.world.engine import is_success, observe, step as world_step
from veriact.world.planner import optimal_plan, plan_oracle_for
from veriact.world.tasks import generate_pick_place
from veriact.world.types import OUTCOME_OK, Observation


# Filled by _check; conftest prints it as a terminal-summary checklist.
RESULT_LINES: list[str] = []


def _check(label: str, ok: bool, detail: str) -> None:
    verdict = "PASS" if ok else "FAIL"
    line = f"[{verdict}] {label}: {detail}"
    RESULT_LINES.append(line)
    print(line)
    assert ok, f"{label}: {detail}"


def _oracle_trajectory(seed: int, n_objects: int = 1):
    """Shortest-plan positive trajectory for a pick-and-place task."""
    task, state = generate_pick_place(seed, n_objects=n_objects)
    plan = optimal_plan(state, task)
    assert plan is not None
    steps = []
    current = state
    for action in plan:
        record = record_from_text("", action.render())
        observation = observe(current)
        current, outcome = world_step(current, record.action)
        assert outcome == OUTCOME_OK
        steps.append(Step(observation, record, outcome))
    assert is_success(current, task)
    trajectory = Trajectory(
        instruction=task.instruction,
        steps=tuple(steps),
        success=True,
        label="positive",
        failure_index=None,
    )
    return task, state, trajectory


def _first_decision(seed: int = 0, n_objects: int = 1):
    task, state = generate_pick_place(seed, n_objects=n_objects)
    truth = TruthChannel(task, plan_oracle_for(state.scene, task.goal), state)
    context = PolicyContext(task.instruction, (), observe(state))
    return truth, context


_BENCH_OBSERVATION = Observation(
    location="start",
    location_is_open=None,
    visible=(),
    holding=None,
    last_action_outcome="ok",
)


def test_c01_coverage_follows_the_binomial_law():
    context = PolicyContext("pick the target item", (), _BENCH_OBSERVATION)
    started = time.perf_counter()
    worst = 0.0
    for p in (0.3, 0.7):
        policy = BernoulliPolicy(p)
        for n in (2, 4, 10):
            estimate = estimate_coverage(
                policy,
                bernoulli_hit,
                lambda trial: context,
                n=n,
                trials=10_000,
                seed=derive_seed(5, "acceptance-coverage", p, n),
            )
            worst = max(worst, abs(estimate.p_hat - analytic_coverage(p, n)))
    elapsed = time.perf_counter() - started
    _check(
        "C1 coverage law",
        worst <= 0.02 and elapsed < 10.0,
        f"max |p_hat - (1-(1-p)^n)| = {worst:.4f} over 6 cells (10k trials each) "
        f"in {elapsed:.1f}s",
    )


class _PatternPolicy:
    """Emits a fixed correct/wrong action per slot."""

    def __init__(self, texts):
        self.texts = texts

    def propose(self, context, n, temperature, seed):
        assert n == len(self.texts)
        return [make_candidate(i, "", text) for i, text in enumerate(self.texts)]


def test_c02_exhaustive_verified_selection_picks_a_correct_candidate():
    truth, context = _first_decision()
    correct = truth.optimal_action()
    wrong = wrong_receptacle_actions(truth)[0]
    cases = 0
    misses = 0
    started = time.perf_counter()
    for n in range(1, 5):
        for m in range(1, 4):
            for bits in itertools.product((0, 1), repeat=n):
                texts = [(correct if b else wrong).render() for b in bits]
                verifier = OracleVerifier(truth)
                action, audit = select_vegas(
                    context, _PatternPolicy(texts), verifier, n, m, 0.7, seed=cases
                )
                cases += 1
                if audit.llm_calls != n + n * m:
                    misses += 1
                elif any(bits):
                    if not truth.is_progress(action):
                        misses += 1
                    elif audit.scoreboard.chosen_index != bits.index(1):
                        misses += 1
                elif truth.is_progress(action):
                    misses += 1
    elapsed = time.perf_counter() - started
    _check(
        "C2 exhaustive verified selection",
        misses == 0 and elapsed < 1.0,
        f"{cases} (n<=4, m<=3, correctness pattern) cases, {misses} misses, "
        f"perfect verifier always surfaces the first correct candidate "
        f"in {elapsed:.2f}s",
    )


def _arm_report(method: str, *, episodes: int, seeds, n=1, m=1, n_objects=2,
                start_at_source=False, policy=None, verifier=None) -> "RunReport":
    config = ExperimentConfig(
        method=method,
        n=n,
        m=m,
        suite=(
            SuiteEntry(
                "suite",
                episodes,
                pick_place_objects=n_objects,
                start_at_source=start_at_source,
            ),
        ),
        seeds=tuple(seeds),
        policy=policy if policy is not None else PolicyConfig(kind="noisy", correct_prob=0.6),
        verifier=verifier,
    )
    return run_experiment(config)


def test_c03_verified_selection_rescues_a_noisy_policy():
    """Eight optimal steps at 0.6 per-step accuracy: greedy compounds to
    ~1.7% while best-of-16 with one oracle vote each is near-ceiling."""
    seeds = (0, 1, 2)
    vegas = _arm_report(
        METHOD_VEGAS,
        episodes=500,
        seeds=seeds,
        n=16,
        m=1,
        verifier=VerifierConfig(kind="oracle"),
    )
    greedy = _arm_report(METHOD_GREEDY, episodes=500, seeds=seeds)
    gap = vegas.average.mean - greedy.average.mean
    sigma = (vegas.average.std**2 / 3 + greedy.average.std**2 / 3) ** 0.5
    ok = vegas.average.mean >= 0.95 and greedy.average.mean <= 0.05 and gap > 3 * sigma
    _check(
        "C3 selection scaling",
        ok,
        f"vegas(16,1) = {vegas.average.mean:.3f}, greedy = {greedy.average.mean:.3f} "
        f"(500 episodes x 3 seeds, 8-step tasks), gap {gap:.3f} > 3 sigma ({3 * sigma:.3f})",
    )


def test_c04_uninformative_verifier_degrades_to_random_selection():
    """With 50% flip rates each vote is a coin toss, so the chosen candidate
    is just one more policy sample: best-of-n collapses to the single-sample
    baseline on both a long and a short horizon."""
    coin = VerifierConfig(kind="noisy", fpr=0.5, fnr=0.5)
    vegas_long = _arm_report(
        METHOD_VEGAS, episodes=1250, seeds=(0,), n=8, m=3, verifier=coin
    )
    greedy_long = _arm_report(METHOD_GREEDY, episodes=1250, seeds=(0,))
    diff_long = abs(vegas_long.average.mean - greedy_long.average.mean)

    vegas_short = _arm_report(
        METHOD_VEGAS,
        episodes=3500,
        seeds=(0,),
        n=8,
        m=3,
        n_objects=1,
        start_at_source=True,
        verifier=coin,
    )
    greedy_short = _arm_report(
        METHOD_GREEDY, episodes=3500, seeds=(0,), n_objects=1, start_at_source=True
    )
    expected_short = 0.6**3
    diff_short = abs(vegas_short.average.mean - greedy_short.average.mean)
    ok = (
        diff_long <= 0.03
        and diff_short <= 0.03
        and abs(vegas_short.average.mean - expected_short) <= 0.03
        and abs(greedy_short.average.mean - expected_short) <= 0.03
    )
    _check(
        "C4 uninformative verifier",
        ok,
        f"8-step: vegas {vegas_long.average.mean:.3f} vs greedy "
        f"{greedy_long.average.mean:.3f} (diff {diff_long:.3f}); 3-step: "
        f"vegas {vegas_short.average.mean:.3f} vs greedy {greedy_short.average.mean:.3f} "
        f"vs 0.6^3 = {expected_short:.3f}; all within 0.03",
    )


def test_c05_systematic_errors_sink_majority_voting_but_not_verification():
    """A policy that prefers one wrong action (p=0.5) over the right one
    (p=0.3): majority voting converges on the systematic mistake at every
    budget while verified selection climbs with n."""
    config = ExperimentConfig(
        method=METHOD_VEGAS,
        n=2,
        m=5,
        suite=(SuiteEntry("suite", 320, pick_place_objects=1),),
        seeds=(0,),
        policy=PolicyConfig(kind="systematic", correct_prob=0.3, wrong_mode_prob=0.5),
        verifier=VerifierConfig(kind="oracle"),
    )
    sweep = sweep_matched_compute(config, [2, 4, 8, 16])
    by_n = {row.n: row for row in sweep.rows}
    dominance = all(row.vegas_mean >= row.self_consistency_mean for row in sweep.rows)
    strict = all(by_n[n].vegas_mean > by_n[n].self_consistency_mean for n in (8, 16))
    tails = by_n[16].vegas_mean >= 0.9 and by_n[16].self_consistency_mean <= 0.05

    # Per-decision view: the self-consistency majority lands on one wrong
    # action nearly every time.
    truth, context = _first_decision(seed=7)
    policy = SystematicErrorPolicy(truth, 0.3, 0.5)
    chosen = []
    for seed in range(40):
        action, _ = select_self_consistency(context, policy, 16, 5, 0.7, seed)
        chosen.append(action)
    wrong_picks = sum(1 for a in chosen if not truth.is_progress(a))
    modal_share = Counter(a.canonical() for a in chosen).most_common(1)[0][1]
    converges = wrong_picks >= 36 and modal_share >= 32

    ok = dominance and strict and tails and converges
    curve = ", ".join(
        f"n={row.n}: {row.vegas_mean:.2f}/{row.self_consistency_mean:.2f}"
        for row in sweep.rows
    )
    _check(
        "C5 systematic errors",
        ok,
        f"vegas/self-consistency success at matched compute ({curve}); "
        f"majority picked a non-progress action {wrong_picks}/40 times "
        f"({modal_share}/40 on a single mode)",
    )


def test_c06_call_accounting_is_exact():
    checks = []
    for n, m in ((1, 1), (2, 3), (8, 5), (16, 5)):
        truth, context = _first_decision()
        policy = OraclePolicy(truth)
        verifier = OracleVerifier(truth)
        _, audit = select_vegas(context, policy, verifier, n, m, 0.7, seed=3)
        checks.append(audit.llm_calls == n + n * m)
        checks.append(policy.llm_calls == n and verifier.llm_calls == n * m)

        sc_policy = OraclePolicy(truth)
        _, sc_audit = select_self_consistency(context, sc_policy, n, m, 0.7, seed=3)
        checks.append(sc_audit.llm_calls == n * (m + 1) == sc_policy.llm_calls)
    truth, context = _first_decision()
    greedy_policy = OraclePolicy(truth)
    _, greedy_audit = select_greedy(context, greedy_policy, seed=3)
    checks.append(greedy_audit.llm_calls == 1 == greedy_policy.llm_calls)
    sixteen_five = 16 + 16 * 5
    checks.append(sixteen_five == 96 == 16 * (5 + 1))
    _check(
        "C6 call accounting",
        all(checks),
        "llm_calls == n + n*m (vegas) and n*(m+1) (self-consistency) on every "
        "grid point; (16,5) -> 96 for both; actor call counters agree",
    )


def test_c07_latency_model_keeps_verified_selection_cheap_at_width():
    model = LatencyModel()  # 2.5s per call, width 96, 0.5s round overhead
    greedy = simulate_latency(METHOD_GREEDY, 1, 0, model)
    vegas = simulate_latency(METHOD_VEGAS, 8, 5, model)
    ratio = vegas / greedy
    serial = simulate_latency(METHOD_VEGAS, 8, 5, LatencyModel(parallel_width=1))
    ok = (
        abs(greedy - 3.0) < 1e-9
        and abs(vegas - 6.0) < 1e-9
        and ratio <= 2.5
        and abs(serial - 121.0) < 1e-9
    )
    _check(
        "C7 latency model",
        ok,
        f"greedy {greedy:.1f}s, vegas(8,5) {vegas:.1f}s at width 96 "
        f"(ratio {ratio:.2f} <= 2.5); width 1 degenerates to {serial:.1f}s",
    )


def test_c08_failure_synthesis_at_scale():
    mode_counts: Counter = Counter()
    replay_failures = 0
    positives = []
    negatives = []
    annotations_ok = True
    for i in range(300):
        task, state, trajectory = _oracle_trajectory(i)
        negative, annotation = synthesize_failure(trajectory, task, state, seed=i)
        mode_counts[classify_mistake(negative)] += 1
        current = state
        consistent = True
        for step in negative.steps:
            current, outcome = world_step(current, step.record.action)
            consistent = consistent and outcome == step.outcome
        if consistent and not is_success(current, task):
            replay_failures += 1
        positive_annotation = annotate_positive(trajectory)
        oracle = plan_oracle_for(state.scene, task.goal)
        check_state = state
        for step, label in zip(trajectory.steps, positive_annotation.labels()):
            annotations_ok = annotations_ok and label == "yes"
            annotations_ok = annotations_ok and oracle.is_progress(
                check_state, step.record.action
            )
            check_state, _ = world_step(check_state, step.record.action)
        positives.append((trajectory, positive_annotation))
        negatives.append((negative, annotation))
    samples = build_verifier_dataset(positives, negatives, seed=0)
    yes = sum(1 for s in samples if s.label == "yes")
    no = len(samples) - yes
    ok = (
        replay_failures == 300
        and all(mode_counts[mode] >= 60 for mode in FAILURE_MODES)
        and annotations_ok
        and yes == no > 0
    )
    mix = ", ".join(f"{mode}={mode_counts[mode]}" for mode in FAILURE_MODES)
    _check(
        "C8 failure synthesis",
        ok,
        f"300/300 synthesized negatives replay to failure ({mix}); positive "
        f"annotations all oracle-verified yes; balanced export {yes}/{no}",
    )


def test_c09_chat_decomposition_over_a_thousand_trajectories():
    conversations = []
    structure_ok = True
    total_steps = 0
    for seed in range(1000):
        task, state, trajectory = _oracle_trajectory(seed)
        trajectory = augment_cot(trajectory)
        subs = decompose(trajectory, profile=state.scene.profile)
        structure_ok = structure_ok and len(subs) == len(trajectory.steps)
        total_steps += len(trajectory.steps)
        for sub in subs:
            loss_turns = [turn for turn in sub.turns if turn.compute_loss]
            final = sub.turns[-1]
            structure_ok = structure_ok and loss_turns == [final]
            structure_ok = structure_ok and final.role == "assistant"
            # Earlier context replays bare actions only; no rationale leaks.
            for turn in sub.turns[:-1]:
                if turn.role == "assistant":
                    structure_ok = structure_ok and turn.content.startswith("action: ")
                    structure_ok = structure_ok and "\n" not in turn.content
            structure_ok = structure_ok and "\naction: " in final.content
        conversations.extend(subs)
    first = io.StringIO()
    serialize_chat(conversations, first)
    second = io.StringIO()
    serialize_chat(deserialize_chat(io.StringIO(first.getvalue())), second)
    round_trip = first.getvalue() == second.getvalue()
    ok = structure_ok and round_trip and len(conversations) == total_steps
    _check(
        "C9 chat decomposition",
        ok,
        f"1000 trajectories -> {len(conversations)} sub-conversations (one per "
        f"step), each with exactly one final loss turn and rationale-free "
        f"context; serialization round-trips byte-identically",
    )


def test_c10_cli_runs_are_byte_deterministic(tmp_path, capsys):
    config_path = tmp_path / "experiment.yaml"
    config_path.write_text(
        yaml.safe_dump(
            {
                "format": "veriact-experiment-v1",
                "method": "vegas",
                "n": 2,
                "m": 1,
                "seeds": [0],
                "suite": [
                    {
                        "name": "s",
                        "pick_place_objects": 1,
                        "episodes": 3,
                        "start_at_source": True,
                    }
                ],
                "policy": {"kind": "noisy", "correct_prob": 0.6},
                "verifier": {"kind": "noisy", "fpr": 0.1, "fnr": 0.1},
            }
        )
    )
    run_stdout = []
    for name in ("run-a", "run-b"):
        code = main(
            ["run", "--config", str(config_path), "--out", str(tmp_path / name)]
        )
        assert code == 0
        run_stdout.append(capsys.readouterr().out)
    run_same = (
        run_stdout[0] == run_stdout[1]
        and (tmp_path / "run-a" / "report.json").read_bytes()
        == (tmp_path / "run-b" / "report.json").read_bytes()
        and (tmp_path / "run-a" / "archives" / "s-seed0.jsonl").read_bytes()
        == (tmp_path / "run-b" / "archives" / "s-seed0.jsonl").read_bytes()
    )
    for name in ("synth-a", "synth-b"):
        code = main(
            [
                "synth",
                "--count",
                "4",
                "--categories",
                "Base",
                "--seed",
                "3",
                "--out",
                str(tmp_path / name),
            ]
        )
        assert code == 0
        capsys.readouterr()
    synth_same = all(
        (tmp_path / "synth-a" / name).read_bytes()
        == (tmp_path / "synth-b" / name).read_bytes()
        for name in (
            "positives.jsonl",
            "negatives.jsonl",
            "verifier_samples.jsonl",
            "chat_sft.jsonl",
        )
    )
    _check(
        "C10 CLI determinism",
        run_same and synth_same,
        "run (report + archives + stdout) and synth (all four datasets) "
        "byte-identical across repeated invocations",
    )

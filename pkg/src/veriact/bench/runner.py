"""Episode runner and experiment orchestration.

run_episode drives one instruction episode: observe, select an action with
the configured method, execute it, repeat until the goal holds or the step
budget runs out. run_experiment executes a full suite across seeds and
aggregates a RunReport; sweep_matched_compute compares verifier-guided
selection against self-consistency at equal call budgets.

Determinism: with simulated actors every episode is a pure function of
(config, seed, suite entry, episode index). Audit wall clocks are
overwritten with the simulated latency so archives and reports are
byte-stable; real elapsed time is recorded only when remote actors are in
play.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Union

import numpy as np

from ..actors.base import ActorError, NoiseProfile, Policy, PolicyContext, Verifier
from ..actors.remote import EndpointConfig, RemoteChatClient, RemotePolicy, RemoteVerifier
from ..actors.simulated import (
    NoisyPolicy,
    NoisyVerifier,
    OraclePolicy,
    OracleVerifier,
    SystematicErrorPolicy,
    TruthChannel,
)
from ..seeding import derive_seed
from ..selection import (
    METHOD_GREEDY,
    METHOD_SELF_CONSISTENCY,
    METHOD_VEGAS,
    SelectionAudit,
    SelectionError,
    audit_to_record,
    select_greedy,
    select_self_consistency,
    select_vegas,
)
from ..trajectory import Step, Trajectory, trajectory_to_record
from ..world.engine import is_success, observe, step as world_step
from ..world.planner import plan_oracle_for
from ..world.tasks import generate_pick_place, generate_task
from ..world.types import EnvState, TaskSpec
from .config import ConfigError, ExperimentConfig, SuiteEntry
from .latency import LatencyModel, simulate_latency
from .report import (
    CategoryRow,
    RunReport,
    SweepReport,
    SweepRow,
    TimestepRow,
    render_report_csv,
    save_report,
    write_archive,
)

STATUS_SUCCESS = "success"
STATUS_FAILURE = "failure"
STATUS_INFRASTRUCTURE = "infrastructure_failure"


@dataclass
class EpisodeResult:
    status: str
    audits: list[SelectionAudit]
    trajectory: Optional[Trajectory]
    llm_calls: int
    simulated_wall_clock: float

    @property
    def success(self) -> bool:
        return self.status == STATUS_SUCCESS


def run_episode(
    task: TaskSpec,
    state: EnvState,
    method: str,
    policy: Policy,
    verifier: Optional[Verifier] = None,
    *,
    n: int = 1,
    m: int = 1,
    temperature: float = 0.7,
    verifier_temperature: Optional[float] = None,
    seed: int = 0,
    latency_model: Optional[LatencyModel] = None,
    truth: Optional[TruthChannel] = None,
    overwrite_wall_clock: bool = True,
) -> EpisodeResult:
    """Drive one episode to success, failure, or infrastructure failure.

    The history handed to actors contains executed actions only. When a
    latency model is given, each audit's wall clock is replaced by the
    simulated duration (unless ``overwrite_wall_clock`` is False, for
    remote actors where measured time is the point).
    """
    if method == METHOD_VEGAS and verifier is None:
        raise ValueError("vegas requires a verifier")
    current = state
    if truth is not None:
        truth.update(current)
    history: list[tuple] = []
    audits: list[SelectionAudit] = []
    steps: list[Step] = []
    simulated_total = 0.0
    status = STATUS_FAILURE
    while True:
        if is_success(current, task):
            status = STATUS_SUCCESS
            break
        if current.step_count >= current.step_limit:
            break
        t = current.step_count
        observation = observe(current)
        context = PolicyContext(task.instruction, tuple(history), observation)
        step_seed = derive_seed(seed, "step", t)
        try:
            if method == METHOD_GREEDY:
                action, audit = select_greedy(context, policy, step_seed, timestep=t)
            elif method == METHOD_VEGAS:
                assert verifier is not None
                action, audit = select_vegas(
                    context,
                    policy,
                    verifier,
                    n,
                    m,
                    temperature,
                    step_seed,
                    verifier_temperature=verifier_temperature,
                    timestep=t,
                )
            elif method == METHOD_SELF_CONSISTENCY:
                action, audit = select_self_consistency(
                    context, policy, n, m, temperature, step_seed, timestep=t
                )
            else:
                raise ValueError(f"unknown method {method!r}")
        except SelectionError:
            break
        except ActorError:
            status = STATUS_INFRASTRUCTURE
            break
        if latency_model is not None:
            lat_n, lat_m = (1, 0) if method == METHOD_GREEDY else (n, m)
            duration = simulate_latency(method, lat_n, lat_m, latency_model, step_seed)
            simulated_total += duration
            if overwrite_wall_clock:
                audit = audit.with_wall_clock(duration)
        audits.append(audit)
        record = audit.chosen.record
        assert record is not None  # the chosen candidate always parsed
        current, outcome = world_step(current, action)
        steps.append(Step(observation, record, outcome))
        history.append((observation, record.action_text))
        if truth is not None:
            truth.update(current)
    trajectory = None
    if status == STATUS_SUCCESS and steps:
        trajectory = Trajectory(
            instruction=task.instruction,
            steps=tuple(steps),
            success=True,
            label="positive",
        )
    return EpisodeResult(
        status=status,
        audits=audits,
        trajectory=trajectory,
        llm_calls=sum(a.llm_calls for a in audits),
        simulated_wall_clock=simulated_total,
    )


# -- Experiment orchestration -------------------------------------------------------


def build_task(
    entry: SuiteEntry, task_seed: int, step_limit: Optional[int]
) -> tuple[TaskSpec, EnvState]:
    if entry.is_pick_place():
        assert entry.pick_place_objects is not None
        return generate_pick_place(
            task_seed,
            n_objects=entry.pick_place_objects,
            start_at_source=entry.start_at_source,
            step_limit=step_limit,
        )
    assert entry.category is not None
    task, state = generate_task(entry.category, task_seed)
    if step_limit is not None:
        task = replace(task, step_limit=step_limit)
        state = replace(state, step_limit=step_limit)
    return task, state


@dataclass
class _RemoteActors:
    """Remote actors are built once per experiment and shared."""

    policy: Optional[RemotePolicy] = None
    verifier: Optional[RemoteVerifier] = None


def _remotes_for(config: ExperimentConfig) -> _RemoteActors:
    out = _RemoteActors()
    if config.policy.kind == "remote":
        assert config.policy.endpoint is not None
        out.policy = RemotePolicy(RemoteChatClient(EndpointConfig(**config.policy.endpoint)))
    if (
        config.method == METHOD_VEGAS
        and config.verifier is not None
        and config.verifier.kind == "remote"
    ):
        assert config.verifier.endpoint is not None
        out.verifier = RemoteVerifier(
            RemoteChatClient(EndpointConfig(**config.verifier.endpoint))
        )
    return out


def _episode_actors(
    config: ExperimentConfig, truth: TruthChannel, remotes: _RemoteActors
) -> tuple[Policy, Optional[Verifier]]:
    p = config.policy
    policy: Policy
    if p.kind == "oracle":
        policy = OraclePolicy(truth)
    elif p.kind == "noisy":
        policy = NoisyPolicy(
            truth,
            NoiseProfile(
                policy_correct_prob=p.correct_prob,
                failure_mode_weights=p.failure_mode_weights,
            ),
        )
    elif p.kind == "systematic":
        policy = SystematicErrorPolicy(truth, p.correct_prob, p.wrong_mode_prob)
    else:
        assert remotes.policy is not None
        policy = remotes.policy
    verifier: Optional[Verifier] = None
    if config.method == METHOD_VEGAS:
        v = config.verifier
        assert v is not None
        if v.kind == "oracle":
            verifier = OracleVerifier(truth)
        elif v.kind == "noisy":
            verifier = NoisyVerifier(truth, v.fpr, v.fnr)
        else:
            assert remotes.verifier is not None
            verifier = remotes.verifier
    return policy, verifier


def _sample_std(values: list[float]) -> float:
    if len(values) < 2:
        return 0.0
    return float(np.std(np.asarray(values), ddof=1))


def run_experiment(
    config: ExperimentConfig,
    out_dir: Optional[Union[str, Path]] = None,
) -> RunReport:
    """Execute the configured suite for every seed and aggregate a report.

    Writes report.json, report.csv, and per-(entry, seed) episode archives
    when an output directory is given (argument wins over the config
    field); successful trajectories land in the archives.
    """
    destination = Path(out_dir) if out_dir is not None else (
        Path(config.output_dir) if config.output_dir else None
    )
    remotes = _remotes_for(config)
    uses_remote = remotes.policy is not None or remotes.verifier is not None
    started = time.perf_counter()

    rates: dict[str, list[float]] = {entry.name: [] for entry in config.suite}
    status_counts: dict[str, int] = {}
    timestep_acc: dict[int, list[float]] = {}
    total_llm_calls = 0
    total_simulated = 0.0
    archive_rows: dict[tuple[str, int], list[dict]] = {}

    for seed in config.seeds:
        for entry in config.suite:
            successes = 0
            infra = 0
            rows: list[dict] = []
            for episode in range(entry.episodes):
                task_seed = derive_seed(seed, "task", entry.name, episode)
                task, state = build_task(entry, task_seed, config.step_limit)
                truth = TruthChannel(
                    task, plan_oracle_for(state.scene, task.goal), state
                )
                policy, verifier = _episode_actors(config, truth, remotes)
                result = run_episode(
                    task,
                    state,
                    config.method,
                    policy,
                    verifier,
                    n=config.n,
                    m=config.m,
                    temperature=config.temperature,
                    verifier_temperature=config.verifier_temperature,
                    seed=derive_seed(seed, "episode", entry.name, episode),
                    latency_model=config.latency,
                    truth=truth,
                    overwrite_wall_clock=not uses_remote,
                )
                status_counts[result.status] = status_counts.get(result.status, 0) + 1
                if result.success:
                    successes += 1
                elif result.status == STATUS_INFRASTRUCTURE:
                    infra += 1
                total_llm_calls += result.llm_calls
                total_simulated += result.simulated_wall_clock
                for audit in result.audits:
                    acc = timestep_acc.setdefault(audit.timestep, [0.0, 0.0, 0.0])
                    acc[0] += 1
                    acc[1] += audit.scoreboard.scores[audit.scoreboard.chosen_index]
                    acc[2] += audit.llm_calls
                if destination is not None:
                    row = {
                        "entry": entry.name,
                        "seed": seed,
                        "episode": episode,
                        "task_seed": task_seed,
                        "instruction": task.instruction,
                        "status": result.status,
                        "llm_calls": result.llm_calls,
                        "simulated_wall_clock": result.simulated_wall_clock,
                        "audits": [audit_to_record(a) for a in result.audits],
                        "trajectory": (
                            trajectory_to_record(
                                result.trajectory,
                                {"entry": entry.name, "task_seed": task_seed},
                            )
                            if result.trajectory is not None
                            else None
                        ),
                    }
                    rows.append(row)
            denominator = entry.episodes
            if not config.count_infra_as_failure:
                denominator = max(entry.episodes - infra, 0)
            rate = successes / denominator if denominator else 0.0
            rates[entry.name].append(rate)
            if destination is not None:
                archive_rows[(entry.name, seed)] = rows

    categories = tuple(
        CategoryRow(
            name=entry.name,
            episodes_per_seed=entry.episodes,
            mean=float(np.mean(rates[entry.name])),
            std=_sample_std(rates[entry.name]),
        )
        for entry in config.suite
    )
    per_seed_avg = [
        float(np.mean([rates[entry.name][i] for entry in config.suite]))
        for i in range(len(config.seeds))
    ]
    average = CategoryRow(
        name="Average",
        episodes_per_seed=sum(e.episodes for e in config.suite),
        mean=float(np.mean(per_seed_avg)),
        std=_sample_std(per_seed_avg),
    )
    timesteps = tuple(
        TimestepRow(
            timestep=t,
            decisions=int(acc[0]),
            mean_chosen_score=acc[1] / acc[0],
            llm_calls=int(acc[2]),
        )
        for t, acc in sorted(timestep_acc.items())
    )
    measured = time.perf_counter() - started
    report = RunReport(
        fingerprint=config.fingerprint(),
        method=config.method,
        n=config.n,
        m=config.m,
        seeds=config.seeds,
        categories=categories,
        average=average,
        timesteps=timesteps,
        statuses=tuple(sorted(status_counts.items())),
        total_llm_calls=total_llm_calls,
        simulated_wall_clock=total_simulated,
        measured_wall_clock=measured if uses_remote else None,
    )
    if destination is not None:
        destination.mkdir(parents=True, exist_ok=True)
        save_report(report, destination / "report.json")
        (destination / "report.csv").write_text(render_report_csv(report))
        archive_dir = destination / "archives"
        archive_dir.mkdir(exist_ok=True)
        for (name, seed), rows in sorted(archive_rows.items()):
            path = archive_dir / f"{name}-seed{seed}.jsonl"
            with path.open("w") as stream:
                write_archive(rows, stream)
    return report


def sweep_matched_compute(
    config: ExperimentConfig,
    n_values: list[int],
    out_dir: Optional[Union[str, Path]] = None,
) -> SweepReport:
    """Success-vs-compute curve: verifier-guided best-of-n at (n, m) against
    self-consistency at n(m+1) samples, asserting per-row budget equality."""
    if not n_values:
        raise ValueError("n_values must be nonempty")
    if config.verifier is None:
        raise ConfigError(["verifier: required for a matched-compute sweep"])
    rows = []
    for n in n_values:
        vegas_report = run_experiment(
            config.with_overrides(method=METHOD_VEGAS, n=n, output_dir=None)
        )
        sc_report = run_experiment(
            config.with_overrides(
                method=METHOD_SELF_CONSISTENCY, n=n, verifier=None, output_dir=None
            )
        )
        budget = n * (config.m + 1)
        for report in (vegas_report, sc_report):
            for t in report.timesteps:
                if t.llm_calls != t.decisions * budget:
                    raise AssertionError(
                        f"budget mismatch at n={n}: {t.llm_calls} calls over "
                        f"{t.decisions} decisions, expected {budget} each"
                    )
        rows.append(
            SweepRow(
                n=n,
                m=config.m,
                calls_per_decision=budget,
                vegas_mean=vegas_report.average.mean,
                vegas_std=vegas_report.average.std,
                self_consistency_mean=sc_report.average.mean,
                self_consistency_std=sc_report.average.std,
            )
        )
    report = SweepReport(
        fingerprint=config.fingerprint(), seeds=config.seeds, rows=tuple(rows)
    )
    destination = Path(out_dir) if out_dir is not None else (
        Path(config.output_dir) if config.output_dir else None
    )
    if destination is not None:
        destination.mkdir(parents=True, exist_ok=True)
        save_report(report, destination / "sweep.json")
        (destination / "sweep.csv").write_text(render_report_csv(report))
    return report

"""Command-line interface.

Subcommands: run (execute an experiment config), sweep (matched-compute
scan), coverage (candidate-set coverage table), synth (synthetic-data
pipeline over generated tasks), gen-tasks (emit scene files), report
(re-render tables from saved reports).

Exit codes: 0 success, 1 usage, 2 config, 3 runtime.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

from ..actors.simulated import BernoulliPolicy, OraclePolicy, TruthChannel, bernoulli_hit
from ..seeding import derive_seed
from ..selection import METHOD_GREEDY, analytic_coverage, estimate_coverage
from ..synthdata import (
    ModeUnavailableError,
    annotate_positive,
    augment_cot,
    build_verifier_dataset,
    synthesize_failure,
)
from ..trajectory import (
    decompose,
    serialize_chat,
    serialize_trajectories,
    serialize_verifier_samples,
    trajectory_digest,
)
from ..world.engine import observe
from ..world.planner import plan_oracle_for
from ..world.scenes import SceneFormatError, save_scene
from ..world.tasks import generate_task
from ..world.types import Observation, TASK_CATEGORIES
from .config import ConfigError, load_config
from .report import load_report, render_report
from .runner import run_episode, run_experiment, sweep_matched_compute

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


class UsageError(ValueError):
    """Bad flag values detected after argparse (e.g. malformed lists)."""


class _Parser(argparse.ArgumentParser):
    # Exit 1 for usage problems; argparse defaults to 2, which this CLI
    # reserves for config errors.
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text: str, flag: str) -> list[int]:
    try:
        values = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise UsageError(f"{flag} expects comma-separated integers, got {text!r}") from None
    if not values:
        raise UsageError(f"{flag} expects at least one value")
    return values


def _write_or_print(text: str, out: Optional[str], filename: str) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        directory = Path(out)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / filename).write_text(text)
        print(f"wrote {directory / filename}")


def _cmd_run(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config = config.with_overrides(seeds=(args.seed,))
    out_dir = args.out if args.out is not None else config.output_dir
    report = run_experiment(config, out_dir=out_dir)
    sys.stdout.write(render_report(report, args.format))
    return EXIT_OK


def _cmd_sweep(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config = config.with_overrides(seeds=(args.seed,))
    n_values = _int_list(args.n, "--n")
    out_dir = args.out if args.out is not None else config.output_dir
    report = sweep_matched_compute(config, n_values, out_dir=out_dir)
    sys.stdout.write(render_report(report, args.format))
    return EXIT_OK


_COVERAGE_CONTEXT_OBSERVATION = Observation(
    location="start",
    location_is_open=None,
    visible=(),
    holding=None,
    last_action_outcome="ok",
)


def _cmd_coverage(args: argparse.Namespace) -> int:
    from ..actors.base import PolicyContext

    if not 0.0 <= args.p <= 1.0:
        raise UsageError("--p must be in [0, 1]")
    if args.trials < 1:
        raise UsageError("--trials must be positive")
    n_values = _int_list(args.n, "--n")
    policy = BernoulliPolicy(args.p)
    context = PolicyContext(
        instruction="pick the target item",
        history=(),
        observation=_COVERAGE_CONTEXT_OBSERVATION,
    )
    lines = ["n,trials,p_hat,ci_lo,ci_hi,analytic"]
    json_rows = []
    for n in n_values:
        estimate = estimate_coverage(
            policy,
            bernoulli_hit,
            lambda trial: context,
            n=n,
            trials=args.trials,
            seed=derive_seed(args.seed, "coverage", n),
        )
        expected = analytic_coverage(args.p, n)
        lines.append(
            f"{n},{estimate.trials},{estimate.p_hat:.6f},"
            f"{estimate.interval[0]:.6f},{estimate.interval[1]:.6f},{expected:.6f}"
        )
        json_rows.append(
            {
                "n": n,
                "trials": estimate.trials,
                "p_hat": estimate.p_hat,
                "ci_lo": estimate.interval[0],
                "ci_hi": estimate.interval[1],
                "analytic": expected,
            }
        )
    if args.format == "json":
        import json as _json

        text = _json.dumps(
            {"p": args.p, "rows": json_rows}, sort_keys=True, separators=(",", ":")
        ) + "\n"
        _write_or_print(text, args.out, "coverage.json")
    else:
        _write_or_print("\n".join(lines) + "\n", args.out, "coverage.csv")
    return EXIT_OK


def _categories_from(arg: str) -> list[str]:
    if arg == "all":
        return list(TASK_CATEGORIES)
    categories = [part.strip() for part in arg.split(",") if part.strip()]
    unknown = [c for c in categories if c not in TASK_CATEGORIES]
    if unknown or not categories:
        raise UsageError(
            f"--categories expects names from {', '.join(TASK_CATEGORIES)}"
        )
    return categories


def _cmd_synth(args: argparse.Namespace) -> int:
    if args.count < 1:
        raise UsageError("--count must be positive")
    categories = _categories_from(args.categories)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    positives = []
    negatives = []
    conversations = []
    skipped = 0
    for i in range(args.count):
        category = categories[i % len(categories)]
        task_seed = derive_seed(args.seed, "synth-task", i)
        task, state = generate_task(category, task_seed)
        truth = TruthChannel(task, plan_oracle_for(state.scene, task.goal), state)
        result = run_episode(
            task, state, METHOD_GREEDY, OraclePolicy(truth),
            seed=derive_seed(args.seed, "synth-episode", i), truth=truth,
        )
        if result.trajectory is None:
            skipped += 1
            continue
        trajectory = augment_cot(result.trajectory)
        provenance = {"category": category, "task_seed": task_seed}
        try:
            negative, neg_annotation = synthesize_failure(
                trajectory, task, state, seed=derive_seed(args.seed, "synth-mistake", i)
            )
        except ModeUnavailableError:
            skipped += 1
            continue
        positives.append((trajectory, annotate_positive(trajectory), provenance))
        negatives.append((negative, neg_annotation, provenance))
        conversations.extend(decompose(trajectory, profile=state.scene.profile))
    if not positives:
        raise RuntimeError("no trajectory survived the synthesis pipeline")
    samples = build_verifier_dataset(
        [(t, a) for t, a, _ in positives],
        [(t, a) for t, a, _ in negatives],
        seed=args.seed,
    )
    with (out / "positives.jsonl").open("w") as stream:
        serialize_trajectories([(t, p) for t, _, p in positives], stream)
    with (out / "negatives.jsonl").open("w") as stream:
        serialize_trajectories([(t, p) for t, _, p in negatives], stream)
    with (out / "verifier_samples.jsonl").open("w") as stream:
        serialize_verifier_samples(samples, stream)
    with (out / "chat_sft.jsonl").open("w") as stream:
        serialize_chat(conversations, stream)
    print(
        f"synthesized {len(positives)} positive / {len(negatives)} negative "
        f"trajectories, {len(samples)} balanced verifier samples, "
        f"{len(conversations)} chat sub-conversations ({skipped} skipped) -> {out}"
    )
    return EXIT_OK


def _cmd_gen_tasks(args: argparse.Namespace) -> int:
    if args.count < 1:
        raise UsageError("--count must be positive")
    categories = _categories_from(args.category)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for category in categories:
        for i in range(args.count):
            task, state = generate_task(category, derive_seed(args.seed, category, i))
            path = out / f"{category.lower()}_{args.seed}_{i}.yaml"
            save_scene(task, state, path)
            written.append(path)
    for path in written:
        print(path)
    return EXIT_OK


def _cmd_report(args: argparse.Namespace) -> int:
    report = load_report(args.input)
    text = render_report(report, args.format)
    if args.out is None or args.out == "-":
        sys.stdout.write(text)
    else:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="veriact", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute an experiment config")
    run.add_argument("--config", required=True)
    run.add_argument("--seed", type=int, default=None, help="override config seeds")
    run.add_argument("--out", default=None, help="output directory")
    run.add_argument("--format", choices=("csv", "json"), default="csv")
    run.set_defaults(func=_cmd_run)

    sweep = sub.add_parser("sweep", help="matched-compute scan over n")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--n", required=True, help="comma-separated candidate counts")
    sweep.add_argument("--seed", type=int, default=None)
    sweep.add_argument("--out", default=None)
    sweep.add_argument("--format", choices=("csv", "json"), default="csv")
    sweep.set_defaults(func=_cmd_sweep)

    coverage = sub.add_parser("coverage", help="candidate-set coverage table")
    coverage.add_argument("--n", required=True, help="comma-separated candidate counts")
    coverage.add_argument("--p", type=float, required=True, help="per-sample correct probability")
    coverage.add_argument("--trials", type=int, default=10000)
    coverage.add_argument("--seed", type=int, default=0)
    coverage.add_argument("--out", default=None)
    coverage.add_argument("--format", choices=("csv", "json"), default="csv")
    coverage.set_defaults(func=_cmd_coverage)

    synth = sub.add_parser("synth", help="synthetic verifier-data pipeline")
    synth.add_argument("--count", type=int, default=50, help="number of source tasks")
    synth.add_argument("--categories", default="all")
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--out", required=True)
    synth.set_defaults(func=_cmd_synth)

    gen = sub.add_parser("gen-tasks", help="emit scene/task files")
    gen.add_argument("--category", default="all")
    gen.add_argument("--count", type=int, default=1, help="files per category")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=_cmd_gen_tasks)

    report = sub.add_parser("report", help="re-render a saved report")
    report.add_argument("--in", dest="input", required=True)
    report.add_argument("--format", choices=("csv", "json"), default="csv")
    report.add_argument("--out", default=None)
    report.set_defaults(func=_cmd_report)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, SceneFormatError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # runtime failures get a dedicated exit code
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

"""Experiment configuration: YAML schema, validation, and fingerprinting.

A config file fully determines an experiment. Validation collects every
offending field before raising, and the fingerprint is a sha256 over the
canonical JSON form, so two configs fingerprint equal exactly when their
normalized documents match.
"""

from __future__ import annotations

import hashlib
import io
import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Union

import yaml

from ..actors.base import FAILURE_MODES
from ..selection import METHODS, METHOD_SELF_CONSISTENCY, METHOD_VEGAS
from ..world.types import TASK_CATEGORIES
from .latency import LatencyModel

CONFIG_FORMAT = "veriact-experiment-v1"

POLICY_KINDS = ("oracle", "noisy", "systematic", "remote")
VERIFIER_KINDS = ("oracle", "noisy", "remote")

# Sorted by mode name: the normal form _parse_policy produces, so a
# saved config reloads to an equal value.
_DEFAULT_WEIGHTS = tuple(sorted((mode, 1.0) for mode in FAILURE_MODES))


class ConfigError(ValueError):
    """Invalid experiment config; message lists every offending field."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("invalid config:\n" + "\n".join(f"  - {p}" for p in problems))


@dataclass(frozen=True, slots=True)
class SuiteEntry:
    """One block of episodes: either a task-generator category or a
    fixed-shape pick-and-place block."""

    name: str
    episodes: int
    category: Optional[str] = None
    pick_place_objects: Optional[int] = None
    start_at_source: bool = False

    def is_pick_place(self) -> bool:
        return self.pick_place_objects is not None


@dataclass(frozen=True, slots=True)
class PolicyConfig:
    kind: str = "oracle"
    correct_prob: float = 1.0
    wrong_mode_prob: float = 0.0
    failure_mode_weights: tuple[tuple[str, float], ...] = _DEFAULT_WEIGHTS
    endpoint: Optional[dict] = None


@dataclass(frozen=True, slots=True)
class VerifierConfig:
    kind: str = "oracle"
    fpr: float = 0.0
    fnr: float = 0.0
    endpoint: Optional[dict] = None


@dataclass(frozen=True, slots=True)
class ExperimentConfig:
    method: str
    n: int
    m: int
    suite: tuple[SuiteEntry, ...]
    seeds: tuple[int, ...]
    policy: PolicyConfig = PolicyConfig()
    verifier: Optional[VerifierConfig] = None
    temperature: float = 0.7
    verifier_temperature: Optional[float] = None
    step_limit: Optional[int] = None
    latency: LatencyModel = LatencyModel()
    output_dir: Optional[str] = None
    count_infra_as_failure: bool = True

    def with_overrides(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)

    def to_document(self) -> dict:
        doc: dict = {
            "format": CONFIG_FORMAT,
            "method": self.method,
            "n": self.n,
            "m": self.m,
            "temperature": self.temperature,
            "verifier_temperature": self.verifier_temperature,
            "step_limit": self.step_limit,
            "seeds": list(self.seeds),
            "suite": [
                {
                    "name": e.name,
                    "episodes": e.episodes,
                    "category": e.category,
                    "pick_place_objects": e.pick_place_objects,
                    "start_at_source": e.start_at_source,
                }
                for e in self.suite
            ],
            "policy": {
                "kind": self.policy.kind,
                "correct_prob": self.policy.correct_prob,
                "wrong_mode_prob": self.policy.wrong_mode_prob,
                "failure_mode_weights": {
                    mode: weight for mode, weight in self.policy.failure_mode_weights
                },
                "endpoint": self.policy.endpoint,
            },
            "verifier": (
                None
                if self.verifier is None
                else {
                    "kind": self.verifier.kind,
                    "fpr": self.verifier.fpr,
                    "fnr": self.verifier.fnr,
                    "endpoint": self.verifier.endpoint,
                }
            ),
            "latency": {
                "kind": self.latency.kind,
                "per_call": self.latency.per_call,
                "mu": self.latency.mu,
                "sigma": self.latency.sigma,
                "parallel_width": self.latency.parallel_width,
                "per_round_overhead": self.latency.per_round_overhead,
            },
            "output_dir": self.output_dir,
            "count_infra_as_failure": self.count_infra_as_failure,
        }
        return doc

    def fingerprint(self) -> str:
        payload = json.dumps(self.to_document(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _check_probability(problems: list[str], name: str, value) -> float:
    try:
        out = float(value)
    except (TypeError, ValueError):
        problems.append(f"{name}: not a number ({value!r})")
        return 0.0
    if not 0.0 <= out <= 1.0:
        problems.append(f"{name}: must be in [0, 1], got {out}")
    return out


def _parse_suite(problems: list[str], raw) -> tuple[SuiteEntry, ...]:
    if not isinstance(raw, list) or not raw:
        problems.append("suite: must be a nonempty list")
        return ()
    entries = []
    seen = set()
    for i, item in enumerate(raw):
        prefix = f"suite[{i}]"
        if not isinstance(item, dict):
            problems.append(f"{prefix}: must be a mapping")
            continue
        episodes = item.get("episodes", 0)
        if not isinstance(episodes, int) or episodes < 1:
            problems.append(f"{prefix}.episodes: must be a positive integer")
            episodes = 1
        category = item.get("category")
        pp = item.get("pick_place_objects")
        start_at_source = bool(item.get("start_at_source", False))
        if (category is None) == (pp is None):
            problems.append(
                f"{prefix}: exactly one of category / pick_place_objects required"
            )
            continue
        if category is not None and category not in TASK_CATEGORIES:
            problems.append(f"{prefix}.category: unknown category {category!r}")
            continue
        if pp is not None and (not isinstance(pp, int) or not 1 <= pp <= 3):
            problems.append(f"{prefix}.pick_place_objects: must be 1..3")
            continue
        default_name = category if category else f"PickPlace{pp}"
        name = str(item.get("name", default_name))
        if name in seen:
            problems.append(f"{prefix}.name: duplicate suite entry name {name!r}")
            continue
        seen.add(name)
        entries.append(
            SuiteEntry(
                name=name,
                episodes=episodes,
                category=category,
                pick_place_objects=pp,
                start_at_source=start_at_source,
            )
        )
    return tuple(entries)


def _parse_policy(problems: list[str], raw) -> PolicyConfig:
    if raw is None:
        return PolicyConfig()
    if not isinstance(raw, dict):
        problems.append("policy: must be a mapping")
        return PolicyConfig()
    kind = raw.get("kind", "oracle")
    if kind not in POLICY_KINDS:
        problems.append(f"policy.kind: unknown kind {kind!r}")
        kind = "oracle"
    weights_raw = raw.get("failure_mode_weights")
    weights = _DEFAULT_WEIGHTS
    if weights_raw is not None:
        if not isinstance(weights_raw, dict):
            problems.append("policy.failure_mode_weights: must be a mapping")
        else:
            pairs = []
            for mode, weight in sorted(weights_raw.items()):
                if mode not in FAILURE_MODES:
                    problems.append(
                        f"policy.failure_mode_weights: unknown mode {mode!r}"
                    )
                    continue
                pairs.append((mode, float(weight)))
            if pairs:
                weights = tuple(pairs)
    endpoint = raw.get("endpoint")
    if kind == "remote" and not isinstance(endpoint, dict):
        problems.append("policy.endpoint: required for a remote policy")
    return PolicyConfig(
        kind=kind,
        correct_prob=_check_probability(
            problems, "policy.correct_prob", raw.get("correct_prob", 1.0)
        ),
        wrong_mode_prob=_check_probability(
            problems, "policy.wrong_mode_prob", raw.get("wrong_mode_prob", 0.0)
        ),
        failure_mode_weights=weights,
        endpoint=endpoint if isinstance(endpoint, dict) else None,
    )


def _parse_verifier(problems: list[str], raw) -> Optional[VerifierConfig]:
    if raw is None:
        return None
    if not isinstance(raw, dict):
        problems.append("verifier: must be a mapping or null")
        return None
    kind = raw.get("kind", "oracle")
    if kind not in VERIFIER_KINDS:
        problems.append(f"verifier.kind: unknown kind {kind!r}")
        kind = "oracle"
    endpoint = raw.get("endpoint")
    if kind == "remote" and not isinstance(endpoint, dict):
        problems.append("verifier.endpoint: required for a remote verifier")
    return VerifierConfig(
        kind=kind,
        fpr=_check_probability(problems, "verifier.fpr", raw.get("fpr", 0.0)),
        fnr=_check_probability(problems, "verifier.fnr", raw.get("fnr", 0.0)),
        endpoint=endpoint if isinstance(endpoint, dict) else None,
    )


def _parse_latency(problems: list[str], raw) -> LatencyModel:
    if raw is None:
        return LatencyModel()
    if not isinstance(raw, dict):
        problems.append("latency: must be a mapping")
        return LatencyModel()
    defaults = LatencyModel()
    try:
        return LatencyModel(
            kind=raw.get("kind", defaults.kind),
            per_call=float(raw.get("per_call", defaults.per_call)),
            mu=float(raw.get("mu", defaults.mu)),
            sigma=float(raw.get("sigma", defaults.sigma)),
            parallel_width=int(raw.get("parallel_width", defaults.parallel_width)),
            per_round_overhead=float(
                raw.get("per_round_overhead", defaults.per_round_overhead)
            ),
        )
    except (TypeError, ValueError) as exc:
        problems.append(f"latency: {exc}")
        return defaults


def parse_config(raw: dict) -> ExperimentConfig:
    """Validate a config document; raises ConfigError listing every problem."""
    problems: list[str] = []
    if not isinstance(raw, dict):
        raise ConfigError(["config must be a mapping"])
    if raw.get("format", CONFIG_FORMAT) != CONFIG_FORMAT:
        problems.append(f"format: expected {CONFIG_FORMAT}, got {raw.get('format')!r}")
    method = raw.get("method")
    if method not in METHODS:
        problems.append(f"method: must be one of {', '.join(METHODS)}; got {method!r}")
        method = METHOD_VEGAS
    n = raw.get("n", 1)
    if not isinstance(n, int) or n < 1:
        problems.append("n: must be a positive integer")
        n = 1
    m = raw.get("m", 1)
    if not isinstance(m, int) or m < 0:
        problems.append("m: must be a nonnegative integer")
        m = 1
    if method == METHOD_VEGAS and m < 1:
        problems.append("m: vegas needs at least one verification per candidate")
        m = 1
    temperature = raw.get("temperature", 0.7)
    if not isinstance(temperature, (int, float)) or temperature < 0:
        problems.append("temperature: must be a nonnegative number")
        temperature = 0.7
    verifier_temperature = raw.get("verifier_temperature")
    if verifier_temperature is not None and (
        not isinstance(verifier_temperature, (int, float)) or verifier_temperature < 0
    ):
        problems.append("verifier_temperature: must be a nonnegative number or null")
        verifier_temperature = None
    step_limit = raw.get("step_limit")
    if step_limit is not None and (not isinstance(step_limit, int) or step_limit < 1):
        problems.append("step_limit: must be a positive integer or null")
        step_limit = None
    seeds_raw = raw.get("seeds")
    if (
        not isinstance(seeds_raw, list)
        or not seeds_raw
        or not all(isinstance(s, int) for s in seeds_raw)
    ):
        problems.append("seeds: must be a nonempty list of integers")
        seeds: tuple[int, ...] = (0,)
    else:
        seeds = tuple(seeds_raw)
    suite = _parse_suite(problems, raw.get("suite"))
    policy = _parse_policy(problems, raw.get("policy"))
    verifier = _parse_verifier(problems, raw.get("verifier"))
    if method == METHOD_VEGAS and verifier is None:
        problems.append("verifier: required when method is vegas")
    latency = _parse_latency(problems, raw.get("latency"))
    output_dir = raw.get("output_dir")
    if output_dir is not None and not isinstance(output_dir, str):
        problems.append("output_dir: must be a string or null")
        output_dir = None
    if problems:
        raise ConfigError(problems)
    # Majority voting needs no judge; drop it so audits stay faithful.
    if method == METHOD_SELF_CONSISTENCY:
        verifier = None
    return ExperimentConfig(
        method=method,
        n=n,
        m=m,
        suite=suite,
        seeds=seeds,
        policy=policy,
        verifier=verifier,
        temperature=float(temperature),
        verifier_temperature=(
            None if verifier_temperature is None else float(verifier_temperature)
        ),
        step_limit=step_limit,
        latency=latency,
        output_dir=output_dir,
        count_infra_as_failure=bool(raw.get("count_infra_as_failure", True)),
    )


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError([f"cannot read config {path}: {exc}"]) from None
    try:
        raw = yaml.safe_load(io.StringIO(text))
    except yaml.YAMLError as exc:
        raise ConfigError([f"invalid YAML: {exc}"]) from None
    return parse_config(raw)


def save_config(config: ExperimentConfig, path: Union[str, Path]) -> None:
    Path(path).write_text(
        yaml.safe_dump(config.to_document(), sort_keys=True, width=100)
    )

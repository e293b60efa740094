"""Parallel fan-out latency model.

A selection method issues its calls in dependent rounds: greedy and
self-consistency sample everything in one round; verifier-guided best-of-n
needs two (candidates, then verifications of those candidates). Within a
round, up to ``parallel_width`` calls run at once; the round is a sequence
of ceil(calls / width) waves, each lasting as long as its slowest call,
plus ``per_round_overhead`` charged once per round.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..seeding import rng_for
from ..selection import METHOD_GREEDY, METHOD_SELF_CONSISTENCY, METHOD_VEGAS

KIND_FIXED = "fixed"
KIND_LOGNORMAL = "lognormal"

_ROUND_SHAPES = {
    METHOD_GREEDY: lambda n, m: (1,),
    METHOD_VEGAS: lambda n, m: (n, n * m),
    METHOD_SELF_CONSISTENCY: lambda n, m: (n * (m + 1),),
}


@dataclass(frozen=True, slots=True)
class LatencyModel:
    """Per-call latency distribution plus fan-out parameters.

    kind "fixed" uses ``per_call`` seconds for every call; "lognormal"
    draws exp(N(mu, sigma^2)) per call.
    """

    kind: str = KIND_FIXED
    per_call: float = 2.5
    mu: float = 0.9
    sigma: float = 0.25
    parallel_width: int = 96
    per_round_overhead: float = 0.5

    def __post_init__(self) -> None:
        if self.kind not in (KIND_FIXED, KIND_LOGNORMAL):
            raise ValueError(f"unknown latency kind {self.kind!r}")
        if self.per_call <= 0:
            raise ValueError("per_call must be positive")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if self.parallel_width < 1:
            raise ValueError("parallel_width must be at least 1")
        if self.per_round_overhead < 0:
            raise ValueError("per_round_overhead must be nonnegative")

    def draw_calls(self, count: int, rng: np.random.Generator) -> np.ndarray:
        if self.kind == KIND_FIXED:
            return np.full(count, self.per_call)
        return rng.lognormal(self.mu, self.sigma, count)

    def round_duration(self, durations: np.ndarray) -> float:
        """Sum of per-wave maxima at the configured width, plus overhead."""
        total = self.per_round_overhead
        width = self.parallel_width
        for start in range(0, len(durations), width):
            total += float(np.max(durations[start : start + width]))
        return total


def round_sizes(method: str, n: int, m: int) -> tuple[int, ...]:
    """Call counts of each dependent round for a selection method."""
    try:
        shape = _ROUND_SHAPES[method]
    except KeyError:
        raise ValueError(f"unknown method {method!r}") from None
    if n < 1 or m < 0:
        raise ValueError("need n >= 1 and m >= 0")
    return tuple(size for size in shape(n, m) if size > 0)


def simulate_latency(
    method: str, n: int, m: int, model: LatencyModel, seed: int = 0
) -> float:
    """Simulated wall-clock for one decision under the fan-out contract."""
    total = 0.0
    for index, size in enumerate(round_sizes(method, n, m)):
        rng = rng_for(seed, "latency", method, index)
        total += model.round_duration(model.draw_calls(size, rng))
    return total


def waves(calls: int, width: int) -> int:
    """Number of waves a round of `calls` takes at a given width."""
    if calls < 0 or width < 1:
        raise ValueError("need calls >= 0 and width >= 1")
    return math.ceil(calls / width)

"""Action selection strategies over pluggable policies and verifiers.

Three ways to pick the next action at a decision point:

- :func:`select_vegas` -- verifier-guided best-of-n: sample n candidate
  actions, collect m yes/no verifications per candidate, score each
  candidate by its mean verdict, execute the argmax (lowest index on ties).
- :func:`select_greedy` -- one candidate at temperature 0, no verification.
- :func:`select_self_consistency` -- the matched-compute baseline: sample
  n*(m+1) candidates and majority-vote over canonicalized actions.

Budget contract: every candidate costs one llm call and every vote costs
one llm call, so audits report n + n*m, 1, and n*(m+1) calls respectively.

Aggregation is keyed by (candidate_index, vote_index) and is therefore
independent of the order verifications arrive in; fixed seeds give
identical results at any parallelism width.
"""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

from .actors.base import Candidate, Policy, PolicyContext, Verification, Verifier
from .seeding import derive_seed
from .trajectory import VERDICT_YES, record_from_text
from .world.types import Action

METHOD_VEGAS = "vegas"
METHOD_GREEDY = "greedy"
METHOD_SELF_CONSISTENCY = "self_consistency"
METHODS = (METHOD_GREEDY, METHOD_VEGAS, METHOD_SELF_CONSISTENCY)


class SelectionError(RuntimeError):
    """No executable action could be selected (e.g. nothing parsed)."""


def argmax_lowest(
    scores: Sequence[float], eligible: Optional[Sequence[int]] = None
) -> tuple[int, tuple[int, ...]]:
    """Argmax with deterministic lowest-index tie-breaking.

    Returns (chosen_index, tie_set) where tie_set holds every eligible index
    sharing the maximum score. Scores compared exactly: equal verdict counts
    produce bit-identical means, so no tolerance is needed.
    """
    indices = list(range(len(scores))) if eligible is None else sorted(eligible)
    if not indices:
        raise SelectionError("no eligible candidate to select from")
    best = max(scores[i] for i in indices)
    tie_set = tuple(i for i in indices if scores[i] == best)
    return tie_set[0], tie_set


@dataclass(frozen=True, slots=True)
class ScoreBoard:
    """Per-candidate verdicts and scores plus the selection outcome.

    scores[i] is the mean of candidate i's verdicts mapped yes -> 1,
    no/unparsable -> 0. Methods without verification reuse the structure:
    greedy scores its sole candidate 1.0; self-consistency scores each
    candidate by its canonical action's vote share.
    """

    verdicts: tuple[tuple[str, ...], ...]
    scores: tuple[float, ...]
    chosen_index: int
    tie_set: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.verdicts) != len(self.scores):
            raise ValueError("one verdict row per score")
        if not self.tie_set:
            raise ValueError("tie_set must be nonempty")
        if self.chosen_index not in self.tie_set:
            raise ValueError("chosen_index must be in tie_set")
        for score in self.scores:
            if not 0.0 <= score <= 1.0:
                raise ValueError(f"score out of range: {score}")
        for index in self.tie_set:
            if not 0 <= index < len(self.scores):
                raise ValueError(f"tie_set index out of range: {index}")


def verdict_grid(
    n: int, m: int, verifications: Iterable[Verification]
) -> tuple[tuple[str, ...], ...]:
    """Arrange verifications into an n x m verdict grid keyed by
    (candidate_index, vote_index), rejecting duplicates, gaps, and strays."""
    cells: dict[tuple[int, int], str] = {}
    for v in verifications:
        key = (v.candidate_index, v.vote_index)
        if not (0 <= v.candidate_index < n and 0 <= v.vote_index < m):
            raise ValueError(f"verification outside the {n}x{m} grid: {key}")
        if key in cells:
            raise ValueError(f"duplicate verification for {key}")
        cells[key] = v.verdict
    if len(cells) != n * m:
        raise ValueError(f"expected {n * m} verifications, got {len(cells)}")
    return tuple(tuple(cells[(i, j)] for j in range(m)) for i in range(n))


def score_verdicts(verdict_rows: Sequence[Sequence[str]]) -> tuple[float, ...]:
    """Mean mapped verdict per candidate: yes -> 1, anything else -> 0."""
    return tuple(
        sum(1.0 for v in row if v == VERDICT_YES) / len(row) for row in verdict_rows
    )


@dataclass(frozen=True, slots=True)
class SelectionAudit:
    """Complete record of one selection: what was sampled, how it was
    judged, what was chosen, and what it cost."""

    method: str
    timestep: int
    candidates: tuple[Candidate, ...]
    verifications: tuple[Verification, ...]
    scoreboard: ScoreBoard
    llm_calls: int
    wall_clock: float

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if len(self.scoreboard.scores) != len(self.candidates):
            raise ValueError("scoreboard size must match candidate count")

    @property
    def chosen(self) -> Candidate:
        return self.candidates[self.scoreboard.chosen_index]

    def with_wall_clock(self, value: float) -> "SelectionAudit":
        return SelectionAudit(
            method=self.method,
            timestep=self.timestep,
            candidates=self.candidates,
            verifications=self.verifications,
            scoreboard=self.scoreboard,
            llm_calls=self.llm_calls,
            wall_clock=value,
        )


def audit_to_record(audit: SelectionAudit) -> dict:
    """JSON-ready form for the trajectory archive."""
    return {
        "method": audit.method,
        "timestep": audit.timestep,
        "candidates": [
            {
                "index": c.index,
                "raw_text": c.raw_text,
                "rationale": c.rationale,
                "action_text": c.record.action_text if c.record else None,
            }
            for c in audit.candidates
        ],
        "verifications": [
            {
                "candidate_index": v.candidate_index,
                "vote_index": v.vote_index,
                "text": v.text,
                "verdict": v.verdict,
            }
            for v in audit.verifications
        ],
        "scoreboard": {
            "verdicts": [list(row) for row in audit.scoreboard.verdicts],
            "scores": list(audit.scoreboard.scores),
            "chosen_index": audit.scoreboard.chosen_index,
            "tie_set": list(audit.scoreboard.tie_set),
        },
        "llm_calls": audit.llm_calls,
        "wall_clock": audit.wall_clock,
    }


def audit_from_record(record: dict) -> SelectionAudit:
    candidates = tuple(
        Candidate(
            index=int(c["index"]),
            raw_text=c["raw_text"],
            rationale=c["rationale"],
            record=(
                record_from_text(c["rationale"], c["action_text"])
                if c.get("action_text")
                else None
            ),
        )
        for c in record["candidates"]
    )
    verifications = tuple(
        Verification(
            candidate_index=int(v["candidate_index"]),
            vote_index=int(v["vote_index"]),
            text=v["text"],
            verdict=v["verdict"],
        )
        for v in record["verifications"]
    )
    sb = record["scoreboard"]
    scoreboard = ScoreBoard(
        verdicts=tuple(tuple(row) for row in sb["verdicts"]),
        scores=tuple(float(s) for s in sb["scores"]),
        chosen_index=int(sb["chosen_index"]),
        tie_set=tuple(int(i) for i in sb["tie_set"]),
    )
    return SelectionAudit(
        method=record["method"],
        timestep=int(record["timestep"]),
        candidates=candidates,
        verifications=verifications,
        scoreboard=scoreboard,
        llm_calls=int(record["llm_calls"]),
        wall_clock=float(record["wall_clock"]),
    )


def _checked_candidates(raw: list[Candidate], expected: int) -> tuple[Candidate, ...]:
    if len(raw) != expected:
        raise ValueError(f"policy returned {len(raw)} candidates, expected {expected}")
    for i, c in enumerate(raw):
        if c.index != i:
            raise ValueError(f"candidate index {c.index} at position {i}")
    return tuple(raw)


def select_vegas(
    context: PolicyContext,
    policy: Policy,
    verifier: Verifier,
    n: int,
    m: int,
    temperature: float = 0.7,
    seed: int = 0,
    *,
    verifier_temperature: Optional[float] = None,
    timestep: int = 0,
) -> tuple[Action, SelectionAudit]:
    """Verifier-guided best-of-n selection.

    Samples n candidates, has the verifier cast m votes on each, scores
    every candidate by its mean verdict (yes=1, no/unparsable=0), and
    returns the argmax action, breaking ties toward the lowest candidate
    index. Unparsable candidates are still verified (the budget is always
    n + n*m calls) but are excluded from the argmax; if nothing parses,
    raises :class:`SelectionError`.
    """
    if n < 1 or m < 1:
        raise ValueError("n and m must be at least 1")
    start = time.perf_counter()
    candidates = _checked_candidates(
        policy.propose(context, n, temperature, derive_seed(seed, "candidates")), n
    )
    vote_temperature = temperature if verifier_temperature is None else verifier_temperature
    prior = context.prior_action_texts()
    collected: list[Verification] = []
    for candidate in candidates:
        votes = verifier.verify(
            context.instruction,
            prior,
            context.observation,
            candidate,
            m,
            vote_temperature,
            derive_seed(seed, "verify", candidate.index),
        )
        collected.extend(votes)
    grid = verdict_grid(n, m, collected)
    scores = score_verdicts(grid)
    eligible = [c.index for c in candidates if c.parsable]
    if not eligible:
        raise SelectionError("all candidates were unparsable")
    chosen_index, tie_set = argmax_lowest(scores, eligible)
    scoreboard = ScoreBoard(
        verdicts=grid, scores=scores, chosen_index=chosen_index, tie_set=tie_set
    )
    audit = SelectionAudit(
        method=METHOD_VEGAS,
        timestep=timestep,
        candidates=candidates,
        verifications=tuple(collected),
        scoreboard=scoreboard,
        llm_calls=n + n * m,
        wall_clock=time.perf_counter() - start,
    )
    return candidates[chosen_index].record.action, audit


def select_greedy(
    context: PolicyContext,
    policy: Policy,
    seed: int = 0,
    *,
    timestep: int = 0,
) -> tuple[Action, SelectionAudit]:
    """One candidate at temperature 0, no verification, one llm call."""
    start = time.perf_counter()
    candidates = _checked_candidates(
        policy.propose(context, 1, 0.0, derive_seed(seed, "candidates")), 1
    )
    if not candidates[0].parsable:
        raise SelectionError("greedy candidate was unparsable")
    scoreboard = ScoreBoard(
        verdicts=((),), scores=(1.0,), chosen_index=0, tie_set=(0,)
    )
    audit = SelectionAudit(
        method=METHOD_GREEDY,
        timestep=timestep,
        candidates=candidates,
        verifications=(),
        scoreboard=scoreboard,
        llm_calls=1,
        wall_clock=time.perf_counter() - start,
    )
    return candidates[0].record.action, audit


def select_self_consistency(
    context: PolicyContext,
    policy: Policy,
    n: int,
    m: int,
    temperature: float = 0.7,
    seed: int = 0,
    *,
    timestep: int = 0,
) -> tuple[Action, SelectionAudit]:
    """Matched-compute majority voting: n*(m+1) samples, one vote each.

    Samples are canonicalized to structured actions (so textual variants of
    one action pool their votes) and the most common action wins; ties break
    toward the action whose first occurrence is earliest in sampling order.
    Each candidate's score is its action's vote share among parsable
    samples. Unparsable samples score 0 and never win; if nothing parses,
    raises :class:`SelectionError`.
    """
    if n < 1 or m < 0:
        raise ValueError("need n >= 1 and m >= 0")
    total = n * (m + 1)
    start = time.perf_counter()
    candidates = _checked_candidates(
        policy.propose(context, total, temperature, derive_seed(seed, "candidates")),
        total,
    )
    counts: dict[str, int] = {}
    first_seen: dict[str, int] = {}
    parsable_total = 0
    for c in candidates:
        if not c.parsable:
            continue
        parsable_total += 1
        key = c.record.action.canonical()
        counts[key] = counts.get(key, 0) + 1
        first_seen.setdefault(key, c.index)
    if not counts:
        raise SelectionError("all sampled actions were unparsable")
    best_count = max(counts.values())
    winner = min(
        (key for key, count in counts.items() if count == best_count),
        key=lambda key: first_seen[key],
    )
    chosen_index = first_seen[winner]
    scores = tuple(
        counts[c.record.action.canonical()] / parsable_total if c.parsable else 0.0
        for c in candidates
    )
    _, tie_set = argmax_lowest(scores, [c.index for c in candidates if c.parsable])
    scoreboard = ScoreBoard(
        verdicts=tuple(() for _ in candidates),
        scores=scores,
        chosen_index=chosen_index,
        tie_set=tie_set,
    )
    audit = SelectionAudit(
        method=METHOD_SELF_CONSISTENCY,
        timestep=timestep,
        candidates=candidates,
        verifications=(),
        scoreboard=scoreboard,
        llm_calls=total,
        wall_clock=time.perf_counter() - start,
    )
    return candidates[chosen_index].record.action, audit


@dataclass(frozen=True, slots=True)
class CoverageEstimate:
    """Fraction of decision points where >= 1 of n candidates is correct."""

    n: int
    p_hat: float
    trials: int
    interval: tuple[float, float]

    def __post_init__(self) -> None:
        if not 0.0 <= self.p_hat <= 1.0:
            raise ValueError("p_hat must be in [0, 1]")
        lo, hi = self.interval
        if not lo <= self.p_hat <= hi:
            raise ValueError("interval must contain p_hat")


def wilson_interval(
    successes: int, trials: int, confidence: float = 0.95
) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    if not 0 <= successes <= trials:
        raise ValueError("successes must be in [0, trials]")
    if not 0.0 < confidence < 1.0:
        raise ValueError("confidence must be in (0, 1)")
    z = statistics.NormalDist().inv_cdf((1.0 + confidence) / 2.0)
    p = successes / trials
    denom = 1.0 + z * z / trials
    center = (p + z * z / (2.0 * trials)) / denom
    half = (
        z * ((p * (1.0 - p) / trials + z * z / (4.0 * trials * trials)) ** 0.5) / denom
    )
    return max(0.0, center - half), min(1.0, center + half)


def analytic_coverage(p: float, n: int) -> float:
    """Probability that at least one of n independent samples is correct
    when each is correct with probability p: 1 - (1 - p)**n."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must be in [0, 1]")
    if n < 1:
        raise ValueError("n must be at least 1")
    return 1.0 - (1.0 - p) ** n


def estimate_coverage(
    policy: Policy,
    oracle_judge: Callable[[Candidate], bool],
    task_sampler: Callable[[int], PolicyContext],
    n: int,
    trials: int,
    seed: int = 0,
    temperature: float = 0.7,
) -> CoverageEstimate:
    """Monte Carlo candidate-set coverage.

    For each of `trials` decision points drawn from task_sampler, samples n
    candidates and asks the oracle judge whether any is correct. Reports the
    hit fraction with a 95% Wilson interval.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    if n < 1:
        raise ValueError("n must be at least 1")
    hits = 0
    for trial in range(trials):
        context = task_sampler(trial)
        candidates = policy.propose(
            context, n, temperature, derive_seed(seed, "coverage", trial)
        )
        if any(oracle_judge(c) for c in candidates):
            hits += 1
    return CoverageEstimate(
        n=n,
        p_hat=hits / trials,
        trials=trials,
        interval=wilson_interval(hits, trials, 0.95),
    )

"""Actor interfaces: policies propose candidates, verifiers vote on them.

Budget accounting contract: every candidate costs one call and every vote
costs one call, whether the actor is simulated or remote. Implementations
increment ``llm_calls`` accordingly so selection audits reconcile exactly
against actor counters.

Simulated actors are pure functions of (inputs, seed); remote actors proxy a
chat-completion endpoint. Both are safe to invoke from concurrent episode
runners: simulated actors share no mutable state beyond their counters, and
counter updates are guarded.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Optional, Protocol, runtime_checkable

from ..trajectory import (
    ActionRecord,
    VERDICT_NO,
    VERDICT_UNPARSABLE,
    VERDICT_YES,
    parse_verdict_tag,
    record_from_text,
    render_decision,
)
from ..world.types import ActionParseError, Observation, PROFILE_EXTENDED, parse_action

FAILURE_MODES = ("wrong_object", "wrong_receptacle", "precondition_violation")


class ActorError(Exception):
    """Remote-actor failure with a machine-readable kind.

    kinds: timeout | transport | protocol | parse. timeout and transport are
    retryable; protocol and parse are not.
    """

    def __init__(self, kind: str, detail: str, retryable: bool):
        super().__init__(f"{kind}: {detail}")
        self.kind = kind
        self.detail = detail
        self.retryable = retryable


def parse_verdict(text: str) -> str:
    """Trailing verdict tag: yes | no | unparsable."""
    return parse_verdict_tag(text)


@dataclass(frozen=True, slots=True)
class PolicyContext:
    """What a policy may condition on: instruction, executed history
    (observation, action text) pairs, and the current observation."""

    instruction: str
    history: tuple[tuple[Observation, str], ...]
    observation: Observation

    def prior_action_texts(self) -> tuple[str, ...]:
        return tuple(text for _, text in self.history)


@dataclass(frozen=True, slots=True)
class Candidate:
    """One sampled decision. record is None when the raw text does not parse
    into a grammatical action; such candidates are excluded from argmax but
    still verified (budget invariance)."""

    index: int
    raw_text: str
    rationale: str
    record: Optional[ActionRecord]

    @property
    def parsable(self) -> bool:
        return self.record is not None


def make_candidate(index: int, rationale: str, action_text: str) -> Candidate:
    raw = render_decision(rationale, action_text)
    try:
        record = record_from_text(rationale, action_text)
    except (ActionParseError, ValueError):
        record = None
    return Candidate(index=index, raw_text=raw, rationale=rationale, record=record)


def candidate_from_raw(index: int, raw_text: str) -> Candidate:
    """Parse a free-form completion: last verb(argument) pattern wins."""
    try:
        action = parse_action(raw_text, PROFILE_EXTENDED)
        record = record_from_text("", action.render())
    except (ActionParseError, ValueError):
        return Candidate(index=index, raw_text=raw_text, rationale=raw_text, record=None)
    # Everything before the final action line is rationale prose.
    rationale = raw_text.rsplit(action.render(), 1)[0].strip()
    return Candidate(index=index, raw_text=raw_text, rationale=rationale, record=record)


@dataclass(frozen=True, slots=True)
class Verification:
    candidate_index: int
    vote_index: int
    text: str
    verdict: str

    def __post_init__(self) -> None:
        if self.verdict not in (VERDICT_YES, VERDICT_NO, VERDICT_UNPARSABLE):
            raise ValueError(f"unknown verdict {self.verdict!r}")


@dataclass(frozen=True, slots=True)
class NoiseProfile:
    """Error model for simulated actors.

    policy_correct_prob: per-decision probability the policy emits an action
    on a minimal plan. failure_mode_weights: relative mix of wrong-action
    kinds for the rest. verifier_fpr / verifier_fnr: per-vote probabilities
    of flipping the oracle verdict (no->yes / yes->no).
    """

    policy_correct_prob: float = 1.0
    failure_mode_weights: tuple[tuple[str, float], ...] = (
        ("wrong_object", 1.0),
        ("wrong_receptacle", 1.0),
        ("precondition_violation", 1.0),
    )
    verifier_fpr: float = 0.0
    verifier_fnr: float = 0.0

    def __post_init__(self) -> None:
        for name, value in (
            ("policy_correct_prob", self.policy_correct_prob),
            ("verifier_fpr", self.verifier_fpr),
            ("verifier_fnr", self.verifier_fnr),
        ):
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")
        total = 0.0
        for mode, weight in self.failure_mode_weights:
            if mode not in FAILURE_MODES:
                raise ValueError(f"unknown failure mode {mode!r}")
            if weight < 0:
                raise ValueError("failure mode weights must be nonnegative")
            total += weight
        if total <= 0:
            raise ValueError("failure mode weights must not all be zero")

    def normalized_weights(self) -> tuple[tuple[str, float], ...]:
        total = sum(w for _, w in self.failure_mode_weights)
        return tuple((m, w / total) for m, w in self.failure_mode_weights)


class CallCounter:
    """Thread-safe llm-call counter shared by actor implementations."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.llm_calls = 0

    def count(self, n: int) -> None:
        with self._lock:
            self.llm_calls += n


@runtime_checkable
class Policy(Protocol):
    llm_calls: int

    def propose(
        self, context: PolicyContext, n: int, temperature: float, seed: int
    ) -> list[Candidate]:
        """Sample n candidates. temperature 0 returns n copies of the single
        action the model commits to for this context."""
        ...


@runtime_checkable
class Verifier(Protocol):
    llm_calls: int

    def verify(
        self,
        instruction: str,
        prior_actions: tuple[str, ...],
        observation: Observation,
        candidate: Candidate,
        m: int,
        temperature: float,
        seed: int,
    ) -> list[Verification]:
        """Cast m independent votes on one candidate."""
        ...

"""Trajectory data model, chat decomposition, and JSON-lines serialization.

A trajectory is an instruction plus the executed steps (observation before
the action, the decision record, the outcome). Training data is derived by
decomposition: the i-th sub-conversation replays the instruction, the first
i observations, and the i-1 prior action texts as context, then carries the
i-th (rationale, action) pair as the single loss-bearing assistant turn.
Earlier rationales are stripped from context so the supervision target is
the only free-form reasoning in the record.

Serialization is byte-stable: records are emitted with sorted keys and
compact separators, one JSON object per line, so identical inputs produce
identical files.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from typing import IO, Iterable, Optional, Sequence

import numpy as np

from .world.types import (
    Action,
    Observation,
    PROFILE_CORE,
    PROFILE_EXTENDED,
    parse_action,
)

CHAT_SCHEMA = "veriact-chat-v1"
TRAJECTORY_SCHEMA = "veriact-traj-v1"
VERIFIER_SAMPLE_SCHEMA = "veriact-verifier-v1"

ROLES = ("system", "user", "assistant")

VERDICT_YES = "yes"
VERDICT_NO = "no"
VERDICT_UNPARSABLE = "unparsable"

# The verdict tag must terminate the text; a mid-text mention does not count.
_VERDICT_RE = re.compile(r"action_is_correct:\s*(yes|no)\s*\Z", re.IGNORECASE)


def parse_verdict_tag(text: str) -> str:
    """Trailing ``action_is_correct: yes|no`` tag, any casing; else unparsable."""
    match = _VERDICT_RE.search(text)
    if match is None:
        return VERDICT_UNPARSABLE
    return match.group(1).lower()


def render_decision(rationale: str, action_text: str) -> str:
    """Canonical assistant-turn rendering of a decision."""
    if rationale:
        return f"{rationale}\naction: {action_text}"
    return f"action: {action_text}"


@dataclass(frozen=True, slots=True)
class ActionRecord:
    """A parsed decision: free-form rationale plus the structured action.

    ``action_text`` must round-trip to ``action`` under the extended grammar.
    """

    rationale: str
    action_text: str
    action: Action

    def __post_init__(self) -> None:
        parsed = parse_action(self.action_text, PROFILE_EXTENDED)
        if parsed.canonical() != self.action.canonical():
            raise ValueError(
                f"action_text {self.action_text!r} does not round-trip to {self.action!r}"
            )


def record_from_text(rationale: str, action_text: str) -> ActionRecord:
    return ActionRecord(
        rationale=rationale,
        action_text=action_text,
        action=parse_action(action_text, PROFILE_EXTENDED),
    )


@dataclass(frozen=True, slots=True)
class Step:
    observation: Observation
    record: ActionRecord
    outcome: str


@dataclass(frozen=True, slots=True)
class Trajectory:
    instruction: str
    steps: tuple[Step, ...]
    success: bool
    label: str  # "positive" | "negative"
    failure_index: Optional[int] = None

    def __post_init__(self) -> None:
        if self.label not in ("positive", "negative"):
            raise ValueError(f"unknown label {self.label!r}")
        if (self.failure_index is not None) != (self.label == "negative"):
            raise ValueError("failure_index is set exactly for negative trajectories")
        if self.label == "negative" and self.success:
            raise ValueError("negative trajectories cannot be successful")
        if self.failure_index is not None and not (
            0 <= self.failure_index < len(self.steps)
        ):
            raise ValueError("failure_index out of range")
        if not self.steps:
            raise ValueError("trajectory must contain at least one step")


def trajectory_digest(trajectory: Trajectory) -> str:
    """Deterministic short id derived from content."""
    payload = json.dumps(trajectory_to_record(trajectory), sort_keys=True)
    return hashlib.sha1(payload.encode()).hexdigest()[:12]


@dataclass(frozen=True, slots=True)
class ChatTurn:
    role: str
    content: str
    compute_loss: bool = False

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        if self.compute_loss and self.role != "assistant":
            raise ValueError("compute_loss is only valid on assistant turns")


@dataclass(frozen=True, slots=True)
class SubConversation:
    turns: tuple[ChatTurn, ...]
    source: tuple[str, int]  # (trajectory id, step index)

    def __post_init__(self) -> None:
        loss_positions = [i for i, t in enumerate(self.turns) if t.compute_loss]
        if len(loss_positions) != 1 or loss_positions[0] != len(self.turns) - 1:
            raise ValueError("exactly one loss turn required, and it must be final")


@dataclass(frozen=True, slots=True)
class VerifierSample:
    """One verification training example.

    label is the ground-truth verdict; verification_text is rationale prose
    ending in the verdict tag and must agree with the label.
    """

    instruction: str
    prior_actions: tuple[str, ...]
    observation: Observation
    candidate_rationale: str
    candidate_action_text: str
    verification_text: str
    label: str

    def __post_init__(self) -> None:
        if self.label not in (VERDICT_YES, VERDICT_NO):
            raise ValueError(f"label must be yes/no, got {self.label!r}")
        if parse_verdict_tag(self.verification_text) != self.label:
            raise ValueError("verification_text verdict tag disagrees with label")


def grammar_system_prompt(profile: str = PROFILE_EXTENDED) -> str:
    """Environment profile and action grammar for the system turn."""
    lines = [
        "You control a household robot. One action per turn, formatted as",
        "verb(argument). Objects and receptacles may be referenced by id or",
        "by category. Core actions: navigate(receptacle), pick(object),",
        "place(object or receptacle), open(receptacle), close(receptacle).",
    ]
    if profile == PROFILE_EXTENDED:
        lines.append(
            "Extended actions: find(object or receptacle), toggle_on(object), "
            "toggle_off(object), slice(object)."
        )
    lines.append("Finish your reply with a line of the form: action: verb(argument)")
    return "\n".join(lines)


def decompose(
    trajectory: Trajectory,
    system_prompt: Optional[str] = None,
    profile: str = PROFILE_EXTENDED,
) -> list[SubConversation]:
    """Split a trajectory into per-step training sub-conversations."""
    prompt = system_prompt if system_prompt is not None else grammar_system_prompt(profile)
    traj_id = trajectory_digest(trajectory)
    out = []
    for i, step in enumerate(trajectory.steps):
        turns = [ChatTurn("system", prompt)]
        first_user = (
            f"{trajectory.instruction}\n\n{trajectory.steps[0].observation.render()}"
        )
        turns.append(ChatTurn("user", first_user))
        for j in range(i):
            turns.append(
                ChatTurn("assistant", render_decision("", trajectory.steps[j].record.action_text))
            )
            turns.append(ChatTurn("user", trajectory.steps[j + 1].observation.render()))
        turns.append(
            ChatTurn(
                "assistant",
                render_decision(step.record.rationale, step.record.action_text),
                compute_loss=True,
            )
        )
        out.append(SubConversation(turns=tuple(turns), source=(traj_id, i)))
    return out


# -- JSON-lines chat dataset ---------------------------------------------------


def _dump_line(record: dict) -> str:
    return json.dumps(record, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def chat_record(conversation: SubConversation) -> dict:
    return {
        "schema": CHAT_SCHEMA,
        "source": {"trajectory_id": conversation.source[0], "step_index": conversation.source[1]},
        "turns": [
            {"role": t.role, "content": t.content, "loss": t.compute_loss}
            for t in conversation.turns
        ],
    }


def serialize_chat(conversations: Iterable[SubConversation], stream: IO[str]) -> int:
    """Write one record per line; returns the record count."""
    count = 0
    for conv in conversations:
        stream.write(_dump_line(chat_record(conv)) + "\n")
        count += 1
    return count


class DatasetFormatError(ValueError):
    """Malformed dataset line; message carries the 1-based line number."""


def deserialize_chat(stream: IO[str]) -> list[SubConversation]:
    out = []
    for lineno, line in enumerate(stream, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            raw = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DatasetFormatError(f"line {lineno}: invalid JSON ({exc})") from None
        if not isinstance(raw, dict):
            raise DatasetFormatError(f"line {lineno}: record must be a JSON object")
        if raw.get("schema") != CHAT_SCHEMA:
            raise DatasetFormatError(f"line {lineno}: unknown schema {raw.get('schema')!r}")
        turns = []
        for t in raw.get("turns", []):
            role, loss = t.get("role"), t.get("loss", False)
            if role not in ROLES:
                raise DatasetFormatError(f"line {lineno}: unknown role {role!r}")
            if not isinstance(loss, bool):
                raise DatasetFormatError(f"line {lineno}: loss mask must be boolean")
            if loss and role != "assistant":
                raise DatasetFormatError(
                    f"line {lineno}: compute_loss on a {role} turn is invalid"
                )
            turns.append(ChatTurn(role, t.get("content", ""), loss))
        source = raw.get("source") or {}
        try:
            conv = SubConversation(
                turns=tuple(turns),
                source=(str(source.get("trajectory_id", "")), int(source.get("step_index", 0))),
            )
        except ValueError as exc:
            raise DatasetFormatError(f"line {lineno}: {exc}") from None
        out.append(conv)
    return out


# -- Trajectory archive --------------------------------------------------------


def trajectory_to_record(trajectory: Trajectory, provenance: Optional[dict] = None) -> dict:
    return {
        "schema": TRAJECTORY_SCHEMA,
        "provenance": provenance,
        "instruction": trajectory.instruction,
        "success": trajectory.success,
        "label": trajectory.label,
        "failure_index": trajectory.failure_index,
        "steps": [
            {
                "observation": s.observation.to_record(),
                "rationale": s.record.rationale,
                "action_text": s.record.action_text,
                "outcome": s.outcome,
            }
            for s in trajectory.steps
        ],
    }


def trajectory_from_record(record: dict) -> tuple[Trajectory, Optional[dict]]:
    if record.get("schema") != TRAJECTORY_SCHEMA:
        raise DatasetFormatError(f"unknown trajectory schema {record.get('schema')!r}")
    steps = tuple(
        Step(
            observation=Observation.from_record(s["observation"]),
            record=record_from_text(s["rationale"], s["action_text"]),
            outcome=s["outcome"],
        )
        for s in record["steps"]
    )
    trajectory = Trajectory(
        instruction=record["instruction"],
        steps=steps,
        success=bool(record["success"]),
        label=record["label"],
        failure_index=record["failure_index"],
    )
    return trajectory, record.get("provenance")


def serialize_trajectories(
    items: Iterable[tuple[Trajectory, Optional[dict]]], stream: IO[str]
) -> int:
    count = 0
    for trajectory, provenance in items:
        stream.write(_dump_line(trajectory_to_record(trajectory, provenance)) + "\n")
        count += 1
    return count


def deserialize_trajectories(stream: IO[str]) -> list[tuple[Trajectory, Optional[dict]]]:
    out = []
    for lineno, line in enumerate(stream, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            raw = json.loads(line)
            if not isinstance(raw, dict):
                raise ValueError("record must be a JSON object")
            out.append(trajectory_from_record(raw))
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            raise DatasetFormatError(f"line {lineno}: {exc}") from None
    return out


# -- Verifier samples ----------------------------------------------------------


def verifier_sample_to_record(sample: VerifierSample) -> dict:
    return {
        "schema": VERIFIER_SAMPLE_SCHEMA,
        "instruction": sample.instruction,
        "prior_actions": list(sample.prior_actions),
        "observation": sample.observation.to_record(),
        "candidate_rationale": sample.candidate_rationale,
        "candidate_action_text": sample.candidate_action_text,
        "verification_text": sample.verification_text,
        "label": sample.label,
    }


def verifier_sample_from_record(record: dict) -> VerifierSample:
    if record.get("schema") != VERIFIER_SAMPLE_SCHEMA:
        raise DatasetFormatError(f"unknown verifier-sample schema {record.get('schema')!r}")
    return VerifierSample(
        instruction=record["instruction"],
        prior_actions=tuple(record["prior_actions"]),
        observation=Observation.from_record(record["observation"]),
        candidate_rationale=record["candidate_rationale"],
        candidate_action_text=record["candidate_action_text"],
        verification_text=record["verification_text"],
        label=record["label"],
    )


def serialize_verifier_samples(samples: Iterable[VerifierSample], stream: IO[str]) -> int:
    count = 0
    for sample in samples:
        stream.write(_dump_line(verifier_sample_to_record(sample)) + "\n")
        count += 1
    return count


def deserialize_verifier_samples(stream: IO[str]) -> list[VerifierSample]:
    out = []
    for lineno, line in enumerate(stream, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            raw = json.loads(line)
            if not isinstance(raw, dict):
                raise ValueError("record must be a JSON object")
            out.append(verifier_sample_from_record(raw))
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            raise DatasetFormatError(f"line {lineno}: {exc}") from None
    return out


# -- Class balancing -----------------------------------------------------------

_BALANCE_SEED_DOMAIN = 207


def balance(
    positives: Sequence, negatives: Sequence, seed: int
) -> list:
    """Equalize class counts by subsampling the larger class, then shuffle.

    Deterministic in (inputs, seed). Raises on an empty class: balancing
    cannot manufacture examples.
    """
    if not positives or not negatives:
        raise ValueError("both classes must be nonempty to balance")
    rng = np.random.Generator(
        np.random.PCG64(np.random.SeedSequence([_BALANCE_SEED_DOMAIN, seed]))
    )
    k = min(len(positives), len(negatives))

    def subsample(items: Sequence) -> list:
        if len(items) == k:
            return list(items)
        idx = rng.permutation(len(items))[:k]
        return [items[i] for i in sorted(idx)]

    combined = subsample(positives) + subsample(negatives)
    order = rng.permutation(len(combined))
    return [combined[i] for i in order]

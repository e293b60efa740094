"""Core types for the symbolic household environment.

A scene is a static catalog (receptacle specs, object specs, action profile);
an :class:`EnvState` is the immutable dynamic configuration layered on top of
it (agent location, held object, object placement, open/toggled sets). States
are hashable values: planning and replay code uses :meth:`EnvState.key` as the
canonical configuration key, which deliberately excludes step accounting.

Two action profiles exist. The compact profile exposes
navigate/pick/place/open/close; the extended profile adds
find/toggle_on/toggle_off/slice. Actions render as ``verb(argument)`` and
parse back losslessly.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

START_LOCATION = "start"
DEFAULT_STEP_LIMIT = 32
SLICED_PREFIX = "sliced_"

OUTCOME_OK = "ok"
OUTCOME_PRECONDITION_FAILED = "precondition_failed"

PROFILE_CORE = "core"
PROFILE_EXTENDED = "extended"


class Verb(str, Enum):
    NAVIGATE = "navigate"
    PICK = "pick"
    PLACE = "place"
    OPEN = "open"
    CLOSE = "close"
    FIND = "find"
    TOGGLE_ON = "toggle_on"
    TOGGLE_OFF = "toggle_off"
    SLICE = "slice"


CORE_VERBS = frozenset({Verb.NAVIGATE, Verb.PICK, Verb.PLACE, Verb.OPEN, Verb.CLOSE})
EXTENDED_VERBS = CORE_VERBS | {Verb.FIND, Verb.TOGGLE_ON, Verb.TOGGLE_OFF, Verb.SLICE}

PROFILE_VERBS: dict[str, frozenset[Verb]] = {
    PROFILE_CORE: CORE_VERBS,
    PROFILE_EXTENDED: EXTENDED_VERBS,
}


class WorldError(Exception):
    """Base class for environment errors."""


class ActionParseError(WorldError):
    """Raised when action text does not parse under the active profile."""


class ActionGrammarError(WorldError):
    """Raised when a structured action is malformed for the active profile."""


class StepBudgetError(WorldError):
    """Raised when step() is called on a state whose budget is exhausted."""


@dataclass(frozen=True, slots=True)
class Action:
    verb: Verb
    argument: str

    def render(self) -> str:
        return f"{self.verb.value}({self.argument})"

    def canonical(self) -> "Action":
        return Action(self.verb, self.argument.strip().lower())


_ACTION_RE = re.compile(r"([a-z_]+)\s*\(\s*([A-Za-z0-9_ ]*?)\s*\)")


def parse_action(text: str, profile: str = PROFILE_EXTENDED) -> Action:
    """Parse ``verb(argument)`` text into an Action.

    The LAST pattern match in the text wins, so rationale prose that mentions
    earlier actions does not shadow the final decision. Unknown verbs, verbs
    outside the profile, and empty arguments are parse errors.
    """
    matches = list(_ACTION_RE.finditer(text.strip().lower()))
    if not matches:
        raise ActionParseError(f"no action pattern in {text!r}")
    verb_text, argument = matches[-1].group(1), matches[-1].group(2)
    try:
        verb = Verb(verb_text)
    except ValueError:
        raise ActionParseError(f"unknown verb {verb_text!r}") from None
    if verb not in PROFILE_VERBS[profile]:
        raise ActionParseError(f"verb {verb_text!r} not in profile {profile!r}")
    if not argument:
        raise ActionParseError(f"empty argument in {text!r}")
    return Action(verb, argument)


@dataclass(frozen=True, slots=True)
class ObjectSpec:
    id: str
    category: str
    attributes: frozenset[str]


@dataclass(frozen=True, slots=True)
class ReceptacleSpec:
    id: str
    category: str
    openable: bool


@dataclass(frozen=True)
class Scene:
    """Static scene catalog. Index maps are derived, not part of equality."""

    profile: str
    receptacles: tuple[ReceptacleSpec, ...]
    objects: tuple[ObjectSpec, ...]

    def __post_init__(self) -> None:
        if self.profile not in PROFILE_VERBS:
            raise ValueError(f"unknown profile {self.profile!r}")
        rec_ids = [r.id for r in self.receptacles]
        obj_ids = [o.id for o in self.objects]
        if len(set(rec_ids)) != len(rec_ids) or len(set(obj_ids)) != len(obj_ids):
            raise ValueError("duplicate ids in scene")
        if set(rec_ids) & set(obj_ids) or START_LOCATION in rec_ids:
            raise ValueError("object/receptacle id namespaces must be disjoint")
        object.__setattr__(self, "_rec_by_id", {r.id: r for r in self.receptacles})
        object.__setattr__(self, "_obj_by_id", {o.id: o for o in self.objects})

    def receptacle(self, rec_id: str) -> Optional[ReceptacleSpec]:
        return self._rec_by_id.get(rec_id)  # type: ignore[attr-defined]

    def base_object(self, obj_id: str) -> Optional[ObjectSpec]:
        return self._obj_by_id.get(obj_id)  # type: ignore[attr-defined]

    def object_spec(self, obj_id: str) -> Optional[ObjectSpec]:
        """Spec for an effective object id, deriving sliced variants."""
        direct = self.base_object(obj_id)
        if direct is not None:
            return direct
        if obj_id.startswith(SLICED_PREFIX):
            base = self.base_object(obj_id[len(SLICED_PREFIX):])
            if base is not None:
                return ObjectSpec(
                    id=SLICED_PREFIX + base.id,
                    category=SLICED_PREFIX + base.category,
                    attributes=base.attributes | {"sliced"},
                )
        return None


@dataclass(frozen=True, slots=True)
class Receptacle:
    """Materialized receptacle view: spec plus dynamic state."""

    id: str
    category: str
    openable: bool
    is_open: bool
    contents: tuple[str, ...]


@dataclass(frozen=True, slots=True)
class EnvState:
    """Immutable environment configuration.

    ``locations`` maps effective object ids to receptacle ids as a sorted
    tuple of pairs; the held object (if any) is absent from it. ``open_ids``
    contains only openable receptacles that are currently open.
    """

    scene: Scene
    agent_at: str
    holding: Optional[str]
    locations: tuple[tuple[str, str], ...]
    open_ids: frozenset[str]
    toggled_on: frozenset[str]
    step_count: int = 0
    step_limit: int = DEFAULT_STEP_LIMIT
    last_outcome: str = OUTCOME_OK
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.step_count < 0 or self.step_count > self.step_limit:
            raise ValueError("step_count out of range")
        if self.agent_at != START_LOCATION and self.scene.receptacle(self.agent_at) is None:
            raise ValueError(f"agent_at references unknown receptacle {self.agent_at!r}")
        if list(self.locations) != sorted(self.locations):
            raise ValueError("locations must be sorted")

    def key(self) -> tuple:
        """Canonical configuration key; excludes step accounting."""
        return (self.agent_at, self.holding, self.locations, self.open_ids, self.toggled_on)

    def location_of(self, obj_id: str) -> Optional[str]:
        for oid, rec in self.locations:
            if oid == obj_id:
                return rec
        return None

    def contents_of(self, rec_id: str) -> tuple[str, ...]:
        return tuple(oid for oid, rec in self.locations if rec == rec_id)

    def is_accessible(self, rec_id: str) -> bool:
        """Contents reachable: non-openable receptacles always are."""
        spec = self.scene.receptacle(rec_id)
        if spec is None:
            return False
        return not spec.openable or rec_id in self.open_ids

    @property
    def receptacles(self) -> dict[str, Receptacle]:
        out = {}
        for spec in self.scene.receptacles:
            out[spec.id] = Receptacle(
                id=spec.id,
                category=spec.category,
                openable=spec.openable,
                is_open=(spec.id in self.open_ids) if spec.openable else False,
                contents=self.contents_of(spec.id),
            )
        return out

    @property
    def objects(self) -> dict[str, tuple[ObjectSpec, Optional[str]]]:
        """Effective object specs with locations (held object has None)."""
        out = {}
        for oid, rec in self.locations:
            spec = self.scene.object_spec(oid)
            assert spec is not None, f"orphan object id {oid!r}"
            out[oid] = (spec, rec)
        if self.holding is not None:
            spec = self.scene.object_spec(self.holding)
            assert spec is not None, f"orphan held id {self.holding!r}"
            out[self.holding] = (spec, None)
        return out

    def all_object_ids(self) -> tuple[str, ...]:
        ids = [oid for oid, _ in self.locations]
        if self.holding is not None:
            ids.append(self.holding)
        return tuple(sorted(ids))


@dataclass(frozen=True, slots=True)
class Observation:
    """What the agent can see from its current location.

    ``visible`` lists (object id, category, sorted attributes) for objects at
    the current receptacle when its contents are accessible; contents of
    closed receptacles are never exposed. ``holding`` is the held object's
    CATEGORY. ``location_is_open`` is None at the start position and for
    non-openable receptacles.
    """

    location: str
    location_is_open: Optional[bool]
    visible: tuple[tuple[str, str, tuple[str, ...]], ...]
    holding: Optional[str]
    last_action_outcome: str

    def render(self) -> str:
        loc = self.location
        if self.location_is_open is not None:
            loc += " (open)" if self.location_is_open else " (closed)"
        if self.visible:
            vis = ", ".join(
                f"{oid} ({cat}: {', '.join(attrs)})" for oid, cat, attrs in self.visible
            )
        else:
            vis = "nothing"
        holding = self.holding if self.holding is not None else "nothing"
        return (
            f"location: {loc}\n"
            f"visible: {vis}\n"
            f"holding: {holding}\n"
            f"last_action: {self.last_action_outcome}"
        )

    def to_record(self) -> dict:
        return {
            "location": self.location,
            "location_is_open": self.location_is_open,
            "visible": [[oid, cat, list(attrs)] for oid, cat, attrs in self.visible],
            "holding": self.holding,
            "last_action_outcome": self.last_action_outcome,
        }

    @classmethod
    def from_record(cls, record: dict) -> "Observation":
        return cls(
            location=record["location"],
            location_is_open=record["location_is_open"],
            visible=tuple(
                (oid, cat, tuple(attrs)) for oid, cat, attrs in record["visible"]
            ),
            holding=record["holding"],
            last_action_outcome=record["last_action_outcome"],
        )


@dataclass(frozen=True, slots=True)
class PlacementGoal:
    """A set of objects that must sit at a receptacle.

    Either ``object_ids`` names explicit ids, or ``category`` with
    ``all_of_category=True`` quantifies over every instance of the category
    present in the scene.
    """

    receptacle_id: str
    object_ids: tuple[str, ...] = ()
    category: Optional[str] = None
    all_of_category: bool = False

    def __post_init__(self) -> None:
        if self.all_of_category:
            if not self.category or self.object_ids:
                raise ValueError("all_of_category goals take a category, not ids")
        elif not self.object_ids:
            raise ValueError("placement goal needs object ids or a category quantifier")


@dataclass(frozen=True, slots=True)
class ConditionalGoal:
    """Branch on whether a receptacle was open at episode start.

    ``open_at_start`` is resolved at generation time. ``active`` holds the
    placements of the matching branch; ``untouched`` pins the other branch's
    objects to their initial receptacles (they must not have been moved).
    """

    condition_receptacle: str
    open_at_start: bool
    active: tuple[PlacementGoal, ...]
    untouched: tuple[tuple[str, str], ...]


@dataclass(frozen=True, slots=True)
class Goal:
    placements: tuple[PlacementGoal, ...] = ()
    conditional: Optional[ConditionalGoal] = None

    def __post_init__(self) -> None:
        if not self.placements and self.conditional is None:
            raise ValueError("goal must contain at least one predicate")

    def mentions_sliced(self) -> bool:
        goals = list(self.placements)
        if self.conditional is not None:
            goals.extend(self.conditional.active)
        for g in goals:
            if any(oid.startswith(SLICED_PREFIX) for oid in g.object_ids):
                return True
            if g.category and g.category.startswith(SLICED_PREFIX):
                return True
        return False


TASK_CATEGORIES = (
    "Base",
    "Rephrasing",
    "ReferringExpression",
    "Context",
    "IrrelevantText",
    "MultipleRearrange",
    "NovelObjects",
    "MultipleObjects",
    "Conditional",
    "LongHorizon",
)


@dataclass(frozen=True, slots=True)
class TaskSpec:
    instruction: str
    category: str
    goal: Goal
    step_limit: int = DEFAULT_STEP_LIMIT

    def __post_init__(self) -> None:
        if self.category not in TASK_CATEGORIES:
            raise ValueError(f"unknown task category {self.category!r}")
        if self.step_limit < 1:
            raise ValueError("step_limit must be positive")


def make_state(
    scene: Scene,
    agent_at: str,
    holding: Optional[str],
    placements: dict[str, str],
    open_ids: frozenset[str] = frozenset(),
    toggled_on: frozenset[str] = frozenset(),
    step_limit: int = DEFAULT_STEP_LIMIT,
    rng_seed: int = 0,
) -> EnvState:
    """Build a validated initial state from an object->receptacle map."""
    for oid, rec in placements.items():
        if scene.object_spec(oid) is None:
            raise ValueError(f"unknown object id {oid!r}")
        if scene.receptacle(rec) is None:
            raise ValueError(f"unknown receptacle id {rec!r}")
    for rec_id in open_ids:
        spec = scene.receptacle(rec_id)
        if spec is None or not spec.openable:
            raise ValueError(f"open_ids entry {rec_id!r} is not an openable receptacle")
    if holding is not None and scene.object_spec(holding) is None:
        raise ValueError(f"unknown held object {holding!r}")
    return EnvState(
        scene=scene,
        agent_at=agent_at,
        holding=holding,
        locations=tuple(sorted(placements.items())),
        open_ids=open_ids,
        toggled_on=toggled_on,
        step_limit=step_limit,
        rng_seed=rng_seed,
    )

"""Plain-text scene/task file format (YAML, one scene per file).

A scene file fully describes a task: receptacle and object catalogs, the
initial configuration, the goal, and the instruction. Files round-trip:
``load_scene(save_scene(task, state))`` reproduces both values exactly.

An ``adjacency`` key is accepted for forward compatibility, but navigation
is flat (every receptacle reachable in one action), so any declared edges
are ignored.
"""

from __future__ import annotations

import io
from pathlib import Path
from typing import Union

import yaml

from .types import (
    ConditionalGoal,
    EnvState,
    Goal,
    ObjectSpec,
    PROFILE_VERBS,
    PlacementGoal,
    ReceptacleSpec,
    Scene,
    TaskSpec,
    make_state,
)

SCENE_FORMAT = "veriact-scene-v1"


class SceneFormatError(ValueError):
    """Malformed scene file."""


def _placement_to_raw(goal: PlacementGoal) -> dict:
    if goal.all_of_category:
        return {"category": goal.category, "all": True, "receptacle": goal.receptacle_id}
    return {"objects": list(goal.object_ids), "receptacle": goal.receptacle_id}


def _placement_from_raw(raw: dict) -> PlacementGoal:
    if raw.get("all"):
        return PlacementGoal(
            receptacle_id=str(raw["receptacle"]),
            category=str(raw["category"]),
            all_of_category=True,
        )
    return PlacementGoal(
        receptacle_id=str(raw["receptacle"]),
        object_ids=tuple(str(o) for o in raw["objects"]),
    )


def scene_document(task: TaskSpec, state: EnvState) -> dict:
    scene = state.scene
    doc: dict = {
        "format": SCENE_FORMAT,
        "profile": scene.profile,
        "category": task.category,
        "instruction": task.instruction,
        "step_limit": task.step_limit,
        "rng_seed": state.rng_seed,
        "receptacles": [
            {"id": r.id, "category": r.category, "openable": r.openable}
            for r in scene.receptacles
        ],
        "objects": [
            {
                "id": o.id,
                "category": o.category,
                "attributes": sorted(o.attributes),
                "location": state.location_of(o.id),
            }
            for o in scene.objects
        ],
        "agent_at": state.agent_at,
        "holding": state.holding,
        "open": sorted(state.open_ids),
        "adjacency": [],
        "goal": {
            "placements": [_placement_to_raw(g) for g in task.goal.placements],
            "conditional": None,
        },
    }
    cond = task.goal.conditional
    if cond is not None:
        doc["goal"]["conditional"] = {
            "receptacle": cond.condition_receptacle,
            "open_at_start": cond.open_at_start,
            "active": [_placement_to_raw(g) for g in cond.active],
            "untouched": [
                {"object": oid, "receptacle": rec} for oid, rec in cond.untouched
            ],
        }
    return doc


def save_scene(task: TaskSpec, state: EnvState, path: Union[str, Path]) -> None:
    text = yaml.safe_dump(scene_document(task, state), sort_keys=True, width=100)
    Path(path).write_text(text)


def parse_scene(text: str) -> tuple[TaskSpec, EnvState]:
    try:
        raw = yaml.safe_load(io.StringIO(text))
    except yaml.YAMLError as exc:
        raise SceneFormatError(f"invalid YAML: {exc}") from None
    if not isinstance(raw, dict) or raw.get("format") != SCENE_FORMAT:
        found = raw.get("format") if isinstance(raw, dict) else type(raw).__name__
        raise SceneFormatError(f"not a scene file (format={found!r})")
    try:
        profile = str(raw["profile"])
        if profile not in PROFILE_VERBS:
            raise SceneFormatError(f"unknown profile {profile!r}")
        receptacles = tuple(
            ReceptacleSpec(
                id=str(r["id"]), category=str(r["category"]), openable=bool(r["openable"])
            )
            for r in raw["receptacles"]
        )
        objects = []
        placements = {}
        for o in raw["objects"]:
            objects.append(
                ObjectSpec(
                    id=str(o["id"]),
                    category=str(o["category"]),
                    attributes=frozenset(str(a) for a in o["attributes"]),
                )
            )
            if o.get("location") is not None:
                placements[str(o["id"])] = str(o["location"])
        scene = Scene(profile=profile, receptacles=receptacles, objects=tuple(objects))
        goal_raw = raw["goal"]
        conditional = None
        if goal_raw.get("conditional"):
            c = goal_raw["conditional"]
            conditional = ConditionalGoal(
                condition_receptacle=str(c["receptacle"]),
                open_at_start=bool(c["open_at_start"]),
                active=tuple(_placement_from_raw(g) for g in c["active"]),
                untouched=tuple(
                    (str(u["object"]), str(u["receptacle"])) for u in c["untouched"]
                ),
            )
        goal = Goal(
            placements=tuple(_placement_from_raw(g) for g in goal_raw.get("placements", [])),
            conditional=conditional,
        )
        task = TaskSpec(
            instruction=str(raw["instruction"]),
            category=str(raw["category"]),
            goal=goal,
            step_limit=int(raw["step_limit"]),
        )
        state = make_state(
            scene,
            agent_at=str(raw["agent_at"]),
            holding=raw.get("holding"),
            placements=placements,
            open_ids=frozenset(str(r) for r in raw.get("open", [])),
            step_limit=int(raw["step_limit"]),
            rng_seed=int(raw.get("rng_seed", 0)),
        )
    except SceneFormatError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise SceneFormatError(f"invalid scene file: {exc}") from None
    # Goal references must resolve against the catalogs.
    all_goals = list(goal.placements)
    if goal.conditional is not None:
        all_goals.extend(goal.conditional.active)
        if scene.receptacle(goal.conditional.condition_receptacle) is None:
            raise SceneFormatError("conditional goal references unknown receptacle")
    for g in all_goals:
        if scene.receptacle(g.receptacle_id) is None:
            raise SceneFormatError(f"goal references unknown receptacle {g.receptacle_id!r}")
        for oid in g.object_ids:
            if scene.object_spec(oid) is None:
                raise SceneFormatError(f"goal references unknown object {oid!r}")
    return task, state


def load_scene(path: Union[str, Path]) -> tuple[TaskSpec, EnvState]:
    return parse_scene(Path(path).read_text())

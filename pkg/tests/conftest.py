"""Shared fixtures: a small handcrafted scene and episode factories."""

from __future__ import annotations

import sys

import pytest

from veriact.actors.simulated import OraclePolicy, TruthChannel
from veriact.bench.runner import run_episode
from veriact.selection import METHOD_GREEDY
from veriact.world.planner import plan_oracle_for
from veriact.world.tasks import generate_task
from veriact.world.types import (
    Goal,
    ObjectSpec,
    PROFILE_EXTENDED,
    PlacementGoal,
    Scene,
    TaskSpec,
    make_state,
)


def build_small_scene(profile: str = PROFILE_EXTENDED) -> Scene:
    """Two plain receptacles, one openable, three objects."""
    from veriact.world.types import ReceptacleSpec

    return Scene(
        profile=profile,
        receptacles=(
            ReceptacleSpec("cabinet_0", "cabinet", openable=True),
            ReceptacleSpec("shelf_0", "shelf", openable=False),
            ReceptacleSpec("table_0", "table", openable=False),
        ),
        objects=(
            ObjectSpec("apple_0", "apple", frozenset({"red", "fruit"})),
            ObjectSpec("book_0", "book", frozenset({"paper"})),
            ObjectSpec("mug_0", "mug", frozenset({"ceramic"})),
        ),
    )


@pytest.fixture
def small_scene() -> Scene:
    return build_small_scene()


@pytest.fixture
def small_state(small_scene):
    return make_state(
        small_scene,
        agent_at="start",
        holding=None,
        placements={"apple_0": "shelf_0", "book_0": "shelf_0", "mug_0": "cabinet_0"},
        step_limit=20,
    )


@pytest.fixture
def small_task(small_state) -> TaskSpec:
    return TaskSpec(
        instruction="Move the apple to the table.",
        category="Base",
        goal=Goal(placements=(PlacementGoal("table_0", object_ids=("apple_0",)),)),
        step_limit=small_state.step_limit,
    )


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Replay the acceptance checklist after capture ends, numbers and all."""
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULT_LINES", None) if module else None
    if not lines:
        return
    terminalreporter.section("acceptance checklist")
    for line in lines:
        terminalreporter.write_line(line)


def oracle_trajectory(category: str, task_seed: int, episode_seed: int = 0):
    """Generate a task and run the oracle policy greedily to a positive
    trajectory. Returns (task, initial state, trajectory)."""
    task, state = generate_task(category, task_seed)
    truth = TruthChannel(task, plan_oracle_for(state.scene, task.goal), state)
    result = run_episode(
        task, state, METHOD_GREEDY, OraclePolicy(truth), seed=episode_seed, truth=truth
    )
    assert result.success and result.trajectory is not None, (category, task_seed)
    return task, state, result.trajectory

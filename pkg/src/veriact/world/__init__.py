"""Symbolic household environment: state, actions, tasks, and planning."""

from .engine import goal_holds, is_success, observe, step
from .planner import PlanOracle, optimal_plan, plan_oracle_for, planning_actions
from .scenes import SceneFormatError, load_scene, parse_scene, save_scene, scene_document
from .tasks import generate_pick_place, generate_task
from .types import (
    Action,
    ActionParseError,
    CORE_VERBS,
    EXTENDED_VERBS,
    EnvState,
    ConditionalGoal,
    Goal,
    OUTCOME_OK,
    OUTCOME_PRECONDITION_FAILED,
    Observation,
    ObjectSpec,
    PROFILE_VERBS,
    PlacementGoal,
    ReceptacleSpec,
    Scene,
    StepBudgetError,
    TASK_CATEGORIES,
    TaskSpec,
    Verb,
    WorldError,
    make_state,
    parse_action,
)
from .vocab import ObjectEntry, Vocabulary, load_vocabulary

__all__ = [
    "Action",
    "ActionParseError",
    "CORE_VERBS",
    "ConditionalGoal",
    "EXTENDED_VERBS",
    "EnvState",
    "Goal",
    "OUTCOME_OK",
    "OUTCOME_PRECONDITION_FAILED",
    "Observation",
    "ObjectEntry",
    "ObjectSpec",
    "PROFILE_VERBS",
    "PlacementGoal",
    "PlanOracle",
    "ReceptacleSpec",
    "Scene",
    "SceneFormatError",
    "StepBudgetError",
    "TASK_CATEGORIES",
    "TaskSpec",
    "Verb",
    "Vocabulary",
    "WorldError",
    "generate_pick_place",
    "generate_task",
    "goal_holds",
    "is_success",
    "load_scene",
    "load_vocabulary",
    "make_state",
    "observe",
    "optimal_plan",
    "parse_action",
    "parse_scene",
    "plan_oracle_for",
    "planning_actions",
    "save_scene",
    "scene_document",
    "step",
]

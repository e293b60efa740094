"""Seeded task and scene generation for the ten task categories.

Each category has a fixed receptacle layout and a small pool of object-set
combinations; seeds vary the object choice, initial placement, goal
receptacle, and instruction phrasing. Keeping the combinatorics of
(scene catalog, goal) small is deliberate: plan-distance oracles are cached
per (scene, goal), so episodes across seeds reuse the same reachability
graph with different start configurations.

Every generated scene offers raw material for failure synthesis: either a
distractor object sits at a goal object's source receptacle, or (LongHorizon)
several goal objects make any out-of-order pick a wrong one. Off-goal
receptacles exist in every layout, so wrong-receptacle mistakes are always
expressible.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .types import (
    ConditionalGoal,
    EnvState,
    Goal,
    ObjectSpec,
    PlacementGoal,
    PROFILE_CORE,
    PROFILE_EXTENDED,
    ReceptacleSpec,
    Scene,
    TASK_CATEGORIES,
    TaskSpec,
    make_state,
)
from .vocab import Vocabulary, load_vocabulary

_TASK_SEED_DOMAIN = 101

_LAYOUTS: dict[str, tuple[str, ...]] = {
    "default": ("counter", "shelf", "sofa", "table"),
    "conditional": ("counter", "fridge", "shelf", "table"),
}

_BASE_POOL = ("apple", "banana", "sponge", "book", "cup", "ball", "plate", "can")
_REFEXP_POOL = ("banana", "plum", "sponge", "ball", "book", "lemon", "strawberry", "hammer")
_CONTEXT_POOL = ("ball", "sponge", "book", "can", "padlock", "cup", "hammer", "apple")
_NOVEL_POOL = ("lego", "rubiks_cube", "padlock", "drill", "clamp", "screwdriver")
_MULTI_POOL = ("ball", "cup", "book", "plate", "spoon", "block")
_GROUP_POOL = ("apple", "banana", "sponge", "book", "cup", "ball")
_FAR_DISTRACTORS = ("box", "scissors", "spatula")

_REPHRASINGS = (
    "Bring the {obj} to the {rec}.",
    "Take the {obj} and put it on the {rec}.",
    "Could you put the {obj} on the {rec}?",
    "Please carry the {obj} over to the {rec}.",
    "Grab the {obj} and set it down on the {rec}.",
)

_IRRELEVANT_SENTENCES = (
    "The weather has been lovely all week.",
    "Someone left the radio playing in the hallway.",
    "The neighbors are repainting their fence this weekend.",
    "A documentary about deep-sea fish is on tonight.",
    "The wall calendar still shows last month.",
)


def _rng(category: str, seed: int) -> np.random.Generator:
    cat_index = TASK_CATEGORIES.index(category)
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence([_TASK_SEED_DOMAIN, cat_index, seed]))
    )


def _build_scene(
    vocab: Vocabulary,
    layout: tuple[str, ...],
    object_categories: list[str],
    profile: str,
) -> Scene:
    receptacles = tuple(
        ReceptacleSpec(id=f"{cat}_0", category=cat, openable=vocab.receptacles[cat])
        for cat in layout
    )
    counts: dict[str, int] = {}
    objects = []
    for cat in object_categories:
        idx = counts.get(cat, 0)
        counts[cat] = idx + 1
        entry = vocab.objects[cat]
        objects.append(
            ObjectSpec(id=f"{cat}_{idx}", category=cat, attributes=entry.attributes())
        )
    return Scene(profile=profile, receptacles=receptacles, objects=tuple(objects))


def _choice(rng: np.random.Generator, items: tuple[str, ...]) -> str:
    return items[int(rng.integers(len(items)))]


def _pick_two(rng: np.random.Generator, items: tuple[str, ...]) -> tuple[str, str]:
    first = int(rng.integers(len(items)))
    second = int(rng.integers(len(items) - 1))
    if second >= first:
        second += 1
    return items[first], items[second]


def _single_target_task(
    category: str,
    seed: int,
    pool: tuple[str, ...],
    instruction_for,
    profile: str = PROFILE_CORE,
    distractor_filter=None,
) -> tuple[TaskSpec, EnvState]:
    """Shared generator: one target object moved to one receptacle."""
    vocab = load_vocabulary()
    rng = _rng(category, seed)
    target_cat = _choice(rng, pool)
    ring = [c for c in pool if c != target_cat]
    if distractor_filter is not None:
        ring = [c for c in ring if distractor_filter(vocab, target_cat, c)]
    near = ring[(pool.index(target_cat) + 1) % len(ring)]
    far_pool = [
        c for c in _FAR_DISTRACTORS
        if c not in (target_cat, near)
        and (distractor_filter is None or distractor_filter(vocab, target_cat, c))
    ]
    far = far_pool[int(rng.integers(len(far_pool)))]
    layout = _LAYOUTS["default"]
    scene = _build_scene(vocab, layout, [target_cat, near, far], profile)
    rec_ids = [f"{c}_0" for c in layout]
    src, tgt = _pick_two(rng, tuple(rec_ids))
    far_home = _choice(rng, tuple(r for r in rec_ids if r != src))
    placements = {f"{target_cat}_0": src, f"{near}_0": src, f"{far}_0": far_home}
    state = make_state(scene, "start", None, placements, rng_seed=seed)
    goal = Goal(placements=(PlacementGoal(receptacle_id=tgt, object_ids=(f"{target_cat}_0",)),))
    tgt_noun = scene.receptacle(tgt).category  # type: ignore[union-attr]
    instruction = instruction_for(rng, vocab, target_cat, tgt_noun)
    return TaskSpec(instruction=instruction, category=category, goal=goal), state


def _gen_base(category: str, seed: int) -> tuple[TaskSpec, EnvState]:
    return _single_target_task(
        category, seed, _BASE_POOL,
        lambda rng, vocab, obj, rec: f"Move the {obj} to the {rec}.",
    )


def _gen_rephrasing(seed: int) -> tuple[TaskSpec, EnvState]:
    return _single_target_task(
        "Rephrasing", seed, _BASE_POOL,
        lambda rng, vocab, obj, rec: _choice(rng, _REPHRASINGS).format(obj=obj, rec=rec),
    )


def _gen_referring(seed: int) -> tuple[TaskSpec, EnvState]:
    def instruction(rng, vocab: Vocabulary, obj: str, rec: str) -> str:
        return f"Move the {vocab.objects[obj].referring_phrase()} to the {rec}."

    return _single_target_task("ReferringExpression", seed, _REFEXP_POOL, instruction)


def _gen_context(seed: int) -> tuple[TaskSpec, EnvState]:
    def distinct_class(vocab: Vocabulary, target: str, other: str) -> bool:
        return vocab.objects[other].semantic_class != vocab.objects[target].semantic_class

    def instruction(rng, vocab: Vocabulary, obj: str, rec: str) -> str:
        return f"Find {vocab.context_phrase(obj)} and put it on the {rec}."

    return _single_target_task(
        "Context", seed, _CONTEXT_POOL, instruction, distractor_filter=distinct_class
    )


def _gen_irrelevant(seed: int) -> tuple[TaskSpec, EnvState]:
    def instruction(rng, vocab, obj: str, rec: str) -> str:
        extra = list(_IRRELEVANT_SENTENCES)
        rng.shuffle(extra)
        count = 1 + int(rng.integers(2))
        return " ".join([f"Move the {obj} to the {rec}."] + extra[:count])

    return _single_target_task("IrrelevantText", seed, _BASE_POOL, instruction)


def _gen_novel(seed: int) -> tuple[TaskSpec, EnvState]:
    return _single_target_task(
        "NovelObjects", seed, _NOVEL_POOL,
        lambda rng, vocab, obj, rec: f"Move the {obj} to the {rec}.",
        profile=PROFILE_EXTENDED,
    )


def _gen_multiple_rearrange(seed: int) -> tuple[TaskSpec, EnvState]:
    vocab = load_vocabulary()
    rng = _rng("MultipleRearrange", seed)
    pool = list(_GROUP_POOL)
    rng.shuffle(pool)
    trio = sorted(pool[:3])
    distractor = _choice(rng, tuple(c for c in _FAR_DISTRACTORS if c not in trio))
    layout = _LAYOUTS["default"]
    scene = _build_scene(vocab, layout, trio + [distractor], PROFILE_CORE)
    rec_ids = [f"{c}_0" for c in layout]
    placements = {}
    goals = []
    mentions = []
    for cat in trio:
        src, tgt = _pick_two(rng, tuple(rec_ids))
        placements[f"{cat}_0"] = src
        goals.append(PlacementGoal(receptacle_id=tgt, object_ids=(f"{cat}_0",)))
        mentions.append((cat, scene.receptacle(tgt).category))  # type: ignore[union-attr]
    placements[f"{distractor}_0"] = placements[f"{trio[0]}_0"]
    state = make_state(scene, "start", None, placements, rng_seed=seed)
    instruction = (
        f"Move the {mentions[0][0]} to the {mentions[0][1]}, "
        f"the {mentions[1][0]} to the {mentions[1][1]}, "
        f"and the {mentions[2][0]} to the {mentions[2][1]}."
    )
    task = TaskSpec(
        instruction=instruction, category="MultipleRearrange", goal=Goal(placements=tuple(goals))
    )
    return task, state


def _gen_multiple_objects(seed: int) -> tuple[TaskSpec, EnvState]:
    vocab = load_vocabulary()
    rng = _rng("MultipleObjects", seed)
    target_cat = _choice(rng, _MULTI_POOL)
    count = 2 + int(rng.integers(2))
    distractor = _choice(rng, tuple(c for c in _FAR_DISTRACTORS if c != target_cat))
    layout = _LAYOUTS["default"]
    scene = _build_scene(vocab, layout, [target_cat] * count + [distractor], PROFILE_CORE)
    rec_ids = [f"{c}_0" for c in layout]
    tgt = _choice(rng, tuple(rec_ids))
    non_targets = tuple(r for r in rec_ids if r != tgt)
    placements = {
        f"{target_cat}_{i}": _choice(rng, non_targets) for i in range(count)
    }
    placements[f"{distractor}_0"] = placements[f"{target_cat}_0"]
    state = make_state(scene, "start", None, placements, rng_seed=seed)
    goal = Goal(
        placements=(
            PlacementGoal(receptacle_id=tgt, category=target_cat, all_of_category=True),
        )
    )
    tgt_noun = scene.receptacle(tgt).category  # type: ignore[union-attr]
    instruction = f"Move every {target_cat} to the {tgt_noun}."
    return TaskSpec(instruction=instruction, category="MultipleObjects", goal=goal), state


def _gen_conditional(seed: int) -> tuple[TaskSpec, EnvState]:
    vocab = load_vocabulary()
    rng = _rng("Conditional", seed)
    obj_open, obj_closed = _pick_two(rng, _BASE_POOL)
    distractor = _choice(
        rng, tuple(c for c in _FAR_DISTRACTORS if c not in (obj_open, obj_closed))
    )
    layout = _LAYOUTS["conditional"]
    scene = _build_scene(vocab, layout, [obj_open, obj_closed, distractor], PROFILE_CORE)
    fridge = "fridge_0"
    plain = tuple(f"{c}_0" for c in layout if c != "fridge")
    src = _choice(rng, plain)
    open_at_start = bool(rng.integers(2))
    alt_target = _choice(rng, tuple(r for r in plain if r != src))
    placements = {
        f"{obj_open}_0": src,
        f"{obj_closed}_0": src,
        f"{distractor}_0": src,
    }
    state = make_state(
        scene, "start", None, placements,
        open_ids=frozenset({fridge}) if open_at_start else frozenset(),
        rng_seed=seed,
    )
    if open_at_start:
        active = (PlacementGoal(receptacle_id=fridge, object_ids=(f"{obj_open}_0",)),)
        untouched = ((f"{obj_closed}_0", src),)
    else:
        active = (PlacementGoal(receptacle_id=alt_target, object_ids=(f"{obj_closed}_0",)),)
        untouched = ((f"{obj_open}_0", src),)
    goal = Goal(
        conditional=ConditionalGoal(
            condition_receptacle=fridge,
            open_at_start=open_at_start,
            active=active,
            untouched=untouched,
        )
    )
    alt_noun = scene.receptacle(alt_target).category  # type: ignore[union-attr]
    instruction = (
        f"If the fridge is open, move the {obj_open} into it; "
        f"otherwise move the {obj_closed} to the {alt_noun}. "
        "Move only the object that is required."
    )
    return TaskSpec(instruction=instruction, category="Conditional", goal=goal), state


def _gen_long_horizon(seed: int) -> tuple[TaskSpec, EnvState]:
    vocab = load_vocabulary()
    rng = _rng("LongHorizon", seed)
    pool = list(_GROUP_POOL)
    rng.shuffle(pool)
    quad = sorted(pool[:4])
    layout = _LAYOUTS["default"]
    scene = _build_scene(vocab, layout, quad, PROFILE_EXTENDED)
    rec_ids = [f"{c}_0" for c in layout]
    sources = list(rec_ids)
    rng.shuffle(sources)
    placements = {}
    goals = []
    phrases = []
    for cat, src in zip(quad, sources):
        tgt = _choice(rng, tuple(r for r in rec_ids if r != src))
        placements[f"{cat}_0"] = src
        goals.append(PlacementGoal(receptacle_id=tgt, object_ids=(f"{cat}_0",)))
        phrases.append(f"the {cat} to the {scene.receptacle(tgt).category}")  # type: ignore[union-attr]
    state = make_state(scene, "start", None, placements, rng_seed=seed)
    instruction = (
        f"Move {phrases[0]}, {phrases[1]}, {phrases[2]}, and {phrases[3]}."
    )
    task = TaskSpec(
        instruction=instruction, category="LongHorizon", goal=Goal(placements=tuple(goals))
    )
    return task, state


def generate_task(category: str, seed: int) -> tuple[TaskSpec, EnvState]:
    """Deterministically generate (task, initial state) for a category."""
    if category not in TASK_CATEGORIES:
        raise ValueError(f"unknown task category {category!r}")
    if category in ("Base",):
        return _gen_base(category, seed)
    if category == "Rephrasing":
        return _gen_rephrasing(seed)
    if category == "ReferringExpression":
        return _gen_referring(seed)
    if category == "Context":
        return _gen_context(seed)
    if category == "IrrelevantText":
        return _gen_irrelevant(seed)
    if category == "MultipleRearrange":
        return _gen_multiple_rearrange(seed)
    if category == "NovelObjects":
        return _gen_novel(seed)
    if category == "MultipleObjects":
        return _gen_multiple_objects(seed)
    if category == "Conditional":
        return _gen_conditional(seed)
    if category == "LongHorizon":
        return _gen_long_horizon(seed)
    raise AssertionError(category)  # pragma: no cover


def generate_pick_place(
    seed: int,
    n_objects: int = 1,
    start_at_source: bool = False,
    step_limit: Optional[int] = None,
    category: str = "Base",
) -> tuple[TaskSpec, EnvState]:
    """Fixed-shape pick-and-place task for benchmark suites.

    Each of ``n_objects`` target objects sits at its own source receptacle
    and must move to a shared goal receptacle. From the start position the
    optimal plan is exactly ``4 * n_objects`` steps (navigate, pick,
    navigate, place per object); with ``start_at_source=True`` and one
    object it is 3 steps (pick, navigate, place). ``step_limit`` defaults to
    the optimal plan length, which makes per-step correctness compound
    multiplicatively (one wasted step forfeits the episode).
    """
    if not 1 <= n_objects <= 3:
        raise ValueError("n_objects must be 1..3")
    vocab = load_vocabulary()
    rng = np.random.Generator(
        np.random.PCG64(np.random.SeedSequence([_TASK_SEED_DOMAIN, 99, seed]))
    )
    layout = _LAYOUTS["default"]
    rec_ids = [f"{c}_0" for c in layout]
    pool = list(_GROUP_POOL)
    rng.shuffle(pool)
    targets = sorted(pool[:n_objects])
    distractor = _choice(rng, tuple(c for c in _FAR_DISTRACTORS if c not in targets))
    scene = _build_scene(vocab, layout, targets + [distractor], PROFILE_CORE)
    tgt = _choice(rng, tuple(rec_ids))
    sources = [r for r in rec_ids if r != tgt]
    rng.shuffle(sources)
    placements = {}
    goals = []
    phrases = []
    for cat, src in zip(targets, sources):
        placements[f"{cat}_0"] = src
        goals.append(PlacementGoal(receptacle_id=tgt, object_ids=(f"{cat}_0",)))
        phrases.append(f"the {cat}")
    placements[f"{distractor}_0"] = placements[f"{targets[0]}_0"]
    plan_len = 4 * n_objects
    agent_at = "start"
    if start_at_source:
        if n_objects != 1:
            raise ValueError("start_at_source supports a single object")
        agent_at = placements[f"{targets[0]}_0"]
        plan_len = 3
    limit = step_limit if step_limit is not None else plan_len
    state = make_state(
        scene, agent_at, None, placements, step_limit=limit, rng_seed=seed
    )
    tgt_noun = scene.receptacle(tgt).category  # type: ignore[union-attr]
    listing = ", ".join(phrases[:-1]) + f" and {phrases[-1]}" if len(phrases) > 1 else phrases[0]
    instruction = f"Move {listing} to the {tgt_noun}."
    task = TaskSpec(
        instruction=instruction, category=category,
        goal=Goal(placements=tuple(goals)), step_limit=limit,
    )
    return task, state

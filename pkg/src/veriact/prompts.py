"""Prompt templates for LLM-facing actors and teachers.

Templates are plain text files shipped as package data with named
``{slot}`` placeholders; :func:`render_template` fills them via str.format.
Keeping them external lets deployments tune wording without code changes.
"""

from __future__ import annotations

import functools
import string
from importlib import resources

TEMPLATE_NAMES = (
    "policy_prompt",
    "verifier_prompt",
    "cot_teacher",
    "mistake_teacher",
)


@functools.lru_cache(maxsize=None)
def load_template(name: str) -> str:
    if name not in TEMPLATE_NAMES:
        raise ValueError(f"unknown template {name!r}")
    return resources.files("veriact.templates").joinpath(f"{name}.txt").read_text()


def template_slots(name: str) -> set[str]:
    slots = set()
    for _, field_name, _, _ in string.Formatter().parse(load_template(name)):
        if field_name:
            slots.add(field_name)
    return slots


def render_template(name: str, **slots: str) -> str:
    template = load_template(name)
    required = template_slots(name)
    missing = required - set(slots)
    if missing:
        raise ValueError(f"template {name!r} missing slots: {sorted(missing)}")
    return template.format(**{k: slots[k] for k in required})

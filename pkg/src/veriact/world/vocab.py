"""Versioned attribute vocabulary for scene generation and referring phrases.

The vocabulary is a closed table shipped as package data
(``veriact/data/attribute_vocab_v1.yaml``). Each object category carries one
color, one shape attribute, and one semantic class; receptacle categories
declare whether they are openable. Instruction templates draw referring
phrases ("curved yellow fruit") and context phrases ("a sports object") from
this table so that attribute-based references resolve unambiguously.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from importlib import resources

import yaml

VOCAB_RESOURCE = "attribute_vocab_v1.yaml"


@dataclass(frozen=True)
class ObjectEntry:
    category: str
    color: str
    shape: str
    semantic_class: str

    def attributes(self) -> frozenset[str]:
        return frozenset({self.color, self.shape, self.semantic_class})

    def referring_phrase(self) -> str:
        # Fixed order keeps phrases deterministic: shape, color, class.
        return f"{self.shape} {self.color} {self.semantic_class}"


@dataclass(frozen=True)
class Vocabulary:
    version: int
    objects: dict[str, ObjectEntry]
    class_phrases: dict[str, str]
    receptacles: dict[str, bool]  # category -> openable

    def object_categories(self) -> tuple[str, ...]:
        return tuple(sorted(self.objects))

    def receptacle_categories(self) -> tuple[str, ...]:
        return tuple(sorted(self.receptacles))

    def context_phrase(self, category: str) -> str:
        entry = self.objects[category]
        return self.class_phrases[entry.semantic_class]


@functools.lru_cache(maxsize=1)
def load_vocabulary() -> Vocabulary:
    """Load the packaged vocabulary table (cached)."""
    text = resources.files("veriact.data").joinpath(VOCAB_RESOURCE).read_text()
    return parse_vocabulary(text)


def parse_vocabulary(text: str) -> Vocabulary:
    raw = yaml.safe_load(text)
    if raw.get("format") != "veriact-attribute-vocab":
        raise ValueError(f"not an attribute vocabulary file: format={raw.get('format')!r}")
    objects = {}
    for category, fields in raw["objects"].items():
        objects[category] = ObjectEntry(
            category=category,
            color=str(fields["color"]),
            shape=str(fields["shape"]),
            semantic_class=str(fields["class"]),
        )
    receptacles = {cat: bool(fields["openable"]) for cat, fields in raw["receptacles"].items()}
    return Vocabulary(
        version=int(raw["version"]),
        objects=objects,
        class_phrases={k: str(v) for k, v in raw["classes"].items()},
        receptacles=receptacles,
    )

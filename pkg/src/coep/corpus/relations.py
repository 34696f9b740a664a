"""The nine inferential relations and the six sequential-event relations.

Inferential relations carry a natural-language reformulation ("[agent role]
[relation]") used when building model inputs.  Sequential relations carry a
direction: forward relations read head-then-tail in time, reversed relations
the opposite, and normalization flips the latter. ``HasPrerequisite`` follows
the reversed-arrow convention literally even though its canonical example
reads temporally counterintuitive; see README notes.
"""

from __future__ import annotations

from enum import Enum


class Relation(Enum):
    """Inferential if-then relations, in canonical prompt order."""

    X_INTENT = "xIntent"
    X_NEED = "xNeed"
    X_ATTR = "xAttr"
    X_EFFECT = "xEffect"
    X_REACT = "xReact"
    X_WANT = "xWant"
    O_REACT = "oReact"
    O_WANT = "oWant"
    O_EFFECT = "oEffect"

    @classmethod
    def from_name(cls, name: str) -> "Relation":
        try:
            return _BY_NAME[name]
        except KeyError:
            raise ValueError(f"unknown inferential relation: {name!r}") from None


_BY_NAME = {r.value: r for r in Relation}

CANONICAL_RELATIONS: tuple[Relation, ...] = tuple(Relation)

_PHRASES: dict[Relation, str] = {
    Relation.X_INTENT: "PersonX intent",
    Relation.X_NEED: "PersonX need",
    Relation.X_ATTR: "PersonX attribute",
    Relation.X_EFFECT: "PersonX effect",
    Relation.X_REACT: "PersonX react",
    Relation.X_WANT: "PersonX want",
    Relation.O_REACT: "Other react",
    Relation.O_WANT: "Other want",
    Relation.O_EFFECT: "Other effect",
}


def reformulate_relation(relation: Relation) -> str:
    """Fixed natural-language phrase for an inferential relation."""
    return _PHRASES[relation]


# Sequential-event relations: the head-to-tail arrow direction decides whether
# (head, tail) already reads preceding-then-future or must be flipped.
SEQUENTIAL_FORWARD = frozenset(
    {"Causes", "CausesDesire", "HasSubevent", "HasFirstSubevent"}
)
SEQUENTIAL_REVERSED = frozenset({"HasPrerequisite", "HasLastSubevent"})
SEQUENTIAL_RELATIONS = SEQUENTIAL_FORWARD | SEQUENTIAL_REVERSED

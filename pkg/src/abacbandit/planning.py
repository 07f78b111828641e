"""Attribute value hierarchies and hierarchy-based log augmentation.

A hierarchy is a per-attribute DAG of (upper, lower) value pairs. Permit
decisions propagate to upper neighboring states, deny decisions to lower
ones, one direct edge at a time: an entry's neighbor inherits its decision
only when that state is not already in the log. Only first-level neighbors
of the original entries are considered; added entries never cascade.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

from .featurize import State, get_request, get_state
from .model import AttributeSchema, Decision, SchemaError

EQUAL = "equal"
UPPER = "upper"
LOWER = "lower"
INCOMPARABLE = "incomparable"


@dataclass(frozen=True)
class ValueHierarchy:
    """Per-attribute ordered pairs (upper, lower); attributes may be absent."""

    edges: Mapping[str, tuple[tuple[str, str], ...]]

    def __post_init__(self):
        object.__setattr__(self, "edges",
                           {a: tuple(tuple(e) for e in es) for a, es in self.edges.items()})
        for attr, pairs in self.edges.items():
            seen = set()
            children: dict[str, list[str]] = {}
            for upper, lower in pairs:
                if upper == lower:
                    raise ValueError(f"hierarchy for {attr!r} has reflexive pair {upper!r}")
                if (upper, lower) in seen:
                    raise ValueError(f"hierarchy for {attr!r} repeats edge {(upper, lower)}")
                seen.add((upper, lower))
                children.setdefault(upper, []).append(lower)
            _check_acyclic(attr, children)

    def for_attr(self, attr: str) -> tuple[tuple[str, str], ...]:
        return self.edges.get(attr, ())


def _check_acyclic(attr: str, children: Mapping[str, list[str]]) -> None:
    WHITE, GRAY, BLACK = 0, 1, 2
    color: dict[str, int] = {}

    def visit(node: str) -> None:
        color[node] = GRAY
        for nxt in children.get(node, ()):
            c = color.get(nxt, WHITE)
            if c == GRAY:
                raise ValueError(f"hierarchy for {attr!r} contains a cycle through {nxt!r}")
            if c == WHITE:
                visit(nxt)
        color[node] = BLACK

    for node in list(children):
        if color.get(node, WHITE) == WHITE:
            visit(node)


def validate_hierarchy(h: ValueHierarchy, schema: AttributeSchema) -> list[str]:
    """Violations of the hierarchy against a schema; empty means compatible."""
    out: list[str] = []
    names = set(schema.names())
    for attr, pairs in h.edges.items():
        if attr not in names:
            out.append(f"hierarchy references unknown attribute {attr!r}")
            continue
        valid = set(schema.attribute(attr).values)
        for upper, lower in pairs:
            for v in (upper, lower):
                if v not in valid:
                    out.append(f"hierarchy for {attr!r} uses value {v!r} outside the range")
    return out


def closeness(h: ValueHierarchy, schema: AttributeSchema, attr: str,
              v1: str, v2: str) -> str:
    """Relation of v1 to v2 under the direct edges of attr's hierarchy:
    'equal', 'upper' (v1 above v2), 'lower', or 'incomparable'. Chains are
    not followed; only first-level edges count."""
    valid = schema.attribute(attr).values
    for v in (v1, v2):
        if v not in valid:
            raise SchemaError(f"value {v!r} not in range of attribute {attr!r}")
    if v1 == v2:
        return EQUAL
    pairs = h.for_attr(attr)
    if (v1, v2) in pairs:
        return UPPER
    if (v2, v1) in pairs:
        return LOWER
    return INCOMPARABLE


def get_upper_neighbors(state: State, h: ValueHierarchy) -> tuple[State, ...]:
    """States one direct edge above: for each attribute edge whose lower end
    is the state's value, substitute the upper end."""
    out = []
    for i, attr in enumerate(state.schema.attributes):
        v = state.values[i]
        for upper, lower in h.for_attr(attr.name):
            if v == lower:
                out.append(state.replace_value(i, upper))
    return tuple(out)


def get_lower_neighbors(state: State, h: ValueHierarchy) -> tuple[State, ...]:
    out = []
    for i, attr in enumerate(state.schema.attributes):
        v = state.values[i]
        for upper, lower in h.for_attr(attr.name):
            if v == upper:
                out.append(state.replace_value(i, lower))
    return tuple(out)


def plan_augment(log, h: ValueHierarchy, schema: AttributeSchema):
    """Extend a log with first-level neighbor decisions.

    Iterates over a snapshot of the input: permit entries contribute their
    upper neighbors as permits, deny entries their lower neighbors as
    denies, each added only if the state appears nowhere in the log so far
    (original entries or earlier additions). Original entries are preserved
    in order with additions appended.
    """
    problems = validate_hierarchy(h, schema)
    if problems:
        raise SchemaError("; ".join(problems))
    out = list(log)
    seen = set()
    for request, _ in log:
        seen.add(get_state(request, schema).key())
    for request, decision in list(log):
        state = get_state(request, schema)
        if decision is Decision.PERMIT:
            neighbors = get_upper_neighbors(state, h)
        else:
            neighbors = get_lower_neighbors(state, h)
        for nb in neighbors:
            key = nb.key()
            if key in seen:
                continue
            seen.add(key)
            out.append((get_request(nb), decision))
    return out


def hierarchy_to_json(h: ValueHierarchy) -> dict:
    return {attr: [list(e) for e in pairs] for attr, pairs in h.edges.items()}


def hierarchy_from_json(obj: Mapping) -> ValueHierarchy:
    return ValueHierarchy({attr: tuple((e[0], e[1]) for e in pairs)
                           for attr, pairs in obj.items()})


def save_hierarchy(h: ValueHierarchy, path: str | Path) -> None:
    Path(path).write_text(json.dumps(hierarchy_to_json(h), indent=2) + "\n", encoding="utf-8")


def load_hierarchy(path: str | Path) -> ValueHierarchy:
    return hierarchy_from_json(json.loads(Path(path).read_text(encoding="utf-8")))

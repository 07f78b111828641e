"""Core ABAC formalism: schemas, filters, rules, policies, and decision evaluation.

Users, objects, and the environment are represented directly by their
attribute assignments; there are no separate identity tables. A policy is
an ordered rule list over equality filters plus a default decision and a
conflict-resolution mode.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Mapping

USER = "user"
OBJECT = "object"
ENVIRONMENT = "environment"
KINDS = (USER, OBJECT, ENVIRONMENT)

WILDCARD = "*"

DENY_OVERRIDES = "deny_overrides"
FIRST_MATCH = "first_match"
CONFLICT_MODES = (DENY_OVERRIDES, FIRST_MATCH)

# Column names of the log CSV format; attributes may not shadow them.
RESERVED_ATTRIBUTE_NAMES = frozenset({"decision", "operation"})


class SchemaError(ValueError):
    """A filter, rule, request, or value does not fit the schema in play."""


class Decision(Enum):
    PERMIT = "permit"
    DENY = "deny"

    @property
    def index(self) -> int:
        return 0 if self is Decision.PERMIT else 1

    @classmethod
    def from_index(cls, i: int) -> "Decision":
        return Decision.PERMIT if i == 0 else Decision.DENY

    @classmethod
    def from_label(cls, label: str) -> "Decision":
        try:
            return cls(label)
        except ValueError:
            raise ValueError(f"decision must be 'permit' or 'deny', got {label!r}") from None

    def __str__(self) -> str:
        return self.value


PERMIT = Decision.PERMIT
DENY = Decision.DENY


@dataclass(frozen=True)
class Attribute:
    name: str
    kind: str
    values: tuple[str, ...]

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"attribute {self.name!r}: kind must be one of {KINDS}, got {self.kind!r}")
        if not self.values:
            raise SchemaError(f"attribute {self.name!r}: value range is empty")
        if len(set(self.values)) != len(self.values):
            raise SchemaError(f"attribute {self.name!r}: duplicate values")
        if self.name in RESERVED_ATTRIBUTE_NAMES:
            raise SchemaError(f"attribute name {self.name!r} is reserved")


@dataclass(frozen=True)
class AttributeSchema:
    """The attribute universe: named, kinded value ranges plus the operation set."""

    attributes: tuple[Attribute, ...]
    operations: tuple[str, ...]

    def __post_init__(self):
        names = [a.name for a in self.attributes]
        if len(set(names)) != len(names):
            raise SchemaError("attribute names must be unique")
        if not self.operations:
            raise SchemaError("operation set is empty")
        if len(set(self.operations)) != len(self.operations):
            raise SchemaError("duplicate operations")

    def attribute(self, name: str) -> Attribute:
        for a in self.attributes:
            if a.name == name:
                return a
        raise SchemaError(f"unknown attribute {name!r}")

    def names(self, kind: str | None = None) -> tuple[str, ...]:
        if kind is None:
            return tuple(a.name for a in self.attributes)
        return tuple(a.name for a in self.attributes if a.kind == kind)

    def kind_of(self, name: str) -> str:
        return self.attribute(name).kind

    def has_value(self, name: str, value: str) -> bool:
        try:
            return value in self.attribute(name).values
        except SchemaError:
            return False

    @property
    def total_values(self) -> int:
        """Sum of all attribute range sizes plus the operation count."""
        return sum(len(a.values) for a in self.attributes) + len(self.operations)

    def state_count(self) -> int:
        n = len(self.operations)
        for a in self.attributes:
            n *= len(a.values)
        return n


@dataclass(frozen=True)
class AttributeFilter:
    """Conjunction of attribute = value constraints; the empty filter matches everything."""

    pairs: tuple[tuple[str, str], ...]

    def __post_init__(self):
        names = [attr for attr, _ in self.pairs]
        if len(set(names)) != len(names):
            raise SchemaError("filter constrains the same attribute twice")
        object.__setattr__(self, "pairs", tuple(sorted(self.pairs)))

    @classmethod
    def of(cls, mapping: Mapping[str, str] | None = None, **kwargs: str) -> "AttributeFilter":
        merged = dict(mapping or {})
        merged.update(kwargs)
        return cls(tuple(merged.items()))

    def as_dict(self) -> dict[str, str]:
        return dict(self.pairs)

    def __len__(self) -> int:
        return len(self.pairs)


EMPTY_FILTER = AttributeFilter(())


def filter_matches(flt: AttributeFilter, assignment: Mapping[str, str]) -> bool:
    """True iff every constrained attribute is assigned exactly the filter's value.

    Raises SchemaError when the filter names an attribute absent from the
    assignment, since that signals the filter belongs to a different schema.
    """
    for attr, value in flt.pairs:
        if attr not in assignment:
            raise SchemaError(f"filter references attribute {attr!r} not present in assignment")
        if assignment[attr] != value:
            return False
    return True


@dataclass(frozen=True)
class AbacRule:
    uaf: AttributeFilter = EMPTY_FILTER
    oaf: AttributeFilter = EMPTY_FILTER
    eaf: AttributeFilter = EMPTY_FILTER
    operation: str = WILDCARD
    decision: Decision = DENY


@dataclass(frozen=True)
class AccessRequest:
    """A user assignment asking to perform an operation on an object assignment
    under the current environment assignment."""

    user: Mapping[str, str]
    object: Mapping[str, str]
    operation: str
    environment: Mapping[str, str]

    def assignment(self, kind: str) -> Mapping[str, str]:
        if kind == USER:
            return self.user
        if kind == OBJECT:
            return self.object
        if kind == ENVIRONMENT:
            return self.environment
        raise ValueError(f"unknown kind {kind!r}")

    def merged(self) -> dict[str, str]:
        out = dict(self.user)
        out.update(self.object)
        out.update(self.environment)
        return out


@dataclass(frozen=True)
class AbacPolicy:
    schema: AttributeSchema
    rules: tuple[AbacRule, ...]
    default_decision: Decision = DENY
    conflict_mode: str = DENY_OVERRIDES

    def __post_init__(self):
        if self.conflict_mode not in CONFLICT_MODES:
            raise SchemaError(f"conflict mode must be one of {CONFLICT_MODES}")


def validate_request(schema: AttributeSchema, request: AccessRequest) -> None:
    """Raise SchemaError unless the request covers exactly the schema's attributes
    of each kind, with in-range values and a known operation."""
    if request.operation not in schema.operations:
        raise SchemaError(f"unknown operation {request.operation!r}")
    for kind in KINDS:
        expected = schema.names(kind)
        assignment = request.assignment(kind)
        if set(assignment) != set(expected):
            raise SchemaError(
                f"{kind} assignment covers {sorted(assignment)}, schema expects {sorted(expected)}"
            )
        for name in expected:
            if not schema.has_value(name, assignment[name]):
                raise SchemaError(f"value {assignment[name]!r} not in range of attribute {name!r}")


def rule_matches(rule: AbacRule, request: AccessRequest) -> bool:
    """True iff all three filters match their assignments and the operation agrees
    (or the rule's operation is the wildcard)."""
    if rule.operation != WILDCARD and rule.operation != request.operation:
        return False
    return (
        filter_matches(rule.uaf, request.user)
        and filter_matches(rule.oaf, request.object)
        and filter_matches(rule.eaf, request.environment)
    )


def policy_decide(policy: AbacPolicy, request: AccessRequest) -> Decision:
    """Evaluate a request against the policy.

    deny_overrides: deny wins over permit among matching rules; first_match:
    the earliest matching rule decides. The default decision applies when no
    rule matches. Pure and deterministic.
    """
    validate_request(policy.schema, request)
    if policy.conflict_mode == FIRST_MATCH:
        for rule in policy.rules:
            if rule_matches(rule, request):
                return rule.decision
        return policy.default_decision
    saw_permit = False
    for rule in policy.rules:
        if rule_matches(rule, request):
            if rule.decision is DENY:
                return DENY
            saw_permit = True
    return PERMIT if saw_permit else policy.default_decision


def _validate_filter(schema: AttributeSchema, flt: AttributeFilter, kind: str,
                     rule_idx: int, name: str, out: list[str]) -> None:
    for attr, value in flt.pairs:
        try:
            a = schema.attribute(attr)
        except SchemaError:
            out.append(f"rule {rule_idx}: {name} references unknown attribute {attr!r}")
            continue
        if a.kind != kind:
            out.append(f"rule {rule_idx}: {name} references {attr!r} of kind {a.kind!r}, expected {kind!r}")
        elif value not in a.values:
            out.append(f"rule {rule_idx}: {name} value {value!r} not in range of {attr!r}")


def validate_policy(policy: AbacPolicy) -> list[str]:
    """Return a description per violation; empty means every rule fits the schema."""
    out: list[str] = []
    for i, rule in enumerate(policy.rules):
        _validate_filter(policy.schema, rule.uaf, USER, i, "uaf", out)
        _validate_filter(policy.schema, rule.oaf, OBJECT, i, "oaf", out)
        _validate_filter(policy.schema, rule.eaf, ENVIRONMENT, i, "eaf", out)
        if rule.operation != WILDCARD and rule.operation not in policy.schema.operations:
            out.append(f"rule {i}: operation {rule.operation!r} not in schema")
    return out


# ---------------------------------------------------------------------------
# JSON formats


def schema_to_json(schema: AttributeSchema) -> dict:
    return {
        "attributes": [
            {"name": a.name, "kind": a.kind, "values": list(a.values)} for a in schema.attributes
        ],
        "operations": list(schema.operations),
    }


def schema_from_json(obj: Mapping) -> AttributeSchema:
    attrs = tuple(
        Attribute(a["name"], a["kind"], tuple(a["values"])) for a in obj["attributes"]
    )
    return AttributeSchema(attrs, tuple(obj["operations"]))


def policy_to_json(policy: AbacPolicy) -> dict:
    doc = schema_to_json(policy.schema)
    doc["rules"] = [
        {
            "uaf": r.uaf.as_dict(),
            "oaf": r.oaf.as_dict(),
            "eaf": r.eaf.as_dict(),
            "op": r.operation,
            "decision": r.decision.value,
        }
        for r in policy.rules
    ]
    doc["default"] = policy.default_decision.value
    doc["conflict"] = policy.conflict_mode
    return doc


def policy_from_json(obj: Mapping) -> AbacPolicy:
    schema = schema_from_json(obj)
    rules = tuple(
        AbacRule(
            uaf=AttributeFilter.of(r.get("uaf", {})),
            oaf=AttributeFilter.of(r.get("oaf", {})),
            eaf=AttributeFilter.of(r.get("eaf", {})),
            operation=r.get("op", WILDCARD),
            decision=Decision.from_label(r["decision"]),
        )
        for r in obj.get("rules", [])
    )
    return AbacPolicy(
        schema=schema,
        rules=rules,
        default_decision=Decision.from_label(obj.get("default", "deny")),
        conflict_mode=obj.get("conflict", DENY_OVERRIDES),
    )


def save_policy(policy: AbacPolicy, path: str | Path) -> None:
    Path(path).write_text(json.dumps(policy_to_json(policy), indent=2) + "\n", encoding="utf-8")


def load_policy(path: str | Path) -> AbacPolicy:
    return policy_from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def save_schema(schema: AttributeSchema, path: str | Path) -> None:
    Path(path).write_text(json.dumps(schema_to_json(schema), indent=2) + "\n", encoding="utf-8")


def load_schema(path: str | Path) -> AttributeSchema:
    return schema_from_json(json.loads(Path(path).read_text(encoding="utf-8")))

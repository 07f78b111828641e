"""Requests <-> states and states -> sparse one-hot feature vectors.

A state is the ordered tuple of attribute values plus the operation, a
lossless re-arrangement of an access request. A feature space maps each
(attribute, value) pair and each operation to a slot, either by exact
indexing or by the 64-bit FNV-1a hashing trick for high-cardinality data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import AccessRequest, AttributeSchema, SchemaError, validate_request

EXACT = "exact"
HASHED = "hashed"

DEFAULT_HASH_SIZE = 2 ** 18

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF

# Hash token prefix for the operation component of a state. The name
# "operation" is reserved by the schema, so it cannot collide with an
# attribute token.
_OPERATION_KEY = "operation"


def fnv1a64(text: str) -> int:
    h = _FNV_OFFSET
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


@dataclass(frozen=True)
class State:
    """Attribute values in schema order plus the operation; hashable and
    bijective with a valid AccessRequest."""

    schema: AttributeSchema
    values: tuple[str, ...]
    operation: str

    def value_of(self, attr_name: str) -> str:
        for a, v in zip(self.schema.attributes, self.values):
            if a.name == attr_name:
                return v
        raise SchemaError(f"unknown attribute {attr_name!r}")

    def replace_value(self, attr_index: int, value: str) -> "State":
        vals = self.values[:attr_index] + (value,) + self.values[attr_index + 1:]
        return State(self.schema, vals, self.operation)

    def key(self) -> tuple:
        """Schema-free identity, usable as a dict key alongside other states
        of the same schema."""
        return (*self.values, self.operation)


def get_state(request: AccessRequest, schema: AttributeSchema) -> State:
    """Re-arrange a request into a state; inverse of get_request."""
    validate_request(schema, request)
    merged = request.merged()
    values = tuple(merged[a.name] for a in schema.attributes)
    return State(schema, values, request.operation)


def get_request(state: State) -> AccessRequest:
    """Re-arrange a state into a request; inverse of get_state."""
    schema = state.schema
    if len(state.values) != len(schema.attributes):
        raise SchemaError("state arity does not match schema")
    by_kind: dict[str, dict[str, str]] = {"user": {}, "object": {}, "environment": {}}
    for attr, value in zip(schema.attributes, state.values):
        if value not in attr.values:
            raise SchemaError(f"value {value!r} not in range of attribute {attr.name!r}")
        by_kind[attr.kind][attr.name] = value
    if state.operation not in schema.operations:
        raise SchemaError(f"unknown operation {state.operation!r}")
    return AccessRequest(
        user=by_kind["user"],
        object=by_kind["object"],
        operation=state.operation,
        environment=by_kind["environment"],
    )


@dataclass(frozen=True)
class FeatureVector:
    """Sparse vector as (slot, weight) pairs with strictly increasing slots.

    One-hot weights are 1.0; hashed-mode collisions within a single state
    merge into a single slot with summed weight.
    """

    slots: tuple[int, ...]
    weights: tuple[float, ...]

    def to_active_slots(self) -> np.ndarray:
        """Expand back to one slot entry per original one-hot component
        (integral weights repeat the slot), the layout the kernels consume."""
        out: list[int] = []
        for s, w in zip(self.slots, self.weights):
            out.extend([s] * int(round(w)))
        return np.asarray(out, dtype=np.int64)


class FeatureSpace:
    """Deterministic (attribute, value) -> slot mapping for one schema."""

    def __init__(self, schema: AttributeSchema, mode: str = EXACT,
                 hash_size: int = DEFAULT_HASH_SIZE):
        if mode not in (EXACT, HASHED):
            raise ValueError(f"mode must be {EXACT!r} or {HASHED!r}")
        if mode == HASHED and (hash_size < 2 or hash_size & (hash_size - 1) != 0):
            raise ValueError("hash size must be a power of two")
        self.schema = schema
        self.mode = mode
        self.hash_size = hash_size if mode == HASHED else 0
        self._index: dict[tuple[str, str], int] = {}
        if mode == EXACT:
            slot = 0
            for attr in schema.attributes:
                for v in attr.values:
                    self._index[(attr.name, v)] = slot
                    slot += 1
            for op in schema.operations:
                self._index[(_OPERATION_KEY, op)] = slot
                slot += 1
            self.num_slots = slot
        else:
            self.num_slots = hash_size

    @property
    def active_arity(self) -> int:
        """Active slots per state: one per attribute plus one for the operation."""
        return len(self.schema.attributes) + 1

    def slot(self, attr_name: str, value: str) -> int:
        key = (attr_name, value)
        cached = self._index.get(key)
        if cached is not None:
            return cached
        if self.mode == EXACT:
            raise SchemaError(f"no slot for ({attr_name!r}, {value!r})")
        s = fnv1a64(f"{attr_name}={value}") % self.hash_size
        self._index[key] = s
        return s

    def encode(self, state: State) -> np.ndarray:
        """Active slots of a state as an int64 array of length active_arity.

        Hash collisions may repeat a slot; the repeated entry carries the
        extra unit of weight.
        """
        if state.schema is not self.schema and state.schema != self.schema:
            raise SchemaError("state belongs to a different schema")
        out = np.empty(self.active_arity, dtype=np.int64)
        for i, (attr, value) in enumerate(zip(self.schema.attributes, state.values)):
            if self.mode == EXACT and value not in attr.values:
                raise SchemaError(f"value {value!r} not in range of attribute {attr.name!r}")
            out[i] = self.slot(attr.name, value)
        out[-1] = self.slot(_OPERATION_KEY, state.operation)
        return out


def build_feature_space(schema: AttributeSchema, mode: str = EXACT,
                        hash_size: int = DEFAULT_HASH_SIZE) -> FeatureSpace:
    return FeatureSpace(schema, mode, hash_size)


def featurize(state: State, space: FeatureSpace) -> FeatureVector:
    """One active slot per attribute plus one for the operation, weight 1.0
    each; duplicate hashed slots are merged with summed weight."""
    raw = space.encode(state)
    merged: dict[int, float] = {}
    for s in raw.tolist():
        merged[s] = merged.get(s, 0.0) + 1.0
    items = sorted(merged.items())
    return FeatureVector(tuple(s for s, _ in items), tuple(w for _, w in items))


def encode_log(entries, space: FeatureSpace) -> tuple[np.ndarray, np.ndarray]:
    """Bulk-encode (request, decision) pairs into the kernel layout:
    slots (n, arity) int64 and decisions (n,) int8. Encoding failures name
    the offending round."""
    n = len(entries)
    slots = np.empty((n, space.active_arity), dtype=np.int64)
    decisions = np.empty(n, dtype=np.int8)
    schema = space.schema
    for i, (request, decision) in enumerate(entries):
        try:
            state = get_state(request, schema)
            slots[i] = space.encode(state)
        except SchemaError as exc:
            raise SchemaError(f"round {i}: {exc}") from exc
        decisions[i] = decision.index
    return slots, decisions

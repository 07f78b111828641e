"""Policy initialization: compile prior knowledge into pre-training examples.

Four sources: general rules everyone agrees on, per-user-filter defaults,
per-operation defaults, and past access logs. The first three enumerate
the states they cover (down-sampled to a cap when the match set is large);
the fourth replays logged entries verbatim. Merged examples pre-train the
learner with full-information updates before any online interaction.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .featurize import FeatureSpace, State, get_state
from .kernels import warmstart_kernel
from .model import (
    USER,
    WILDCARD,
    AbacRule,
    AttributeFilter,
    AttributeSchema,
    Decision,
    SchemaError,
)

DEFAULT_CAP = 10_000


@dataclass(frozen=True)
class WarmstartExample:
    state: State
    decision: Decision
    weight: float = 1.0

    def __post_init__(self):
        if self.weight <= 0.0:
            raise ValueError("example weight must be > 0")


def _combined_filter(schema: AttributeSchema, rule: AbacRule) -> dict[str, str]:
    fixed: dict[str, str] = {}
    for flt, kind in ((rule.uaf, "user"), (rule.oaf, "object"), (rule.eaf, "environment")):
        for attr, value in flt.pairs:
            a = schema.attribute(attr)
            if a.kind != kind:
                raise SchemaError(f"filter places {attr!r} ({a.kind}) in the {kind} position")
            if value not in a.values:
                raise SchemaError(f"value {value!r} not in range of {attr!r}")
            fixed[attr] = value
    return fixed


def _enumerate_states(schema: AttributeSchema, fixed: Mapping[str, str],
                      operation: str, cap: int, rng: np.random.Generator) -> list[State]:
    """All states matching the fixed assignments and operation; when the
    match set exceeds the cap, exactly cap distinct states are drawn
    uniformly (seeded, reproducible)."""
    choices = [(fixed[a.name],) if a.name in fixed else a.values for a in schema.attributes]
    if operation == WILDCARD:
        ops: tuple[str, ...] = schema.operations
    else:
        if operation not in schema.operations:
            raise SchemaError(f"unknown operation {operation!r}")
        ops = (operation,)
    radices = [len(c) for c in choices] + [len(ops)]
    total = math.prod(radices)
    if total <= cap:
        return [State(schema, values, op)
                for values in itertools.product(*choices) for op in ops]
    picked: set[int] = set()
    while len(picked) < cap:
        need = cap - len(picked)
        picked.update(int(v) for v in rng.integers(0, total, size=need))
    out = []
    for flat in sorted(picked):
        values = []
        rem = flat
        for c in reversed(radices):
            rem, r = divmod(rem, c)
            values.append(r)
        values.reverse()
        out.append(State(schema,
                         tuple(choices[i][values[i]] for i in range(len(choices))),
                         ops[values[-1]]))
    return out


def _dedup(pairs) -> list[tuple[State, Decision]]:
    seen = set()
    out = []
    for state, decision in pairs:
        key = (state.key(), decision)
        if key not in seen:
            seen.add(key)
            out.append((state, decision))
    return out


def init_from_general_rules(rules: Sequence[AbacRule], schema: AttributeSchema,
                            cap: int = DEFAULT_CAP, seed: int = 0) -> list[WarmstartExample]:
    """Label every state matched by a candidate rule with the rule's decision."""
    rng = np.random.default_rng(seed)
    pairs = []
    for rule in rules:
        fixed = _combined_filter(schema, rule)
        for state in _enumerate_states(schema, fixed, rule.operation, cap, rng):
            pairs.append((state, rule.decision))
    deduped = _dedup(pairs)
    if len(deduped) > cap:
        idx = rng.choice(len(deduped), size=cap, replace=False)
        deduped = [deduped[i] for i in np.sort(idx)]
    return [WarmstartExample(s, d) for s, d in deduped]


def init_from_user_defaults(defaults: Sequence[tuple[AttributeFilter, Decision]],
                            schema: AttributeSchema, cap: int = DEFAULT_CAP,
                            seed: int = 0) -> list[WarmstartExample]:
    """Defaults keyed on user-attribute filters, enumerated over all objects,
    operations, and environments. Identical filters with contradictory
    decisions are rejected."""
    by_filter: dict[tuple, Decision] = {}
    for flt, decision in defaults:
        if by_filter.setdefault(flt.pairs, decision) is not decision:
            raise ValueError(f"conflicting defaults for filter {flt.as_dict()}")
    rng = np.random.default_rng(seed)
    pairs = []
    for flt, decision in defaults:
        fixed: dict[str, str] = {}
        for attr, value in flt.pairs:
            a = schema.attribute(attr)
            if a.kind != USER:
                raise SchemaError(f"user default constrains non-user attribute {attr!r}")
            if value not in a.values:
                raise SchemaError(f"value {value!r} not in range of {attr!r}")
            fixed[attr] = value
        for state in _enumerate_states(schema, fixed, WILDCARD, cap, rng):
            pairs.append((state, decision))
    deduped = _dedup(pairs)
    if len(deduped) > cap:
        idx = rng.choice(len(deduped), size=cap, replace=False)
        deduped = [deduped[i] for i in np.sort(idx)]
    return [WarmstartExample(s, d) for s, d in deduped]


def init_from_capability_defaults(defaults: Mapping[str, Decision],
                                  schema: AttributeSchema, cap: int = DEFAULT_CAP,
                                  seed: int = 0) -> list[WarmstartExample]:
    """Per-operation default decisions enumerated over all attribute values."""
    rng = np.random.default_rng(seed)
    pairs = []
    for op, decision in defaults.items():
        if op not in schema.operations:
            raise SchemaError(f"unknown operation {op!r}")
        for state in _enumerate_states(schema, {}, op, cap, rng):
            pairs.append((state, decision))
    deduped = _dedup(pairs)
    if len(deduped) > cap:
        idx = rng.choice(len(deduped), size=cap, replace=False)
        deduped = [deduped[i] for i in np.sort(idx)]
    return [WarmstartExample(s, d) for s, d in deduped]


def init_from_log(log, schema: AttributeSchema) -> list[WarmstartExample]:
    """One unit-weight example per log entry, in order; duplicates are kept
    since repeated entries legitimately re-weight their state."""
    return [WarmstartExample(get_state(req, schema), dec) for req, dec in log]


def merge_examples(*example_lists: Sequence[WarmstartExample]) -> list[WarmstartExample]:
    """Merge technique outputs: identical (state, decision) pairs collapse
    with summed weight; a state claimed by both decisions keeps both at
    half weight. Order-insensitive up to output ordering."""
    weight_of: dict[tuple, float] = {}
    order: list[tuple] = []
    state_of: dict[tuple, State] = {}
    states_decisions: dict[tuple, set[Decision]] = {}
    for examples in example_lists:
        for ex in examples:
            key = (ex.state.key(), ex.decision)
            if key not in weight_of:
                weight_of[key] = 0.0
                order.append(key)
                state_of[key] = ex.state
            weight_of[key] += ex.weight
            states_decisions.setdefault(ex.state.key(), set()).add(ex.decision)
    out = []
    for key in order:
        skey, decision = key
        w = weight_of[key]
        if len(states_decisions[skey]) == 2:
            w *= 0.5
        out.append(WarmstartExample(state_of[key], decision, w))
    return out


def apply_warmstart(learner, examples: Sequence[WarmstartExample], space: FeatureSpace,
                    passes: int = 1, seed: int = 0) -> None:
    """Pre-train the learner: one full-information update per example per
    pass, in a seeded shuffled order fixed across passes.

    Only the weights change; the online update counters (and with them the
    learning-rate schedule of the interactive phase) are left untouched.
    """
    if passes < 0:
        raise ValueError("passes must be >= 0")
    if passes == 0 or not examples:
        return
    n = len(examples)
    rows = np.empty((n, space.active_arity), dtype=np.int64)
    labels = np.empty(n, dtype=np.int64)
    weights = np.empty(n, dtype=np.float64)
    for i, ex in enumerate(examples):
        rows[i] = space.encode(ex.state)
        labels[i] = ex.decision.index
        weights[i] = ex.weight
    order = np.random.default_rng(seed).permutation(n).astype(np.int64)
    scratch_counts = learner.counts.copy()
    warmstart_kernel(learner.weights, scratch_counts, rows, labels, weights,
                     order, passes, learner.eta)


def load_warmstart_spec(source, schema: AttributeSchema, cap: int = DEFAULT_CAP,
                        seed: int = 0) -> list[WarmstartExample]:
    """Build merged examples from a spec with up to four optional sections:
    general_rules, user_defaults, capability_defaults, log_path."""
    from .data import load_log  # local import to avoid a cycle

    if isinstance(source, (str, Path)):
        base = Path(source).parent
        obj = json.loads(Path(source).read_text(encoding="utf-8"))
    else:
        base = Path(".")
        obj = dict(source)
    parts: list[list[WarmstartExample]] = []
    if obj.get("general_rules"):
        rules = [
            AbacRule(
                uaf=AttributeFilter.of(r.get("uaf", {})),
                oaf=AttributeFilter.of(r.get("oaf", {})),
                eaf=AttributeFilter.of(r.get("eaf", {})),
                operation=r.get("op", WILDCARD),
                decision=Decision.from_label(r["decision"]),
            )
            for r in obj["general_rules"]
        ]
        parts.append(init_from_general_rules(rules, schema, cap, seed))
    if obj.get("user_defaults"):
        defaults = [(AttributeFilter.of(d["filter"]), Decision.from_label(d["decision"]))
                    for d in obj["user_defaults"]]
        parts.append(init_from_user_defaults(defaults, schema, cap, seed))
    if obj.get("capability_defaults"):
        caps = {op: Decision.from_label(lbl) for op, lbl in obj["capability_defaults"].items()}
        parts.append(init_from_capability_defaults(caps, schema, cap, seed))
    if obj.get("log_path"):
        path = Path(obj["log_path"])
        if not path.is_absolute():
            path = base / path
        entries, log_schema = load_log(path, schema)
        parts.append(init_from_log(entries, log_schema))
    return merge_examples(*parts)

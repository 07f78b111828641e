"""Dataset construction: hand-written smart-home policies, random policy
synthesis, complete log enumeration, partial sampling, and CSV I/O.

The three hand-written policies cover a household of roles operating on
device capabilities under time/location context. Policy m3 as shipped adds
a reconstructed 10-value Role attribute so its value count reaches 44 and
its complete log reaches 48,000 tuples; the rule sets of all three
policies (11/11/38 rules) are likewise reconstructions, with m3's authored
so its decisions respect the shipped Role hierarchy (permits closed
upward, denies downward).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import (
    DENY,
    ENVIRONMENT,
    OBJECT,
    PERMIT,
    USER,
    WILDCARD,
    AbacPolicy,
    AbacRule,
    AccessRequest,
    Attribute,
    AttributeFilter,
    AttributeSchema,
    Decision,
    load_schema,
    save_schema,
)
from .planning import ValueHierarchy

COMPLETE_LOG_CAP = 10_000_000

# Feature spaces this large switch to hashed encoding by default.
HASHED_THRESHOLD = 5_000


def _uaf(**kw) -> AttributeFilter:
    return AttributeFilter.of(kw)


def _rule(uaf=None, oaf=None, eaf=None, op=WILDCARD, decision=PERMIT) -> AbacRule:
    return AbacRule(
        uaf=AttributeFilter.of(uaf or {}),
        oaf=AttributeFilter.of(oaf or {}),
        eaf=AttributeFilter.of(eaf or {}),
        operation=op,
        decision=decision,
    )


_M1_SCHEMA = AttributeSchema(
    attributes=(
        Attribute("Time", ENVIRONMENT, ("day", "midday", "night", "midnight")),
        Attribute("Role", USER, ("mother", "father", "child", "visiting_family", "guest")),
        Attribute("Location", ENVIRONMENT, ("inside_home", "outside_home", "yard", "basement")),
        Attribute("Username", USER, ("M", "F", "D", "S", "B", "N", "BS")),
    ),
    operations=(
        "lights_on_off", "order_online", "set_temperature", "turn_on_cooler",
        "turn_on_heater", "install_software_update", "mower_on_off",
        "connect_new_device", "view_lock_state", "play_music",
    ),
)

_M1_RULES = (
    _rule(uaf={"Role": "mother"}),
    _rule(uaf={"Role": "father"}),
    _rule(uaf={"Role": "child"}, eaf={"Location": "inside_home"}, op="play_music"),
    _rule(uaf={"Role": "child"}, eaf={"Location": "inside_home"}, op="lights_on_off"),
    _rule(uaf={"Role": "child"}, op="view_lock_state"),
    _rule(uaf={"Role": "visiting_family"}, eaf={"Location": "inside_home"}, op="play_music"),
    _rule(uaf={"Role": "visiting_family"}, eaf={"Location": "inside_home"}, op="lights_on_off"),
    _rule(uaf={"Role": "guest"}, eaf={"Location": "inside_home"}, op="play_music"),
    _rule(eaf={"Time": "midnight"}, op="play_music", decision=DENY),
    _rule(uaf={"Role": "child"}, eaf={"Time": "night"}, op="lights_on_off", decision=DENY),
    _rule(eaf={"Location": "basement"}, op="install_software_update", decision=DENY),
)

_M2_SCHEMA = AttributeSchema(
    attributes=(
        Attribute("Time", ENVIRONMENT, ("morning", "afternoon", "evening", "night")),
        Attribute("Role", USER, ("mother", "father", "child", "baby_sitter", "neighbor")),
        Attribute("Location", ENVIRONMENT, ("kitchen", "living_room", "bedroom1", "bedroom2")),
        Attribute("Username", USER, ("M", "F", "D", "S", "B", "N", "BS")),
    ),
    operations=(
        "lights_on_off", "order_online", "set_temperature", "play_music",
        "turn_on_cooler", "turn_on_heater", "camera_on_off",
        "view_temperature_log", "answer_door",
    ),
)

_M2_RULES = (
    _rule(uaf={"Role": "mother"}),
    _rule(uaf={"Role": "father"}),
    _rule(uaf={"Role": "baby_sitter"}, op="answer_door"),
    _rule(uaf={"Role": "baby_sitter"}, eaf={"Location": "kitchen"}, op="lights_on_off"),
    _rule(uaf={"Role": "baby_sitter"}, op="view_temperature_log"),
    _rule(uaf={"Role": "child"}, eaf={"Location": "living_room"}, op="play_music"),
    _rule(uaf={"Role": "child"}, eaf={"Location": "living_room"}, op="lights_on_off"),
    _rule(eaf={"Time": "night"}, op="play_music", decision=DENY),
    _rule(uaf={"Role": "neighbor"}, op="answer_door"),
    _rule(eaf={"Time": "night"}, op="camera_on_off", decision=DENY),
    _rule(uaf={"Role": "baby_sitter"}, eaf={"Time": "night"}, op="lights_on_off", decision=DENY),
)

_M3_SCHEMA = AttributeSchema(
    attributes=(
        Attribute("Time", ENVIRONMENT,
                  ("day", "morning", "afternoon", "evening", "night", "midnight")),
        Attribute("Location", ENVIRONMENT,
                  ("kitchen", "living_room", "bedroom1", "bedroom2",
                   "inside_home", "outside_home", "yard", "basement")),
        Attribute("Username", USER, ("M", "F", "D", "S", "B", "N", "BS", "G", "T", "P")),
        # Reconstructed attribute: the published value listing reaches only 34
        # of the documented 44 values and 4,800 of the ~48K tuples without it.
        Attribute("Role", USER,
                  ("mother", "father", "child", "baby_sitter", "neighbor",
                   "guest", "grandparent", "teenager", "toddler", "plumber")),
    ),
    operations=(
        "lights_on_off", "order_online", "set_temperature", "play_music",
        "turn_on_cooler", "turn_on_heater", "camera_on_off",
        "view_temperature_log", "answer_door", "mower_on_off",
    ),
)

# Per-role operation grants. Each set is upward-closed along the Role
# hierarchy below, which keeps the whole policy hierarchy-consistent.
_M3_GRANTS = {
    "grandparent": ("lights_on_off", "play_music", "set_temperature", "turn_on_cooler",
                    "turn_on_heater", "camera_on_off", "view_temperature_log", "answer_door"),
    "baby_sitter": ("lights_on_off", "play_music", "set_temperature", "turn_on_cooler",
                    "turn_on_heater", "view_temperature_log", "answer_door"),
    "teenager": ("lights_on_off", "play_music", "set_temperature", "view_temperature_log"),
    "child": ("lights_on_off", "play_music"),
    "toddler": ("play_music",),
    "guest": ("lights_on_off", "play_music", "view_temperature_log", "set_temperature"),
    "neighbor": ("lights_on_off", "play_music"),
    "plumber": ("lights_on_off",),
}

_M3_RULES = (
    (_rule(uaf={"Role": "mother"}), _rule(uaf={"Role": "father"}))
    + tuple(_rule(uaf={"Role": role}, op=op)
            for role in ("grandparent", "baby_sitter", "teenager", "child",
                         "toddler", "guest", "neighbor", "plumber")
            for op in _M3_GRANTS[role])
    + (
        _rule(eaf={"Time": "midnight", "Location": "bedroom1"}, op="play_music", decision=DENY),
        _rule(eaf={"Time": "midnight", "Location": "bedroom2"}, op="lights_on_off", decision=DENY),
        _rule(eaf={"Time": "night", "Location": "outside_home"}, op="camera_on_off", decision=DENY),
        _rule(eaf={"Time": "evening", "Location": "yard"}, op="order_online", decision=DENY),
        _rule(eaf={"Time": "night", "Location": "basement"}, op="play_music", decision=DENY),
        _rule(eaf={"Time": "day", "Location": "living_room"}, op="view_temperature_log"),
        _rule(eaf={"Time": "day", "Location": "kitchen"}, op="answer_door"),
    )
)

_M3_HIERARCHY = ValueHierarchy({
    "Role": (
        ("mother", "grandparent"),
        ("father", "grandparent"),
        ("grandparent", "baby_sitter"),
        ("baby_sitter", "teenager"),
        ("teenager", "child"),
        ("child", "toddler"),
        ("guest", "neighbor"),
        ("neighbor", "plumber"),
    ),
})

_MANUAL = {
    "m1": (_M1_SCHEMA, _M1_RULES),
    "m2": (_M2_SCHEMA, _M2_RULES),
    "m3": (_M3_SCHEMA, _M3_RULES),
}


def manual_policy_schema(policy_id: str) -> AttributeSchema:
    if policy_id not in _MANUAL:
        raise ValueError(f"unknown manual policy {policy_id!r}, expected one of {sorted(_MANUAL)}")
    return _MANUAL[policy_id][0]


def manual_policy(policy_id: str) -> AbacPolicy:
    schema = manual_policy_schema(policy_id)
    return AbacPolicy(schema=schema, rules=_MANUAL[policy_id][1])


def manual_hierarchy(policy_id: str) -> ValueHierarchy:
    if policy_id != "m3":
        raise ValueError(f"no hierarchy is shipped for policy {policy_id!r}")
    return _M3_HIERARCHY


def manual_initialization_inputs() -> dict:
    """Prior-knowledge inputs for the m3 initialization study: the
    household's per-role capability consensus as general rules (accurate up
    to the context carve-outs), per-role default decisions, per-operation
    default decisions, and the fraction of the complete log replayed as
    history."""
    general = [_rule(uaf={"Role": "mother"}), _rule(uaf={"Role": "father"})]
    for role in _M3_GRANTS:
        general.extend(_rule(uaf={"Role": role}, op=op) for op in _M3_GRANTS[role])
        general.extend(_rule(uaf={"Role": role}, op=op, decision=DENY)
                       for op in _M3_SCHEMA.operations
                       if op not in _M3_GRANTS[role])
    user_defaults = [
        (_uaf(Role=role), PERMIT if role in ("mother", "father", "grandparent", "baby_sitter") else DENY)
        for role in _M3_SCHEMA.attribute("Role").values
    ]
    capability_defaults = {
        "lights_on_off": PERMIT,
        "play_music": PERMIT,
        "set_temperature": PERMIT,
        "view_temperature_log": PERMIT,
        "order_online": DENY,
        "turn_on_cooler": DENY,
        "turn_on_heater": DENY,
        "camera_on_off": DENY,
        "answer_door": DENY,
        "mower_on_off": DENY,
    }
    return {
        "general_rules": general,
        "user_defaults": user_defaults,
        "capability_defaults": capability_defaults,
        "log_fraction": 0.002,
    }


# ---------------------------------------------------------------------------
# Random policy synthesis


@dataclass(frozen=True)
class RandomPolicyConfig:
    """Shape of a synthetic policy: the operation set counts as one of the
    num_attributes slots and its size is part of total_values."""

    num_rules: int
    num_attributes: int
    total_values: int
    target_log_size: int
    permit_probability: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.num_rules < 1:
            raise ValueError("num_rules must be >= 1")
        if self.num_attributes < 2:
            raise ValueError("num_attributes must be >= 2")
        if self.total_values < 2 * self.num_attributes:
            raise ValueError("total_values must be >= 2 * num_attributes")
        if not 0.0 <= self.permit_probability <= 1.0:
            raise ValueError("permit_probability must be in [0, 1]")
        if self.target_log_size < 1:
            raise ValueError("target_log_size must be >= 1")


_PARTITION_TRIES = 20_000
_POLICY_TRIES = 200
_SIZE_BAND = 0.15
_MIN_CLASS_SHARE = 0.10

_KIND_CYCLE = (USER, OBJECT, ENVIRONMENT)


def _partition_sizes(cfg: RandomPolicyConfig, rng: np.random.Generator) -> list[int] | None:
    lo = cfg.target_log_size * (1.0 - _SIZE_BAND)
    hi = cfg.target_log_size * (1.0 + _SIZE_BAND)
    spare = cfg.total_values - 2 * cfg.num_attributes
    for _ in range(_PARTITION_TRIES):
        sizes = [2] * cfg.num_attributes
        for slot in rng.integers(0, cfg.num_attributes, size=spare):
            sizes[slot] += 1
        if lo <= math.prod(sizes) <= hi:
            return sizes
    return None


def _random_schema(cfg: RandomPolicyConfig, sizes: list[int]) -> AttributeSchema:
    attrs = []
    for i, size in enumerate(sizes[:-1]):
        kind = _KIND_CYCLE[i % 3]
        attrs.append(Attribute(f"attr{i:02d}", kind,
                               tuple(f"a{i:02d}_v{j}" for j in range(size))))
    ops = tuple(f"op{j}" for j in range(sizes[-1]))
    return AttributeSchema(tuple(attrs), ops)


def _random_rules(cfg: RandomPolicyConfig, schema: AttributeSchema,
                  rng: np.random.Generator) -> tuple[AbacRule, ...]:
    n_slots = cfg.num_attributes  # attributes plus the operation slot
    rules = []
    for _ in range(cfg.num_rules):
        k = 1 + int(rng.integers(0, n_slots))
        chosen = rng.permutation(n_slots)[:k]
        by_kind: dict[str, dict[str, str]] = {USER: {}, OBJECT: {}, ENVIRONMENT: {}}
        operation = WILDCARD
        for slot in chosen:
            if slot == n_slots - 1:
                operation = schema.operations[int(rng.integers(0, len(schema.operations)))]
            else:
                attr = schema.attributes[slot]
                value = attr.values[int(rng.integers(0, len(attr.values)))]
                by_kind[attr.kind][attr.name] = value
        decision = PERMIT if rng.random() < cfg.permit_probability else DENY
        rules.append(_rule(uaf=by_kind[USER], oaf=by_kind[OBJECT],
                           eaf=by_kind[ENVIRONMENT], op=operation, decision=decision))
    return tuple(rules)


def gen_random_policy(cfg: RandomPolicyConfig) -> AbacPolicy:
    """Random schema and rules matching the configured shape.

    Attribute range sizes (each >= 2) partition total_values so the full
    enumeration lands within 15% of the target log size; rules fix one
    random value for a random non-empty subset of the attribute slots
    (the operation slot constrains the rule's operation). Regenerates until
    the complete log carries at least 10% of each decision class.
    """
    root = np.random.SeedSequence(cfg.seed)
    for attempt_seed in root.spawn(_POLICY_TRIES):
        rng = np.random.default_rng(attempt_seed)
        sizes = _partition_sizes(cfg, rng)
        if sizes is None:
            raise RuntimeError(
                f"no attribute-size partition of {cfg.total_values} values hits "
                f"{cfg.target_log_size} within {int(_SIZE_BAND * 100)}%"
            )
        rng.shuffle(sizes)
        schema = _random_schema(cfg, sizes)
        policy = AbacPolicy(schema=schema, rules=_random_rules(cfg, schema, rng))
        decisions = _decide_grid(policy)
        permit_share = float(np.mean(decisions == 0))
        if _MIN_CLASS_SHARE <= permit_share <= 1.0 - _MIN_CLASS_SHARE:
            return policy
    raise RuntimeError(
        f"could not reach >= {int(_MIN_CLASS_SHARE * 100)}% of each decision class "
        f"after {_POLICY_TRIES} attempts"
    )


# ---------------------------------------------------------------------------
# Log enumeration


def _decide_grid(policy: AbacPolicy) -> np.ndarray:
    """Decisions for the full cross-product in lexicographic order, operation
    varying fastest; vectorized equivalent of policy_decide per request."""
    schema = policy.schema
    sizes = [len(a.values) for a in schema.attributes] + [len(schema.operations)]
    n = math.prod(sizes)
    grid = np.unravel_index(np.arange(n), sizes)
    attr_pos = {a.name: i for i, a in enumerate(schema.attributes)}
    value_idx = {a.name: {v: j for j, v in enumerate(a.values)} for a in schema.attributes}
    op_idx = {op: j for j, op in enumerate(schema.operations)}

    def rule_mask(rule: AbacRule) -> np.ndarray:
        mask = np.ones(n, dtype=bool)
        for flt in (rule.uaf, rule.oaf, rule.eaf):
            for attr, value in flt.pairs:
                mask &= grid[attr_pos[attr]] == value_idx[attr][value]
        if rule.operation != WILDCARD:
            mask &= grid[-1] == op_idx[rule.operation]
        return mask

    default = policy.default_decision.index
    if policy.conflict_mode == "first_match":
        out = np.full(n, -1, dtype=np.int8)
        for rule in policy.rules:
            m = rule_mask(rule) & (out == -1)
            out[m] = rule.decision.index
        out[out == -1] = default
        return out
    permit_any = np.zeros(n, dtype=bool)
    deny_any = np.zeros(n, dtype=bool)
    for rule in policy.rules:
        m = rule_mask(rule)
        if rule.decision is DENY:
            deny_any |= m
        else:
            permit_any |= m
    out = np.full(n, default, dtype=np.int8)
    out[permit_any] = 0
    out[deny_any] = 1
    return out


def gen_complete_log(policy: AbacPolicy, cap: int = COMPLETE_LOG_CAP):
    """One authorization tuple per point of the cross-product of attribute
    ranges and operations, decided by the policy, in lexicographic order."""
    schema = policy.schema
    n = schema.state_count()
    if n > cap:
        raise ValueError(f"complete enumeration has {n} tuples, above the cap {cap}")
    decisions = _decide_grid(policy)
    sizes = [len(a.values) for a in schema.attributes] + [len(schema.operations)]
    grid = np.unravel_index(np.arange(n), sizes)
    columns = [np.asarray(a.values)[grid[i]] for i, a in enumerate(schema.attributes)]
    op_col = np.asarray(schema.operations)[grid[-1]]
    user_names = schema.names(USER)
    object_names = schema.names(OBJECT)
    env_names = schema.names(ENVIRONMENT)
    name_pos = {a.name: i for i, a in enumerate(schema.attributes)}
    log = []
    for i in range(n):
        user = {nm: columns[name_pos[nm]][i] for nm in user_names}
        obj = {nm: columns[name_pos[nm]][i] for nm in object_names}
        env = {nm: columns[name_pos[nm]][i] for nm in env_names}
        log.append((AccessRequest(user, obj, op_col[i], env),
                    Decision.from_index(int(decisions[i]))))
    return log


def sample_partial_log(log, fraction: float, seed: int = 0):
    """Uniform sample without replacement of ceil(fraction * n) entries,
    keeping the original relative order."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must be in (0, 1]")
    n = len(log)
    m = math.ceil(fraction * n)
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(n, size=m, replace=False))
    return [log[i] for i in idx]


def shuffle_log(log, seed: int = 0):
    perm = np.random.default_rng(seed).permutation(len(log))
    return [log[i] for i in perm]


# ---------------------------------------------------------------------------
# Log CSV I/O
#
# Format: header `decision,<attr1>,...,<attrN>,operation`; one row per
# authorization tuple; UTF-8 with LF line endings. A schema sidecar
# (<name>.schema.json) written next to the CSV preserves kinds and ranges.


def _sidecar(path: str | Path) -> Path:
    return Path(path).with_suffix(".schema.json")


def save_log(log, schema: AttributeSchema, path: str | Path,
             write_sidecar: bool = True) -> None:
    names = schema.names()
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["decision", *names, "operation"])
        for request, decision in log:
            merged = request.merged()
            w.writerow([decision.value, *(merged[nm] for nm in names), request.operation])
    if write_sidecar:
        save_schema(schema, _sidecar(path))


def load_log(path: str | Path, schema: AttributeSchema | None = None):
    """Read a log CSV back; returns (entries, schema).

    The schema comes from the explicit argument, else the sidecar written
    by save_log, else it is inferred from the data with every column
    treated as a user attribute.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        if len(header) < 3 or header[0] != "decision" or header[-1] != "operation":
            raise ValueError(f"{path}: header must be decision,<attributes...>,operation")
        names = header[1:-1]
        rows = list(reader)
    if schema is None and _sidecar(path).exists():
        schema = load_schema(_sidecar(path))
    if schema is not None:
        if list(schema.names()) != names:
            raise ValueError(f"{path}: columns {names} do not match the schema attributes")
    else:
        ranges: dict[str, dict[str, None]] = {nm: {} for nm in names}
        ops: dict[str, None] = {}
        for i, row in enumerate(rows, start=2):
            if len(row) != len(names) + 2:
                raise ValueError(f"{path}: line {i}: expected {len(names) + 2} fields")
            for nm, v in zip(names, row[1:-1]):
                ranges[nm].setdefault(v)
            ops.setdefault(row[-1])
        if not rows:
            raise ValueError(f"{path}: no data rows to infer a schema from")
        schema = AttributeSchema(
            tuple(Attribute(nm, USER, tuple(ranges[nm])) for nm in names),
            tuple(ops),
        )
    user_names = schema.names(USER)
    object_names = schema.names(OBJECT)
    env_names = schema.names(ENVIRONMENT)
    entries = []
    for i, row in enumerate(rows, start=2):
        if len(row) != len(names) + 2:
            raise ValueError(f"{path}: line {i}: expected {len(names) + 2} fields")
        try:
            decision = Decision.from_label(row[0])
        except ValueError as e:
            raise ValueError(f"{path}: line {i}: {e}") from None
        values = dict(zip(names, row[1:-1]))
        entries.append((
            AccessRequest(
                user={nm: values[nm] for nm in user_names},
                object={nm: values[nm] for nm in object_names},
                operation=row[-1],
                environment={nm: values[nm] for nm in env_names},
            ),
            decision,
        ))
    return entries, schema


# ---------------------------------------------------------------------------
# External labeled datasets (e.g. the Amazon employee-access CSV)


@dataclass
class DatasetBundle:
    schema: AttributeSchema
    log: list
    policy: AbacPolicy | None = None
    hierarchy: ValueHierarchy | None = None
    feature_mode: str = "exact"
    name: str = ""


def load_external_csv(path: str | Path, label_column: str, positive_label: str,
                      object_columns: tuple[str, ...] = ()) -> DatasetBundle:
    """Turn a flat labeled CSV into a replay dataset.

    Every non-label column becomes a categorical attribute (user kind
    unless listed in object_columns); the operation is the single synthetic
    "access"; the label maps to permit when it equals positive_label.
    Hashed featurization is recommended automatically once the value count
    passes the exact-indexing threshold.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        if label_column not in header:
            raise ValueError(f"{path}: no column named {label_column!r}")
        rows = list(reader)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    label_pos = header.index(label_column)
    attr_names = [c for c in header if c != label_column]
    positions = [header.index(c) for c in attr_names]
    ranges: dict[str, dict[str, None]] = {nm: {} for nm in attr_names}
    for row in rows:
        for nm, pos in zip(attr_names, positions):
            ranges[nm].setdefault(row[pos])
    schema = AttributeSchema(
        tuple(
            Attribute(nm, OBJECT if nm in object_columns else USER, tuple(ranges[nm]))
            for nm in attr_names
        ),
        ("access",),
    )
    user_names = schema.names(USER)
    object_names = schema.names(OBJECT)
    log = []
    for row in rows:
        values = {nm: row[pos] for nm, pos in zip(attr_names, positions)}
        decision = PERMIT if row[label_pos] == positive_label else DENY
        log.append((
            AccessRequest(
                user={nm: values[nm] for nm in user_names},
                object={nm: values[nm] for nm in object_names},
                operation="access",
                environment={},
            ),
            decision,
        ))
    mode = "hashed" if schema.total_values > HASHED_THRESHOLD else "exact"
    return DatasetBundle(schema=schema, log=log, feature_mode=mode, name=path.stem)

"""Experiment driver: stream logs through learners, score progressive
validation loss, and run the comparison / policy-shift / initialization /
planning experiment families.

The per-round loop is delegated to the compiled stream kernel; this module
prepares the encoded arrays, the pre-drawn randomness, and the owner
feedback tables, and packages the results. Given the same seed and
configuration a run is reproducible bit for bit (wall-clock time is
reported separately and never enters the deterministic outputs).
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import kernels
from .data import HASHED_THRESHOLD, load_log
from .featurize import FeatureSpace, encode_log, get_state
from .feedback import OwnerModel, RewardWeights, write_feedback_trace
from .learners import BanditConfig, BanditLearner
from .model import Attribute, AttributeSchema, Decision, SchemaError
from .planning import ValueHierarchy, plan_augment
from .warmstart import WarmstartExample, apply_warmstart, merge_examples

# Best hyperparameter values per dataset profile, used as defaults by the
# comparison experiments.
BEST_HYPERPARAMETERS = {
    "kaggle": {"epsilon": 0.01, "first": 10, "bags": 2, "cover": 2},
    "m1": {"epsilon": 0.01, "first": 1500, "bags": 4, "cover": 2},
    "m2": {"epsilon": 0.02, "first": 300, "bags": 2, "cover": 2},
    "m3": {"epsilon": 0.01, "first": 10, "bags": 2, "cover": 2},
    "s1": {"epsilon": 0.02, "first": 1500, "bags": 10, "cover": 1},
    "s2": {"epsilon": 0.03, "first": 1500, "bags": 6, "cover": 1},
    "s3": {"epsilon": 0.01, "first": 1500, "bags": 8, "cover": 1},
}


def progressive_validation_loss(losses: Sequence[float]) -> float:
    """Mean per-round indicator loss."""
    losses = np.asarray(losses, dtype=np.float64)
    if losses.size == 0:
        raise ValueError("progressive validation loss needs at least one round")
    return float(losses.mean())


def windowed_loss(losses: Sequence[float], start: int, stop: int) -> float:
    losses = np.asarray(losses, dtype=np.float64)
    if not 0 <= start < stop <= losses.size:
        raise ValueError(f"window [{start}, {stop}) invalid for {losses.size} rounds")
    return float(losses[start:stop].mean())


def rolling_windowed_loss(losses: Sequence[float], window: int) -> np.ndarray:
    """Mean of losses[t : t + window] for every t; empty if the stream is
    shorter than the window."""
    losses = np.asarray(losses, dtype=np.float64)
    if window < 1:
        raise ValueError("window must be >= 1")
    if losses.size < window:
        return np.empty(0)
    csum = np.concatenate(([0.0], np.cumsum(losses)))
    return (csum[window:] - csum[:-window]) / window


def union_schema(a: AttributeSchema, b: AttributeSchema) -> AttributeSchema:
    """Merge two schemas by attribute name with unioned value ranges, so one
    learner can survive a policy shift between them."""
    if set(a.names()) != set(b.names()):
        raise SchemaError(
            f"cannot union schemas with different attributes: {sorted(a.names())} vs {sorted(b.names())}"
        )
    attrs = []
    for attr in a.attributes:
        other = b.attribute(attr.name)
        if other.kind != attr.kind:
            raise SchemaError(
                f"attribute {attr.name!r} has kind {attr.kind!r} on one side and {other.kind!r} on the other"
            )
        values = attr.values + tuple(v for v in other.values if v not in attr.values)
        attrs.append(Attribute(attr.name, attr.kind, values))
    ops = a.operations + tuple(op for op in b.operations if op not in a.operations)
    return AttributeSchema(tuple(attrs), ops)


@dataclass
class ExperimentConfig:
    """Everything one run needs; the seed is mandatory."""

    schema: AttributeSchema
    log: list
    algo: BanditConfig
    seed: int
    feature_mode: str = "auto"  # auto | exact | hashed
    hash_size: int = 2 ** 18
    warmstart: list | None = None
    warmstart_passes: int = 1
    hierarchy: ValueHierarchy | None = None
    plan: bool = False
    reward_weights: RewardWeights = field(default_factory=RewardWeights)
    feedback_rate: float = 1.0
    delay: int = 0
    owner_model: OwnerModel | None = None
    name: str = ""
    shift_round: int | None = None

    def echo(self) -> dict:
        return {
            "name": self.name,
            "algo": self.algo.variant,
            "hyperparameters": self.algo.hyperparameter_label(),
            "seed": self.seed,
            "rounds": len(self.log),
            "feature_mode": self.feature_mode,
            "warmstart_examples": len(self.warmstart) if self.warmstart else 0,
            "plan": self.plan,
            "feedback_rate": self.feedback_rate,
            "delay": self.delay,
            "backend": kernels.BACKEND,
            "shift_round": self.shift_round,
        }


@dataclass
class RunResult:
    """Per-round records plus the summary of one stream replay."""

    actions: np.ndarray
    probs: np.ndarray
    losses: np.ndarray
    costs: np.ndarray
    rewards: np.ndarray
    dw: np.ndarray
    owner_cnt: np.ndarray
    pvl_curve: np.ndarray
    final_pvl: float
    seconds: float
    config: dict
    shift_round: int | None = None

    @property
    def rounds(self) -> int:
        return int(self.losses.size)


def resolve_feature_mode(schema: AttributeSchema, mode: str) -> str:
    if mode == "auto":
        return "hashed" if schema.total_values > HASHED_THRESHOLD else "exact"
    return mode


def _owner_tables(cfg: ExperimentConfig, truth: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-round true owner decisions. Without an explicit owner model the
    single universal owner replays the logged decision."""
    n = truth.size
    if cfg.owner_model is None:
        return truth.reshape(n, 1).copy(), np.ones(n, dtype=np.int64)
    counts = np.empty(n, dtype=np.int64)
    rows = []
    for i, (request, _) in enumerate(cfg.log):
        try:
            owners = cfg.owner_model.resolve(request.object)
            rows.append([o.decide(request, cfg.schema).index for o in owners])
        except Exception as exc:
            raise type(exc)(f"round {i}: {exc}") from exc
    width = max(len(r) for r in rows)
    table = np.zeros((n, width), dtype=np.int8)
    for i, r in enumerate(rows):
        counts[i] = len(r)
        table[i, :len(r)] = r
    return table, counts


def run_stream(cfg: ExperimentConfig) -> RunResult:
    """Replay the configured log once through the configured learner.

    Planning (when enabled) augments the log with first-level neighbor
    decisions and feeds only the added entries to the learner as
    full-information warm-start examples; the streamed rounds are exactly
    the original log.
    """
    if not cfg.log:
        raise ValueError("cannot run an empty log")
    mode = resolve_feature_mode(cfg.schema, cfg.feature_mode)
    space = FeatureSpace(cfg.schema, mode, cfg.hash_size)

    warm_parts = []
    if cfg.warmstart:
        warm_parts.append(cfg.warmstart)
    if cfg.plan:
        if cfg.hierarchy is None:
            raise ValueError("planning requires a hierarchy")
        augmented = plan_augment(cfg.log, cfg.hierarchy, cfg.schema)
        added = augmented[len(cfg.log):]
        warm_parts.append([
            WarmstartExample(get_state(req, cfg.schema), dec) for req, dec in added
        ])
    examples = merge_examples(*warm_parts) if warm_parts else []

    slots, truth = encode_log(cfg.log, space)
    owner_d, owner_cnt = _owner_tables(cfg, truth)
    n = truth.size
    width = owner_d.shape[1]

    children = np.random.SeedSequence(cfg.seed).spawn(4)
    choice_u = np.random.default_rng(children[0]).random(n)
    fb_u = np.random.default_rng(children[1]).random((n, width))
    if cfg.algo.variant == "bag":
        bag_imp = np.random.default_rng(children[2]).poisson(
            1.0, (n, cfg.algo.n_bags)).astype(np.float64)
    else:
        bag_imp = np.ones((n, 1), dtype=np.float64)

    learner = BanditLearner(cfg.algo, space.num_slots)
    if examples:
        apply_warmstart(learner, examples, space, cfg.warmstart_passes, children[3])

    actions = np.empty(n, dtype=np.int8)
    probs = np.empty(n, dtype=np.float64)
    losses = np.empty(n, dtype=np.float64)
    costs = np.empty(n, dtype=np.float64)
    rewards = np.empty(n, dtype=np.float64)
    dw = np.zeros((n, width), dtype=np.int8)

    w = cfg.reward_weights
    t0 = time.perf_counter()
    kernels.stream_kernel(
        cfg.algo.algo_id, learner.weights, learner.counts, slots, truth,
        owner_d, owner_cnt, fb_u, float(cfg.feedback_rate), int(cfg.delay),
        float(w.tp), float(w.tn), float(w.fp), float(w.fn), float(cfg.algo.eta),
        float(cfg.algo.epsilon), int(cfg.algo.first_k),
        float(cfg.algo.p_min), float(cfg.algo.psi),
        choice_u, bag_imp,
        actions, probs, losses, costs, rewards, dw,
    )
    seconds = time.perf_counter() - t0

    echo = cfg.echo()
    echo["warmstart_examples"] = len(examples)
    return RunResult(
        actions=actions, probs=probs, losses=losses, costs=costs,
        rewards=rewards, dw=dw, owner_cnt=owner_cnt,
        pvl_curve=np.cumsum(losses) / np.arange(1, n + 1),
        final_pvl=float(losses.mean()), seconds=seconds,
        config=echo, shift_round=cfg.shift_round,
    )


def run_shift(schema_a: AttributeSchema, log_a: list, schema_b: AttributeSchema,
              log_b: list, algo: BanditConfig, seed: int, **kwargs) -> RunResult:
    """Stream log A then log B through one persistent learner over the union
    feature space; the recorded shift round is the length of A."""
    union = union_schema(schema_a, schema_b)
    cfg = ExperimentConfig(
        schema=union, log=list(log_a) + list(log_b), algo=algo, seed=seed,
        shift_round=len(log_a), **kwargs,
    )
    return run_stream(cfg)


def emit_outputs(result: RunResult, outdir: str | Path) -> dict[str, Path]:
    """Write trajectory.csv (t, cumulative PVL), summary.json, and the
    per-round feedback trace. The trajectory is byte-deterministic."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    trajectory = outdir / "trajectory.csv"
    with open(trajectory, "w", newline="", encoding="utf-8") as fh:
        fh.write("t,pvl\n")
        curve = result.pvl_curve.tolist()
        for t in range(result.rounds):
            fh.write(f"{t + 1},{curve[t]!r}\n")
    summary = outdir / "summary.json"
    payload = {
        "final_pvl": result.final_pvl,
        "rounds": result.rounds,
        "seconds": result.seconds,
        "shift_round": result.shift_round,
        "config": result.config,
    }
    summary.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    trace = outdir / "feedback.csv"
    write_feedback_trace(trace, result.actions, result.dw, result.owner_cnt,
                         result.rewards, result.costs)
    return {"trajectory": trajectory, "summary": summary, "feedback": trace}


def read_trajectory(path: str | Path) -> np.ndarray:
    rows = Path(path).read_text(encoding="utf-8").strip().splitlines()[1:]
    return np.array([float(r.split(",")[1]) for r in rows])


_CONFIG_KEYS = {
    "epsilon": "epsilon",
    "first": "first_k",
    "bags": "n_bags",
    "cover": "cover_n",
    "psi": "psi",
    "p_min": "p_min",
    "eta": "eta",
}


def bandit_config_from_dict(spec: Mapping, seed: int = 0) -> BanditConfig:
    """Build a BanditConfig from CLI-flag-style keys
    (algo, epsilon, first, bags, cover, psi, p_min, eta)."""
    kwargs = {"variant": spec["algo"], "seed": int(spec.get("seed", seed))}
    for key, attr in _CONFIG_KEYS.items():
        if key in spec:
            kwargs[attr] = spec[key]
    return BanditConfig(**kwargs)


def majority_class_loss(log) -> float:
    """Loss of always answering the log's majority decision."""
    denies = sum(1 for _, d in log if d is Decision.DENY)
    share = denies / len(log)
    return min(share, 1.0 - share)


def compare_algorithms(matrix: Mapping, base_dir: str | Path = ".") -> list[dict]:
    """Run every (dataset, algorithm) cell of a comparison matrix.

    Cells share the loaded dataset; a failing cell contributes an error row
    and the rest of the table is still produced. An algorithm entry with
    "plan": true augments from the dataset's "hierarchy" file and errors on
    datasets that do not provide one.
    """
    from .planning import load_hierarchy

    base = Path(base_dir)
    seed = int(matrix.get("seed", 0))
    rows: list[dict] = []
    for ds in matrix["datasets"]:
        name = ds.get("name", ds["log"])
        log_path = Path(ds["log"])
        if not log_path.is_absolute():
            log_path = base / log_path
        try:
            log, schema = load_log(log_path)
            baseline = majority_class_loss(log)
            hierarchy = None
            if ds.get("hierarchy"):
                h_path = Path(ds["hierarchy"])
                hierarchy = load_hierarchy(h_path if h_path.is_absolute() else base / h_path)
        except Exception as exc:  # noqa: BLE001 - per-cell error reporting
            for alg in matrix["algorithms"]:
                rows.append({"dataset": name, "algorithm": alg.get("name", alg.get("algo")),
                             "error": str(exc)})
            continue
        for alg in matrix["algorithms"]:
            alg_name = alg.get("name", alg.get("algo"))
            try:
                algo_cfg = bandit_config_from_dict(alg, seed)
                plan = bool(alg.get("plan", False))
                if plan and hierarchy is None:
                    raise ValueError(f"dataset {name!r} ships no hierarchy for planning")
                result = run_stream(ExperimentConfig(
                    schema=schema, log=log, algo=algo_cfg, seed=seed, name=str(name),
                    hierarchy=hierarchy if plan else None, plan=plan))
                rows.append({
                    "dataset": name,
                    "algorithm": alg_name,
                    "pvl": result.final_pvl,
                    "hyperparameters": algo_cfg.hyperparameter_label(),
                    "seconds": result.seconds,
                    "majority_class_loss": baseline,
                })
            except Exception as exc:  # noqa: BLE001
                rows.append({"dataset": name, "algorithm": alg_name, "error": str(exc)})
    return rows


def write_comparison(rows: list[dict], outdir: str | Path) -> Path:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    columns = ["dataset", "algorithm", "pvl", "hyperparameters", "seconds",
               "majority_class_loss", "error"]
    table = outdir / "comparison.csv"
    with open(table, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([row.get(c, "") for c in columns])
    (outdir / "comparison.json").write_text(
        json.dumps(rows, indent=2, default=float) + "\n", encoding="utf-8")
    return table

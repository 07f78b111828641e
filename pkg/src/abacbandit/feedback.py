"""Owner feedback simulation and the reward/cost signal.

Each requested object resolves to one or more owners whose true decisions
are compared against the engine's decision. Agreement earns positive
reward, disagreement negative, weighted per outcome type. A disagreeing
owner stays silent with probability 1 - feedback_rate and silence is
recorded as agreement. The reward maps linearly onto a [0, 1] cost for the
learners; with the defaults (one owner, unit weights, feedback rate 1) the
cost equals the 0/1 mismatch indicator.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .featurize import get_state
from .model import (
    AbacPolicy,
    AccessRequest,
    AttributeFilter,
    AttributeSchema,
    Decision,
    EMPTY_FILTER,
    filter_matches,
    policy_decide,
)


@dataclass(frozen=True)
class RewardWeights:
    """Non-negative weights of the four agreement/disagreement outcomes."""

    tp: float = 1.0
    tn: float = 1.0
    fp: float = 1.0
    fn: float = 1.0

    def __post_init__(self):
        for name in ("tp", "tn", "fp", "fn"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"weight {name} must be >= 0")
        if max(self.tp, self.tn) <= 0.0 or max(self.fp, self.fn) <= 0.0:
            raise ValueError("at least one positive and one negative weight must be > 0")


def reward_items(d_w: Decision, d_ae: Decision) -> tuple[int, int, int, int]:
    """Indicator (TP, TN, FP, FN) of one owner decision vs the engine decision.

    TP: both permit. TN: both deny. FP: owner denies what the engine
    permitted. FN: owner permits what the engine denied. Exactly one fires.
    """
    tp = int(d_w is Decision.PERMIT and d_ae is Decision.PERMIT)
    tn = int(d_w is Decision.DENY and d_ae is Decision.DENY)
    fp = int(d_w is Decision.DENY and d_ae is Decision.PERMIT)
    fn = int(d_w is Decision.PERMIT and d_ae is Decision.DENY)
    return tp, tn, fp, fn


def reward(owner_decisions: Sequence[Decision], d_ae: Decision,
           weights: RewardWeights = RewardWeights()) -> float:
    """Sum over owners of tp*TP + tn*TN - fp*FP - fn*FN."""
    if not owner_decisions:
        raise ValueError("at least one owner decision is required")
    total = 0.0
    for d_w in owner_decisions:
        tp, tn, fp, fn = reward_items(d_w, d_ae)
        total += weights.tp * tp + weights.tn * tn - weights.fp * fp - weights.fn * fn
    return total


def reward_to_cost(r: float, weights: RewardWeights, n_owners: int) -> float:
    """Map a reward onto [0, 1], decreasing in r; the best attainable reward
    costs 0 and the worst costs 1."""
    if n_owners < 1:
        raise ValueError("n_owners must be >= 1")
    r_max = n_owners * max(weights.tp, weights.tn)
    r_min = -n_owners * max(weights.fp, weights.fn)
    if not r_min <= r <= r_max:
        raise ValueError(f"reward {r} outside attainable range [{r_min}, {r_max}]")
    return (r_max - r) / (r_max - r_min)


@dataclass(frozen=True)
class Owner:
    """Ground truth is an ABAC policy or a replayed decision table; the
    object filter says which object assignments this owner governs."""

    name: str
    object_filter: AttributeFilter = EMPTY_FILTER
    policy: AbacPolicy | None = None
    replay: Mapping[tuple, Decision] | None = None

    def __post_init__(self):
        if (self.policy is None) == (self.replay is None):
            raise ValueError(f"owner {self.name!r} needs exactly one of policy or replay")

    def decide(self, request: AccessRequest, schema: AttributeSchema) -> Decision:
        if self.policy is not None:
            return policy_decide(self.policy, request)
        key = get_state(request, schema).key()
        if key not in self.replay:
            raise KeyError(f"owner {self.name!r} has no replayed decision for this request")
        return self.replay[key]


def replay_owner(log, schema: AttributeSchema, name: str = "owner") -> Owner:
    """Single universal owner whose truth is the logged decision; the default
    experimental setup."""
    table = {get_state(req, schema).key(): dec for req, dec in log}
    return Owner(name=name, replay=table)


@dataclass(frozen=True)
class OwnerModel:
    schema: AttributeSchema
    owners: tuple[Owner, ...]

    def resolve(self, object_assignment: Mapping[str, str]) -> list[Owner]:
        governing = [o for o in self.owners
                     if filter_matches(o.object_filter, object_assignment)]
        if not governing:
            raise LookupError("no owner governs this object assignment")
        return governing


@dataclass(frozen=True)
class FeedbackRecord:
    request: AccessRequest
    d_ae: Decision
    owner_decisions: tuple[Decision, ...]  # as recorded, silence folded in
    reward: float
    cost: float


def simulate_feedback(model: OwnerModel, request: AccessRequest, d_ae: Decision,
                      feedback_rate: float = 1.0,
                      rng: np.random.Generator | None = None,
                      weights: RewardWeights = RewardWeights()) -> FeedbackRecord:
    """Collect (possibly silent) owner feedback for one decision.

    Every governing owner's true decision is computed; a disagreeing owner
    speaks only with probability feedback_rate, otherwise the record shows
    agreement. One uniform draw is consumed per owner regardless.
    """
    if not 0.0 <= feedback_rate <= 1.0:
        raise ValueError("feedback_rate must be in [0, 1]")
    rng = np.random.default_rng() if rng is None else rng
    recorded: list[Decision] = []
    for owner in model.resolve(request.object):
        true = owner.decide(request, model.schema)
        u = rng.random()
        if true is not d_ae and u >= feedback_rate:
            recorded.append(d_ae)
        else:
            recorded.append(true)
    r = reward(recorded, d_ae, weights)
    cost = reward_to_cost(r, weights, len(recorded))
    return FeedbackRecord(request, d_ae, tuple(recorded), r, cost)


def write_feedback_trace(path: str | Path, actions: np.ndarray, dw_rec: np.ndarray,
                         owner_cnt: np.ndarray, rewards: np.ndarray,
                         costs: np.ndarray) -> None:
    """Per-round trace CSV: t, engine decision, recorded owner decisions
    joined by ';', reward, cost."""
    labels = (Decision.PERMIT.value, Decision.DENY.value)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "d_AE", "d_w", "reward", "cost"])
        for t in range(len(actions)):
            dws = ";".join(labels[dw_rec[t, i]] for i in range(owner_cnt[t]))
            w.writerow([t + 1, labels[actions[t]], dws,
                        repr(float(rewards[t])), repr(float(costs[t]))])

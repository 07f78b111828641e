"""Cost-sensitive base learner and the exploration algorithms wrapped around it.

Actions are authorization decisions with fixed indices: permit = 0, deny = 1.
The base learner keeps one logistic regressor per action and predicts each
action's cost in (0, 1); the exploration variants (epsilon-greedy,
explore-first, bagging, online cover) decide how to sample an action and
how the observed cost flows back into the regressors through inverse
propensity weighting. All arithmetic is delegated to the kernel functions
so the per-example API and the fused stream replay stay bit-identical.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .featurize import FeatureVector
from .model import Decision

ACTIONS = (Decision.PERMIT, Decision.DENY)

EPSILON_GREEDY = "epsilon"
EXPLORE_FIRST = "first"
BAGGING = "bag"
ONLINE_COVER = "cover"
SUPERVISED = "supervised"
ORACLE = "oracle"
ANTI_ORACLE = "anti"
UNIFORM_RANDOM = "random"

VARIANTS = (EPSILON_GREEDY, EXPLORE_FIRST, BAGGING, ONLINE_COVER, SUPERVISED,
            ORACLE, ANTI_ORACLE, UNIFORM_RANDOM)

_ALGO_IDS = {
    EPSILON_GREEDY: kernels.ALGO_EPSILON,
    EXPLORE_FIRST: kernels.ALGO_FIRST,
    BAGGING: kernels.ALGO_BAG,
    ONLINE_COVER: kernels.ALGO_COVER,
    SUPERVISED: kernels.ALGO_SUPERVISED,
    ORACLE: kernels.ALGO_ORACLE,
    ANTI_ORACLE: kernels.ALGO_ANTI_ORACLE,
    UNIFORM_RANDOM: kernels.ALGO_RANDOM,
}

SNAPSHOT_VERSION = 1


def _as_row(features) -> np.ndarray:
    if isinstance(features, FeatureVector):
        return features.to_active_slots()
    return np.asarray(features, dtype=np.int64)


@dataclass(frozen=True)
class BanditConfig:
    """Exploration variant plus its hyperparameters.

    epsilon applies to epsilon-greedy; first_k to explore-first; n_bags to
    bagging; cover_n and psi to online cover. p_min floors the sampling
    probability wherever vote smoothing is active, and eta is the base
    learning rate with inverse-sqrt decay.
    """

    variant: str
    epsilon: float = 0.025
    first_k: int = 100
    n_bags: int = 2
    cover_n: int = 2
    psi: float = 0.01
    p_min: float = 0.0125
    eta: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}, expected one of {VARIANTS}")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must be in [0, 1]")
        if self.first_k < 0:
            raise ValueError("first_k must be >= 0")
        if self.n_bags < 1:
            raise ValueError("n_bags must be >= 1")
        if self.cover_n < 1:
            raise ValueError("cover_n must be >= 1")
        if self.psi <= 0.0:
            raise ValueError("psi must be > 0")
        if not 0.0 < self.p_min < 0.5:
            raise ValueError("p_min must be in (0, 0.5)")
        if self.eta <= 0.0:
            raise ValueError("eta must be > 0")

    @property
    def algo_id(self) -> int:
        return _ALGO_IDS[self.variant]

    @property
    def n_members(self) -> int:
        if self.variant == BAGGING:
            return self.n_bags
        if self.variant == ONLINE_COVER:
            return self.cover_n
        return 1

    def min_prob(self) -> float:
        """Smallest probability choose_action can ever return, the floor
        enforced by bandit_update before dividing by the probability."""
        if self.variant == EPSILON_GREEDY:
            return 1.0 if self.epsilon == 0.0 else self.epsilon / 2.0
        if self.variant == EXPLORE_FIRST:
            return 0.5 if self.first_k > 0 else 1.0
        if self.variant in (BAGGING, ONLINE_COVER):
            return self.p_min
        return 1.0

    def hyperparameter_label(self) -> str:
        if self.variant == EPSILON_GREEDY:
            return f"epsilon={self.epsilon}"
        if self.variant == EXPLORE_FIRST:
            return f"{self.first_k} first"
        if self.variant == BAGGING:
            return f"{self.n_bags} bags"
        if self.variant == ONLINE_COVER:
            return f"cover n={self.cover_n} psi={self.psi}"
        return "NA"


class CostSensitiveLearner:
    """Per-action online logistic regressors over a fixed feature space."""

    def __init__(self, num_slots: int, eta: float = 0.5):
        self.num_slots = num_slots
        self.eta = eta
        self.weights = np.zeros((1, 2, num_slots), dtype=np.float64)
        self.counts = np.zeros((1, 2), dtype=np.int64)

    @property
    def update_count(self) -> int:
        return int(self.counts.sum())

    def predict_costs(self, features) -> np.ndarray:
        row = _as_row(features)
        c0, c1 = kernels.predict_pair(self.weights, 0, row)
        return np.array([c0, c1])

    def cs_update(self, features, action: int, target_cost: float, importance: float) -> None:
        """Importance-weighted step on one action's regressor; the target is
        clamped into [0, 1] and non-finite inputs are rejected."""
        if not np.isfinite(target_cost) or not np.isfinite(importance):
            raise ValueError("target cost and importance must be finite")
        if importance < 0.0:
            raise ValueError("importance must be >= 0")
        target = min(1.0, max(0.0, float(target_cost)))
        kernels.cs_update(self.weights, self.counts, 0, _as_row(features),
                          int(action), target, float(importance), self.eta)


def ips_cost_estimates(observed_cost: float, prob: float, chosen: int) -> np.ndarray:
    """Inverse-propensity per-action cost estimates from one interaction:
    observed_cost / prob for the chosen action, zero elsewhere. Unbiased
    under the sampling distribution; the regressors consume it clamped."""
    if prob <= 0.0:
        raise ValueError("sampling probability must be > 0")
    out = np.zeros(2)
    out[chosen] = observed_cost / prob
    return out


def supervised_update(learner, features, true_decision: Decision, importance: float = 1.0) -> None:
    """Full-information update: the true action is driven toward cost 0 and
    the other toward cost 1. Works on a CostSensitiveLearner or the member
    ensemble of a BanditLearner (every member is updated)."""
    row = _as_row(features)
    y = true_decision.index
    for member in range(learner.weights.shape[0]):
        kernels.supervised_step(learner.weights, learner.counts, member, row,
                                y, float(importance), learner.eta)


class BanditLearner:
    """One exploration algorithm over a member ensemble of cost regressors.

    Rounds are counted from zero; explore-first treats the first first_k
    rounds as its exploration phase. choose_action returns the exact
    probability with which the action was sampled, which bandit_update
    needs for inverse propensity weighting.
    """

    def __init__(self, config: BanditConfig, num_slots: int):
        self.config = config
        self.num_slots = num_slots
        self.eta = config.eta
        self.weights = np.zeros((config.n_members, 2, num_slots), dtype=np.float64)
        self.counts = np.zeros((config.n_members, 2), dtype=np.int64)
        self._votes = np.empty(config.n_members, dtype=np.int64)
        self.rng = np.random.default_rng(config.seed)

    def clone_reset(self) -> "BanditLearner":
        """Fresh learner with zeroed weights and an RNG reseeded from the config."""
        return BanditLearner(self.config, self.num_slots)

    def predict_costs(self, features) -> np.ndarray:
        """Lead member's per-action cost predictions."""
        c0, c1 = kernels.predict_pair(self.weights, 0, _as_row(features))
        return np.array([c0, c1])

    def greedy_action(self, features) -> int:
        c0, c1 = kernels.predict_pair(self.weights, 0, _as_row(features))
        return 0 if c0 <= c1 else 1

    def action_distribution(self, features, t: int) -> tuple[float, float]:
        """Exact sampling distribution over (permit, deny) at round t."""
        cfg = self.config
        row = _as_row(features)
        if cfg.variant == EPSILON_GREEDY:
            c0, c1 = kernels.predict_pair(self.weights, 0, row)
            greedy = 0 if c0 <= c1 else 1
            pg = 1.0 - cfg.epsilon + cfg.epsilon / 2.0
            p0 = pg if greedy == 0 else 1.0 - pg
        elif cfg.variant == EXPLORE_FIRST:
            if t < cfg.first_k:
                p0 = 0.5
            else:
                c0, c1 = kernels.predict_pair(self.weights, 0, row)
                p0 = 1.0 if c0 <= c1 else 0.0
        elif cfg.variant in (BAGGING, ONLINE_COVER):
            p0 = kernels._vote_distribution(self.weights, cfg.n_members, row,
                                            cfg.p_min, self._votes)
        elif cfg.variant == UNIFORM_RANDOM:
            p0 = 0.5
        else:
            c0, c1 = kernels.predict_pair(self.weights, 0, row)
            p0 = 1.0 if c0 <= c1 else 0.0
        return p0, 1.0 - p0

    def choose_action(self, features, t: int, rng: np.random.Generator | None = None) -> tuple[int, float]:
        """Sample an action; returns (action index, sampling probability)."""
        rng = self.rng if rng is None else rng
        p0, p1 = self.action_distribution(features, t)
        if rng.random() < p0:
            return 0, p0
        return 1, p1

    def bandit_update(self, features, action: int, observed_cost: float, prob: float,
                      rng: np.random.Generator | None = None) -> None:
        """Feed back the observed cost of the chosen action.

        The cost estimate is realized as an importance-weighted regression
        step with weight 1/prob on the chosen action's regressor; bagging
        additionally multiplies in a Poisson(1) bootstrap weight per bag and
        online cover trains non-lead policies on the diversity-adjusted cost.
        """
        if self.config.variant not in (EPSILON_GREEDY, EXPLORE_FIRST, BAGGING, ONLINE_COVER):
            raise ValueError(f"{self.config.variant!r} does not take bandit updates")
        if not np.isfinite(observed_cost) or not 0.0 <= observed_cost <= 1.0:
            raise ValueError("observed cost must be finite and within [0, 1]")
        floor = self.config.min_prob()
        if not np.isfinite(prob) or prob < floor - 1e-12:
            raise ValueError(f"probability {prob} below this configuration's floor {floor}")
        rng = self.rng if rng is None else rng
        cfg = self.config
        if cfg.variant == BAGGING:
            bag_imp = rng.poisson(1.0, cfg.n_bags).astype(np.float64)
        else:
            bag_imp = np.ones(1, dtype=np.float64)
        kernels._update_round(cfg.algo_id, self.weights, self.counts,
                              _as_row(features), 0, int(action), float(prob),
                              float(observed_cost), bag_imp,
                              cfg.epsilon, cfg.p_min, cfg.psi, self.eta, self._votes)


def save_snapshot(learner: BanditLearner, path: str | Path) -> None:
    """Versioned dump of weights, update counts, and config; round-trippable."""
    meta = {"version": SNAPSHOT_VERSION, "num_slots": learner.num_slots,
            "config": asdict(learner.config)}
    np.savez(path, weights=learner.weights, counts=learner.counts,
             meta=np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8))


def load_snapshot(path: str | Path) -> BanditLearner:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode("utf-8"))
        if meta.get("version") != SNAPSHOT_VERSION:
            raise ValueError(f"unsupported snapshot version {meta.get('version')!r}")
        learner = BanditLearner(BanditConfig(**meta["config"]), meta["num_slots"])
        learner.weights[:] = data["weights"]
        learner.counts[:] = data["counts"]
    return learner

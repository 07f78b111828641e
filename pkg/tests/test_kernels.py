"""The fused stream kernel checked against an independent per-round driver
written in plain Python, consuming identical pre-drawn randomness, plus the
numba/numpy backend parity contract."""

import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest

from abacbandit import kernels
from abacbandit.data import gen_complete_log, shuffle_log
from abacbandit.featurize import FeatureSpace, encode_log
from abacbandit.feedback import Owner, OwnerModel
from abacbandit.harness import ExperimentConfig, run_stream
from abacbandit.learners import BanditConfig
from abacbandit.model import (
    DENY,
    PERMIT,
    AbacPolicy,
    AbacRule,
    Attribute,
    AttributeFilter,
    AttributeSchema,
)

SCHEMA = AttributeSchema(
    attributes=(
        Attribute("Role", "user", ("a", "b", "c")),
        Attribute("Device", "object", ("cam", "lock")),
        Attribute("Time", "environment", ("d", "n")),
    ),
    operations=("op0", "op1"),
)
POLICY = AbacPolicy(
    schema=SCHEMA,
    rules=(
        AbacRule(uaf=AttributeFilter.of({"Role": "a"}), decision=PERMIT),
        AbacRule(uaf=AttributeFilter.of({"Role": "b"}), operation="op0", decision=PERMIT),
        AbacRule(eaf=AttributeFilter.of({"Time": "n"}), operation="op1", decision=DENY),
    ),
)


def make_log(n=400, seed=0):
    base = gen_complete_log(POLICY)
    log = []
    while len(log) < n:
        log.extend(base)
    return shuffle_log(log[:n], seed=seed)


def sigmoid(x):
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


class Reference:
    """Plain-Python replay, one deliberate re-implementation of every rule."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        space = FeatureSpace(cfg.schema)
        self.slots, self.truth = encode_log(cfg.log, space)
        n = len(cfg.log)
        algo = cfg.algo
        self.members = algo.n_members
        self.w = np.zeros((self.members, 2, space.num_slots))
        self.cnt = np.zeros((self.members, 2), dtype=np.int64)
        children = np.random.SeedSequence(cfg.seed).spawn(4)
        self.choice_u = np.random.default_rng(children[0]).random(n)
        if cfg.owner_model is None:
            self.owner_d = self.truth.reshape(n, 1)
            self.owner_cnt = np.ones(n, dtype=int)
        else:
            rows = []
            for req, _ in cfg.log:
                owners = cfg.owner_model.resolve(req.object)
                rows.append([o.decide(req, cfg.schema).index for o in owners])
            width = max(len(r) for r in rows)
            self.owner_d = np.zeros((n, width), dtype=int)
            self.owner_cnt = np.array([len(r) for r in rows])
            for i, r in enumerate(rows):
                self.owner_d[i, :len(r)] = r
        self.fb_u = np.random.default_rng(children[1]).random((n, self.owner_d.shape[1]))
        if algo.variant == "bag":
            self.bag = np.random.default_rng(children[2]).poisson(
                1.0, (n, algo.n_bags)).astype(float)
        else:
            self.bag = np.ones((n, 1))

    def predict(self, b, row):
        s0 = sum(self.w[b, 0, j] for j in row)
        s1 = sum(self.w[b, 1, j] for j in row)
        return sigmoid(s0), sigmoid(s1)

    def step(self, b, row, action, target, importance):
        if importance <= 0:
            return
        target = min(1.0, max(0.0, target))
        s = sum(self.w[b, action, j] for j in row)
        eta = self.cfg.algo.eta / math.sqrt(1.0 + self.cnt[b, action] / 1000.0)
        g = eta * importance * (sigmoid(s) - target)
        for j in row:
            self.w[b, action, j] -= g
        self.cnt[b, action] += 1

    def distribution(self, row):
        algo = self.cfg.algo
        if algo.variant == "epsilon":
            c0, c1 = self.predict(0, row)
            pg = 1.0 - algo.epsilon + algo.epsilon / 2.0
            return pg if c0 <= c1 else 1.0 - pg
        if algo.variant == "bag" or algo.variant == "cover":
            permits = sum(1 for b in range(self.members)
                          if self.predict(b, row)[0] <= self.predict(b, row)[1])
            return algo.p_min + (1.0 - 2.0 * algo.p_min) * permits / self.members
        raise NotImplementedError

    def update(self, t):
        algo = self.cfg.algo
        row = self.slots[t]
        a, prob, cost = self.actions[t], self.probs[t], self.costs[t]
        if algo.variant == "supervised":
            y = self.truth[t]
            self.step(0, row, y, 0.0, 1.0)
            self.step(0, row, 1 - y, 1.0, 1.0)
            return
        c_hat = cost / prob
        if algo.variant in ("epsilon", "first"):
            self.step(0, row, a, c_hat, 1.0)
        elif algo.variant == "bag":
            for b in range(self.members):
                self.step(b, row, a, c_hat, self.bag[t, b])
        elif algo.variant == "cover":
            votes = [0 if self.predict(b, row)[0] <= self.predict(b, row)[1] else 1
                     for b in range(self.members)]
            self.step(0, row, a, c_hat, 1.0)
            permits = sum(1 for v in votes[:1] if v == 0)
            for b in range(1, self.members):
                q0 = algo.p_min + (1.0 - 2.0 * algo.p_min) * permits / b
                qa = q0 if a == 0 else 1.0 - q0
                self.step(b, row, a, c_hat - algo.psi / qa, 1.0)
                if votes[b] == 0:
                    permits += 1

    def run(self):
        cfg = self.cfg
        algo = cfg.algo
        n = len(cfg.log)
        self.actions = np.zeros(n, dtype=int)
        self.probs = np.zeros(n)
        self.costs = np.zeros(n)
        losses = np.zeros(n)
        w = cfg.reward_weights
        for t in range(n):
            row = self.slots[t]
            if algo.variant == "oracle":
                a, p = self.truth[t], 1.0
            elif algo.variant == "anti":
                a, p = 1 - self.truth[t], 1.0
            elif algo.variant == "random":
                a = 0 if self.choice_u[t] < 0.5 else 1
                p = 0.5
            elif algo.variant == "supervised":
                c0, c1 = self.predict(0, row)
                a, p = (0 if c0 <= c1 else 1), 1.0
            elif algo.variant == "first":
                p0 = 0.5 if t < algo.first_k else (
                    1.0 if self.predict(0, row)[0] <= self.predict(0, row)[1] else 0.0)
                a = 0 if self.choice_u[t] < p0 else 1
                p = p0 if a == 0 else 1.0 - p0
            else:
                p0 = self.distribution(row)
                a = 0 if self.choice_u[t] < p0 else 1
                p = p0 if a == 0 else 1.0 - p0
            self.actions[t], self.probs[t] = a, p
            losses[t] = float(a != self.truth[t])
            r = 0.0
            for k in range(self.owner_cnt[t]):
                d = self.owner_d[t, k]
                if d != a and self.fb_u[t, k] >= cfg.feedback_rate:
                    d = a
                if d == 0 and a == 0:
                    r += w.tp
                elif d == 1 and a == 1:
                    r += w.tn
                elif d == 1 and a == 0:
                    r -= w.fp
                else:
                    r -= w.fn
            r_max = self.owner_cnt[t] * max(w.tp, w.tn)
            r_min = -self.owner_cnt[t] * max(w.fp, w.fn)
            self.costs[t] = (r_max - r) / (r_max - r_min)
            tu = t - cfg.delay
            if tu >= 0:
                self.update(tu)
        for tu in range(max(0, n - cfg.delay), n):
            self.update(tu)
        return self.actions, self.probs, losses, self.costs, self.w


VARIANT_CONFIGS = [
    BanditConfig("epsilon", epsilon=0.1, seed=0),
    BanditConfig("first", first_k=60, seed=0),
    BanditConfig("bag", n_bags=3, seed=0),
    BanditConfig("cover", cover_n=3, psi=0.05, seed=0),
    BanditConfig("supervised", seed=0),
    BanditConfig("oracle", seed=0),
    BanditConfig("random", seed=0),
]


@pytest.mark.parametrize("algo", VARIANT_CONFIGS, ids=lambda c: c.variant)
def test_stream_kernel_matches_reference(algo):
    cfg = ExperimentConfig(schema=SCHEMA, log=make_log(), algo=algo, seed=13)
    result = run_stream(cfg)
    ref = Reference(cfg)
    actions, probs, losses, costs, weights = ref.run()
    assert np.array_equal(result.actions, actions)
    assert np.array_equal(result.probs, probs)
    assert np.array_equal(result.losses, losses)
    assert np.array_equal(result.costs, costs)


def test_kernel_matches_reference_with_delay_and_partial_feedback():
    algo = BanditConfig("cover", cover_n=2, seed=0)
    cfg = ExperimentConfig(schema=SCHEMA, log=make_log(500, seed=2), algo=algo,
                           seed=21, feedback_rate=0.6, delay=7)
    result = run_stream(cfg)
    ref = Reference(cfg)
    actions, probs, losses, costs, _ = ref.run()
    assert np.array_equal(result.actions, actions)
    assert np.array_equal(result.costs, costs)


def test_delay_longer_than_stream_learns_nothing_online():
    # With every update deferred past the end, decisions are made by the
    # untrained learner; flushing afterwards still trains the final model.
    algo = BanditConfig("epsilon", epsilon=0.0, seed=0)
    log = make_log(200, seed=3)
    cfg = ExperimentConfig(schema=SCHEMA, log=log, algo=algo, seed=4, delay=10_000)
    result = run_stream(cfg)
    # Untrained ties resolve to permit every round.
    assert (result.actions == 0).all()
    ref = Reference(cfg)
    actions, probs, losses, costs, weights = ref.run()
    assert np.array_equal(result.actions, actions)
    assert weights.any()


def test_kernel_matches_reference_multi_owner():
    owners = (
        Owner("cams", object_filter=AttributeFilter.of({"Device": "cam"}),
              policy=POLICY),
        Owner("all", policy=AbacPolicy(schema=SCHEMA, rules=(AbacRule(decision=PERMIT),))),
    )
    algo = BanditConfig("epsilon", epsilon=0.2, seed=0)
    cfg = ExperimentConfig(schema=SCHEMA, log=make_log(300, seed=5), algo=algo,
                           seed=8, owner_model=OwnerModel(SCHEMA, owners))
    result = run_stream(cfg)
    ref = Reference(cfg)
    actions, probs, losses, costs, _ = ref.run()
    assert np.array_equal(result.actions, actions)
    assert np.array_equal(result.costs, costs)
    assert result.costs.min() >= 0.0 and result.costs.max() <= 1.0
    assert set(np.unique(result.owner_cnt)) <= {1, 2}


def test_backend_flag_rejects_unknown(monkeypatch):
    import importlib

    monkeypatch.setenv("ABACBANDIT_BACKEND", "fortran")
    with pytest.raises(RuntimeError):
        importlib.reload(kernels)
    monkeypatch.undo()
    importlib.reload(kernels)


@pytest.mark.slow
def test_numpy_backend_produces_identical_trajectory(tmp_path):
    # The same CLI run under both backends must emit byte-identical
    # trajectories; randomness is pre-drawn and the float ops are
    # order-identical.
    from abacbandit.data import save_log

    log = make_log(600, seed=9)
    log_path = tmp_path / "log.csv"
    save_log(log, SCHEMA, log_path)
    outputs = {}
    for backend in ("numba", "numpy"):
        out = tmp_path / backend
        env = dict(os.environ, ABACBANDIT_BACKEND=backend)
        proc = subprocess.run(
            [sys.executable, "-m", "abacbandit.cli", "run", "--log", str(log_path),
             "--algo", "cover", "--cover", "2", "--seed", "11", "--out", str(out)],
            capture_output=True, text=True, env=env)
        assert proc.returncode == 0, proc.stdout + proc.stderr
        outputs[backend] = (out / "trajectory.csv").read_bytes()
        summary = json.loads((out / "summary.json").read_text())
        assert summary["config"]["backend"] == backend
    assert outputs["numba"] == outputs["numpy"]

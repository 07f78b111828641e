"""Hot numeric kernels for the online learning loop.

Everything here operates on plain numpy arrays so the same source compiles
under numba (default) or runs as-is in pure Python/numpy. Select with the
environment variable ABACBANDIT_BACKEND=numba|numpy before import; both
backends produce bit-identical results because all randomness is drawn
outside the kernels and the float operations are order-identical.

Weight layout: (members, 2 actions, dim) float64. A "member" is the single
regressor of epsilon-greedy / explore-first / supervised, one bag of the
bagging ensemble, or one policy of the online cover. Feature rows are
int64 slot indices with constant arity; repeated slots carry extra weight.
"""

from __future__ import annotations

import math
import os

import numpy as np

_env = os.environ.get("ABACBANDIT_BACKEND", "").strip().lower()
if _env not in ("", "numba", "numpy"):
    raise RuntimeError(
        f"ABACBANDIT_BACKEND must be 'numba' or 'numpy', got {_env!r}"
    )

if _env == "numpy":
    BACKEND = "numpy"
else:
    try:
        import numba  # noqa: F401
        BACKEND = "numba"
    except ImportError:
        if _env == "numba":
            raise
        BACKEND = "numpy"

if BACKEND == "numba":
    from numba import njit
else:
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def passthrough(fn):
            return fn

        return passthrough

# Algorithm ids shared with the harness.
ALGO_EPSILON = 0
ALGO_FIRST = 1
ALGO_BAG = 2
ALGO_COVER = 3
ALGO_SUPERVISED = 4
ALGO_ORACLE = 5
ALGO_ANTI_ORACLE = 6
ALGO_RANDOM = 7


@njit(cache=True)
def sigmoid(x):
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


@njit(cache=True)
def predict_pair(weights, member, row):
    """Predicted cost of each action at one feature row: sigmoid(w_a . x)."""
    s0 = 0.0
    s1 = 0.0
    for j in range(row.shape[0]):
        s0 += weights[member, 0, row[j]]
        s1 += weights[member, 1, row[j]]
    return sigmoid(s0), sigmoid(s1)


@njit(cache=True)
def cs_update(weights, counts, member, row, action, target, importance, eta0):
    """One importance-weighted logistic step on a single action's regressor.

    w_a <- w_a - eta_t * importance * (sigmoid(w_a . x) - target) * x with
    eta_t = eta0 / sqrt(1 + updates/1000). Update counts are kept per
    (member, action) so the two actions' regressors stay fully independent;
    zero importance is a no-op and does not advance the counter.
    """
    if importance <= 0.0:
        return
    s = 0.0
    for j in range(row.shape[0]):
        s += weights[member, action, row[j]]
    c = sigmoid(s)
    eta = eta0 / math.sqrt(1.0 + counts[member, action] / 1000.0)
    g = eta * importance * (c - target)
    for j in range(row.shape[0]):
        weights[member, action, row[j]] -= g
    counts[member, action] += 1


@njit(cache=True)
def supervised_step(weights, counts, member, row, true_action, importance, eta0):
    """Full-information step: true action toward cost 0, the other toward 1."""
    cs_update(weights, counts, member, row, true_action, 0.0, importance, eta0)
    cs_update(weights, counts, member, row, 1 - true_action, 1.0, importance, eta0)


@njit(cache=True)
def warmstart_kernel(weights, counts, rows, labels, ex_weights, order, passes, eta0):
    """Pre-train all members on labeled examples in a fixed shuffled order."""
    n_members = weights.shape[0]
    for _ in range(passes):
        for oi in range(order.shape[0]):
            i = order[oi]
            y = labels[i]
            w = ex_weights[i]
            for b in range(n_members):
                supervised_step(weights, counts, b, rows[i], y, w, eta0)


@njit(cache=True)
def _vote_distribution(weights, n_members, row, p_min, votes):
    """Greedy vote of each member plus the p_min-smoothed permit probability."""
    permits = 0
    for b in range(n_members):
        c0, c1 = predict_pair(weights, b, row)
        v = 0 if c0 <= c1 else 1
        votes[b] = v
        if v == 0:
            permits += 1
    p0 = p_min + (1.0 - 2.0 * p_min) * permits / n_members
    return p0


@njit(cache=True)
def _clamp01(x):
    if x < 0.0:
        return 0.0
    if x > 1.0:
        return 1.0
    return x


@njit(cache=True)
def _update_round(algo, weights, counts, row, truth_t, action, prob, cost,
                  bag_imp_t, eps, p_min, psi, eta0, votes):
    """Feed one round's feedback into the regressors.

    Only the chosen action's regressor learns, from the inverse-propensity
    cost estimate cost/prob clamped into [0, 1] (the regression target
    range). Bagging re-weights each bag by its Poisson bootstrap draw;
    cover policies after the first subtract the diversity bonus
    psi / p_prefix(action) from the estimate before clamping.
    """
    if algo == ALGO_SUPERVISED:
        supervised_step(weights, counts, 0, row, truth_t, 1.0, eta0)
        return
    c_hat = cost / prob
    if algo == ALGO_EPSILON or algo == ALGO_FIRST:
        cs_update(weights, counts, 0, row, action, _clamp01(c_hat), 1.0, eta0)
    elif algo == ALGO_BAG:
        for b in range(weights.shape[0]):
            cs_update(weights, counts, b, row, action, _clamp01(c_hat),
                      bag_imp_t[b], eta0)
    elif algo == ALGO_COVER:
        n_members = weights.shape[0]
        for b in range(n_members):
            c0, c1 = predict_pair(weights, b, row)
            votes[b] = 0 if c0 <= c1 else 1
        cs_update(weights, counts, 0, row, action, _clamp01(c_hat), 1.0, eta0)
        permits = 0
        if votes[0] == 0:
            permits = 1
        for b in range(1, n_members):
            # Diversity bonus against the smoothed distribution of the
            # first b members, evaluated before this round's updates.
            q0 = p_min + (1.0 - 2.0 * p_min) * permits / b
            qa = q0 if action == 0 else 1.0 - q0
            cs_update(weights, counts, b, row, action,
                      _clamp01(c_hat - psi / qa), 1.0, eta0)
            if votes[b] == 0:
                permits += 1


@njit(cache=True)
def stream_kernel(algo, weights, counts, slots, truth,
                  owner_d, owner_cnt, fb_u, feedback_rate, delay,
                  lam_tp, lam_tn, lam_fp, lam_fn, eta0,
                  eps, k_explore, p_min, psi,
                  choice_u, bag_imp,
                  actions, probs, losses, costs, rewards, dw_rec):
    """Replay one access stream through one learner.

    Per round: predict, sample an action with its exact probability, score
    the indicator loss against the logged decision, simulate owner feedback
    (silent disagreement is recorded as agreement), convert reward to a
    [0, 1] cost, and apply the (possibly delayed) update. Feedback still
    pending when the stream ends is flushed afterward.
    """
    n = slots.shape[0]
    n_members = weights.shape[0]
    votes = np.empty(n_members, dtype=np.int64)
    lam_pos = lam_tp if lam_tp >= lam_tn else lam_tn
    lam_neg = lam_fp if lam_fp >= lam_fn else lam_fn

    for t in range(n):
        row = slots[t]
        # --- choose ---
        if algo == ALGO_ORACLE:
            action = truth[t]
            prob = 1.0
        elif algo == ALGO_ANTI_ORACLE:
            action = 1 - truth[t]
            prob = 1.0
        elif algo == ALGO_RANDOM:
            action = 0 if choice_u[t] < 0.5 else 1
            prob = 0.5
        elif algo == ALGO_SUPERVISED:
            c0, c1 = predict_pair(weights, 0, row)
            action = 0 if c0 <= c1 else 1
            prob = 1.0
        elif algo == ALGO_EPSILON:
            c0, c1 = predict_pair(weights, 0, row)
            greedy = 0 if c0 <= c1 else 1
            pg = 1.0 - eps + eps / 2.0
            p0 = pg if greedy == 0 else 1.0 - pg
            action = 0 if choice_u[t] < p0 else 1
            prob = p0 if action == 0 else 1.0 - p0
        elif algo == ALGO_FIRST:
            if t < k_explore:
                p0 = 0.5
            else:
                c0, c1 = predict_pair(weights, 0, row)
                p0 = 1.0 if c0 <= c1 else 0.0
            action = 0 if choice_u[t] < p0 else 1
            prob = p0 if action == 0 else 1.0 - p0
        else:  # ALGO_BAG, ALGO_COVER
            p0 = _vote_distribution(weights, n_members, row, p_min, votes)
            action = 0 if choice_u[t] < p0 else 1
            prob = p0 if action == 0 else 1.0 - p0

        actions[t] = action
        probs[t] = prob
        losses[t] = 0.0 if action == truth[t] else 1.0

        # --- owner feedback ---
        r = 0.0
        n_owners = owner_cnt[t]
        for w in range(n_owners):
            d = owner_d[t, w]
            if d != action and fb_u[t, w] >= feedback_rate:
                d = action
            dw_rec[t, w] = d
            if d == 0 and action == 0:
                r += lam_tp
            elif d == 1 and action == 1:
                r += lam_tn
            elif d == 1 and action == 0:
                r -= lam_fp
            else:
                r -= lam_fn
        rewards[t] = r
        r_max = n_owners * lam_pos
        r_min = -n_owners * lam_neg
        costs[t] = (r_max - r) / (r_max - r_min)

        # --- delayed update ---
        tu = t - delay
        if tu >= 0:
            _update_round(algo, weights, counts, slots[tu], truth[tu],
                          actions[tu], probs[tu], costs[tu], bag_imp[tu],
                          eps, p_min, psi, eta0, votes)

    flush_from = n - delay
    if flush_from < 0:
        flush_from = 0
    for tu in range(flush_from, n):
        _update_round(algo, weights, counts, slots[tu], truth[tu],
                      actions[tu], probs[tu], costs[tu], bag_imp[tu],
                      eps, p_min, psi, eta0, votes)

"""Independent reference implementations used to check the package.

Nothing here imports the code under test, except for plain data types.
"""
from __future__ import annotations

import math

import numpy as np


def brute_force_f1(submitted, truth) -> float:
    """Relation F1 by enumerating pairs one by one with explicit category labels."""
    sub = np.asarray(submitted).astype(bool)
    tru = np.asarray(truth).astype(bool)
    n = sub.shape[0]

    def category(a, i, j):
        fwd, bwd = a[i][j], a[j][i]
        if fwd and bwd:
            return "both"
        if fwd:
            return "forward"
        if bwd:
            return "backward"
        return "none"

    hit_true = n_true = hit_sub = n_sub = 0
    for i in range(n):
        for j in range(i + 1, n):
            r, r_hat = category(sub, i, j), category(tru, i, j)
            if r_hat != "none":
                n_true += 1
                hit_true += r == r_hat
            if r != "none":
                n_sub += 1
                hit_sub += r == r_hat
    recall = hit_true / n_true if n_true else 0.0
    precision = hit_sub / n_sub if n_sub else 0.0
    if recall + precision == 0:
        return 0.0
    return 2 * recall * precision / (recall + precision)


def structural_step(weights, history, action, noise=None):
    """One step of the structural equations, solved by sweeping the lag-0 DAG.

    ``weights`` is [lag+1, n+1, n+1] with bot variable 0; ``history`` holds
    the latent vectors of the previous ``lag`` steps, oldest first.
    """
    w = np.asarray(weights)
    lag, n = w.shape[0] - 1, w.shape[1] - 1
    pre = np.zeros(n) if noise is None else np.array(noise, dtype=float)
    for tau in range(1, lag + 1):
        pre += np.asarray(history[lag - tau]) @ w[tau, 1:, 1:]
    pre[action] += w[0, 0, action + 1]
    s = pre.copy()
    for _ in range(n + 1):  # fixed point of s = pre + s W0 is reached after depth(DAG) sweeps
        s = pre + s @ w[0, 1:, 1:]
    return s


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=float)))


def weakest_first_cate(weights, history, intervention, reference, target, horizon=2):
    """Noise-free CATE with the argmin-probability policy after the first step."""

    def run(first):
        hist = [np.array(h, dtype=float) for h in history]
        a = first
        for h in range(horizon + 1):
            s = structural_step(weights, hist, a)
            hist = hist[1:] + [s]
            p = sigmoid(s)
            a = int(np.argmin(p))
        return p[target]

    return run(intervention) - run(reference)


def uniform_policy_cate(weights, history, intervention, reference, target, horizon=2):
    """Noise-free CATE averaged exactly over all uniform action sequences after step 0."""
    w = np.asarray(weights)
    n = w.shape[1] - 1

    def run(first):
        total = 0.0
        seqs = np.array(np.meshgrid(*[np.arange(n)] * horizon, indexing="ij")).reshape(horizon, -1).T
        for seq in seqs:
            hist = [np.array(h, dtype=float) for h in history]
            for a in (first, *seq):
                s = structural_step(w, hist, int(a))
                hist = hist[1:] + [s]
            total += sigmoid(s)[target]
        return total / len(seqs)

    return run(intervention) - run(reference)


def rmse_per_dataset_then_mean(est, truth) -> float:
    est, truth = np.asarray(est, float), np.asarray(truth, float)
    roots = []
    for d in range(est.shape[0]):
        sq = sum((a - b) ** 2 for a, b in zip(est[d], truth[d]))
        roots.append(math.sqrt(sq / est.shape[1]))
    return sum(roots) / len(roots)

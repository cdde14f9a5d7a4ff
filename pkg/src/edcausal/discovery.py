"""VAR + LiNGaM structure estimation for lagged student-learning data.

Stage one regresses every construct's latent value on its lagged values and
on the one-hot bot action of the same step (the bot acts first, so its choice
is exogenous within a step). Stage two orders the innovations with
DirectLiNGaM and reads the instantaneous weights off a triangular regression
in that order. Lagged structural weights follow as ``M_tau (I - B_0)``.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .core import DEFAULT_THRESHOLD, AggregatedGraph, SyntheticDataset, TemporalGraph, aggregate
from .simulator import PROB_EPS, logit

log = logging.getLogger(__name__)

DEFAULT_LAG = 2
DEFAULT_MAX_ROWS = 10_000
MIN_ROWS = 30


class DiscoveryError(ValueError):
    pass


class RankDeficientError(DiscoveryError):
    pass


@dataclass(frozen=True)
class VarModel:
    """Pooled least-squares VAR fit.

    ``coefs[tau - 1][i, j]`` is the effect of variable ``i`` at ``t - tau`` on
    variable ``j`` at ``t`` over all ``n + 1`` variables (bot row and column
    are zero: the bot is not a lagged regressor and its policy is not
    modelled). ``action_effects[a]`` is the mean latent vector shift when the
    bot assigns ``a``; rows for never-observed actions are NaN.
    """

    lag: int
    coefs: np.ndarray  # [lag, n+1, n+1]
    intercept: np.ndarray  # [n+1]
    action_effects: np.ndarray | None  # [n, n]
    residuals: np.ndarray  # [rows, n+1]
    action_counts: np.ndarray  # [n]
    link: str

    @property
    def num_constructs(self) -> int:
        return self.coefs.shape[1] - 1


def _latent(probs: np.ndarray, link: str, clip: float) -> np.ndarray:
    if link == "logit":
        return logit(np.clip(probs, clip, 1.0 - clip))
    if link == "identity":
        return np.asarray(probs, dtype=np.float64)
    raise ValueError(f"unknown link {link!r}")


def _design(dataset: SyntheticDataset, lag: int, link: str, clip: float):
    ys, lagged, acts = [], [], []
    for traj in dataset:
        T = len(traj)
        if T <= lag:
            raise DiscoveryError(f"trajectory of student {traj.student_id} has {T} steps, lag is {lag}")
        z = _latent(traj.probs, link, clip)
        ys.append(z[lag:])
        lagged.append(np.hstack([z[lag - tau : T - tau] for tau in range(1, lag + 1)]) if lag else np.empty((T, 0)))
        acts.append(traj.actions[lag:])
    return np.vstack(ys), np.vstack(lagged), np.concatenate(acts)


def fit_var(
    dataset: SyntheticDataset,
    lag: int = DEFAULT_LAG,
    *,
    link: str = "logit",
    action_regressors: bool = True,
    clip: float = PROB_EPS,
) -> VarModel:
    """Per-equation OLS over the pooled lagged rows of every student."""
    if lag < 0:
        raise ValueError("lag must be nonnegative")
    n = dataset.num_constructs
    y, lagged, actions = _design(dataset, lag, link, clip)
    counts = np.bincount(actions, minlength=n)
    if action_regressors:
        seen = np.flatnonzero(counts)
        onehot = (actions[:, None] == seen[None, :]).astype(np.float64)
        x = np.hstack([lagged, onehot])
    else:
        x = np.hstack([lagged, np.ones((len(y), 1))])
    if x.shape[0] < x.shape[1]:
        raise RankDeficientError(f"{x.shape[0]} rows for {x.shape[1]} regressors")
    beta, _, rank, _ = np.linalg.lstsq(x, y, rcond=None)
    if rank < x.shape[1]:
        raise RankDeficientError(f"design matrix has rank {rank} < {x.shape[1]} columns")
    resid_c = y - x @ beta

    coefs = np.zeros((lag, n + 1, n + 1))
    for tau in range(lag):
        coefs[tau, 1:, 1:] = beta[tau * n : (tau + 1) * n]
    intercept = np.zeros(n + 1)
    effects = None
    if action_regressors:
        effects = np.full((n, n), np.nan)
        effects[seen] = beta[lag * n :]
    else:
        intercept[1:] = beta[lag * n]
    bot = actions.astype(np.float64)
    intercept[0] = bot.mean()
    residuals = np.column_stack([bot - bot.mean(), resid_c])
    return VarModel(lag, coefs, intercept, effects, residuals, counts, link)


def _standardize(x: np.ndarray) -> np.ndarray:
    x = x - x.mean(axis=0)
    return x / x.std(axis=0)


def _regress_out(x: np.ndarray, cols: Sequence[int], m: int) -> None:
    xm = x[:, m]
    var = np.dot(xm, xm) / len(xm) - xm.mean() ** 2
    if var <= 0:
        return
    for i in cols:
        cov = np.mean(x[:, i] * xm) - x[:, i].mean() * xm.mean()
        x[:, i] -= (cov / var) * xm


def direct_lingam_order(
    residuals: np.ndarray,
    *,
    exogenous: Sequence[int] = (),
    max_rows: int | None = DEFAULT_MAX_ROWS,
) -> list[int]:
    """Causal order of the columns of ``residuals`` by DirectLiNGaM.

    At each round the remaining variable whose pairwise regression residuals
    look most independent of it (maximum-entropy approximation of mutual
    information) is taken as the next root and regressed out of the rest.
    Columns listed in ``exogenous`` are placed first, in the given order.
    Rows beyond ``max_rows`` are thinned with a fixed stride.
    """
    x = np.array(residuals, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] < 2:
        raise DiscoveryError("need a [rows, vars] matrix with at least two variables")
    nrow, q = x.shape
    if nrow < q or nrow < MIN_ROWS:
        raise DiscoveryError(f"{nrow} rows is too few for {q} variables")
    if max_rows is not None and nrow > max_rows:
        x = x[np.round(np.linspace(0, nrow - 1, max_rows)).astype(np.int64)]

    order: list[int] = []
    remaining = list(range(q))
    for m in exogenous:
        if m not in remaining:
            raise DiscoveryError(f"exogenous index {m} invalid or repeated")
        remaining.remove(m)
        _regress_out(x, remaining, m)
        order.append(m)

    tail = []
    while remaining:
        std = x[:, remaining].std(axis=0)
        flat = [c for c, s in zip(remaining, std) if not s > 1e-12 * max(1.0, np.abs(x[:, c]).max())]
        if flat:
            # fully explained by earlier variables: carries no ordering information
            tail.extend(flat)
            remaining = [c for c in remaining if c not in flat]
            continue
        if len(remaining) == 1:
            order.append(remaining.pop())
            break
        d = kernels.pairwise_entropy_diff(np.ascontiguousarray(_standardize(x[:, remaining])))
        score = np.sum(np.minimum(0.0, d) ** 2, axis=1)
        m = remaining[int(np.argmin(score))]
        remaining.remove(m)
        _regress_out(x, remaining, m)
        order.append(m)
    return order + sorted(tail)


def triangular_weights(residuals: np.ndarray, order: Sequence[int]) -> np.ndarray:
    """``B[i, j]``: OLS weight of ``i`` in the regression of ``j`` on its predecessors."""
    q = residuals.shape[1]
    b = np.zeros((q, q))
    for k in range(1, len(order)):
        j, parents = order[k], list(order[:k])
        coef, *_ = np.linalg.lstsq(residuals[:, parents], residuals[:, j], rcond=None)
        b[parents, j] = coef
    return b


@dataclass(frozen=True)
class StructuralFit:
    """Structural pieces recovered from a VAR model; consumed by graph and SCM builders."""

    model: VarModel
    order: list[int]
    instantaneous: np.ndarray  # [n, n] construct block of B_0
    lagged: np.ndarray  # [lag, n, n] structural lagged weights
    action_table: np.ndarray  # [n, n] structural shift per action (NaN rows: unseen)
    gains: np.ndarray  # [n]
    noise_scales: np.ndarray  # [n] uniform half-width equivalents

    @property
    def num_constructs(self) -> int:
        return self.instantaneous.shape[0]


def fit_structural(
    dataset: SyntheticDataset,
    lag: int = DEFAULT_LAG,
    *,
    link: str = "logit",
    clip: float = PROB_EPS,
    max_rows: int | None = DEFAULT_MAX_ROWS,
) -> StructuralFit:
    model = fit_var(dataset, lag, link=link, clip=clip)
    n = model.num_constructs
    order = direct_lingam_order(model.residuals, exogenous=[0], max_rows=max_rows)
    b0 = triangular_weights(model.residuals, order)
    inst = b0[1:, 1:].copy()
    np.fill_diagonal(inst, 0.0)
    unmix = np.eye(n) - inst
    lagged = np.einsum("tij,jk->tik", model.coefs[:, 1:, 1:], unmix)
    table = model.action_effects @ unmix
    gains = np.zeros(n)
    for a in range(n):
        if np.isnan(table[a, a]):
            continue
        # column a's baseline is the shift it gets when other constructs are taught
        others = np.delete(table[:, a], a)
        others = others[~np.isnan(others)]
        gains[a] = table[a, a] - (np.median(others) if len(others) else 0.0)
    eps = model.residuals[:, 1:] @ unmix
    noise = np.sqrt(3.0) * eps.std(axis=0)
    return StructuralFit(model, order, inst, lagged, table, gains, noise)


def graph_from_fit(fit: StructuralFit, threshold: float = DEFAULT_THRESHOLD) -> TemporalGraph:
    n, lag = fit.num_constructs, fit.model.lag
    w = np.zeros((lag + 1, n + 1, n + 1))
    w[0, 1:, 1:] = fit.instantaneous
    w[0, 0, 1:] = fit.gains
    w[1:, 1:, 1:] = fit.lagged
    w[np.abs(w) <= threshold] = 0.0
    return TemporalGraph(w)


def estimate_temporal_graph(
    dataset: SyntheticDataset,
    lag: int = DEFAULT_LAG,
    threshold: float = DEFAULT_THRESHOLD,
    *,
    link: str = "logit",
    clip: float = PROB_EPS,
    max_rows: int | None = DEFAULT_MAX_ROWS,
) -> TemporalGraph:
    fit = fit_structural(dataset, lag, link=link, clip=clip, max_rows=max_rows)
    return graph_from_fit(fit, threshold)


def discover(
    dataset: SyntheticDataset,
    lag: int = DEFAULT_LAG,
    threshold: float = DEFAULT_THRESHOLD,
    *,
    subset: Sequence[int] | None = None,
    link: str = "logit",
    clip: float = PROB_EPS,
    max_rows: int | None = DEFAULT_MAX_ROWS,
) -> AggregatedGraph:
    """Binary construct graph; ``subset`` restricts and reorders rows/columns."""
    graph = estimate_temporal_graph(dataset, lag, threshold, link=link, clip=clip, max_rows=max_rows)
    agg = aggregate(graph, threshold if threshold > 0 else np.finfo(float).tiny)
    return agg.subset(subset) if subset is not None else agg


def discover_many(datasets: Sequence[SyntheticDataset], jobs: int = 1, **kwargs) -> np.ndarray:
    """Stack ``discover`` over datasets into a [D, n, n] boolean array."""
    run = lambda ds: discover(ds, **kwargs).adj
    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            mats = list(pool.map(run, datasets))
    else:
        mats = [run(ds) for ds in datasets]
    return np.stack(mats)

"""Lagged structural causal model of student learning.

Each construct has a latent skill ``s``; the observed value is the probability
``logistic(s)`` of answering a question on it correctly. One time step is a
linear structural equation over the latent skills::

    pre_t = sum_tau s_{t-tau} @ W_tau + gain[a_t] * e_{a_t} + eps_t
    s_t   = pre_t @ inv(I - W_0)

where ``a_t`` is the bot action at time ``t`` (chosen before the skills move),
``W_0`` is the acyclic instantaneous construct block and ``eps`` is uniform
noise on ``[-noise_scale, noise_scale]``.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from . import kernels
from .core import EFFECT_TIME, CateQuery, SyntheticDataset, TemporalGraph, Trajectory

PROB_EPS = 1e-9

# stream keys for SeedSequence derivation
_GRAPH_STREAM = 0
_STUDENT_STREAM = 1
_QUERY_STREAM = 2


class InvalidQueryError(ValueError):
    pass


def logistic(s):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(s, dtype=np.float64)))


def logit(p):
    p = np.asarray(p, dtype=np.float64)
    return np.log(p) - np.log1p(-p)


def clamp_probs(p):
    return np.clip(p, PROB_EPS, 1.0 - PROB_EPS)


def make_rng(*keys: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(k) for k in keys])))


@dataclass(frozen=True)
class SimConfig:
    num_constructs: int = 50
    num_students: int = 100
    num_steps: int = 400
    lag: int = 2
    edge_probability: float = 0.02
    weight_range: tuple[float, float] = (0.2, 0.5)
    persistence_range: tuple[float, float] = (0.5, 0.8)
    noise_scale: float = 0.3
    learning_gain: float = 1.0
    init_scale: float = 1.0
    max_spectral_radius: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if self.num_constructs < 2:
            raise ValueError("num_constructs must be at least 2")
        if self.num_students < 1:
            raise ValueError("num_students must be positive")
        if self.lag < 0 or self.num_steps <= self.lag:
            raise ValueError("num_steps must exceed lag")
        if not self.learning_gain > 0:
            raise ValueError("learning_gain must be positive")
        if self.noise_scale < 0 or self.init_scale < 0:
            raise ValueError("noise scales must be nonnegative")
        if not 0 <= self.edge_probability <= 1:
            raise ValueError("edge_probability must be in [0, 1]")
        lo, hi = self.weight_range
        if not 0 < lo <= hi:
            raise ValueError("weight_range must be positive and ordered")
        lo, hi = self.persistence_range
        if not 0 < lo <= hi < 1:
            raise ValueError("persistence_range must lie in (0, 1)")
        if not 0 < self.max_spectral_radius < 1:
            raise ValueError("max_spectral_radius must lie in (0, 1)")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def replace(self, **changes) -> "SimConfig":
        values = {f: getattr(self, f) for f in self.__dataclass_fields__}
        values.update(changes)
        return SimConfig(**values)


# -- policies ---------------------------------------------------------------


class ActionPolicy(Protocol):
    """Maps (rng, probs[B, n]) to B actions. State-independent policies ignore probs."""

    state_dependent: bool

    def __call__(self, rng: np.random.Generator, probs: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class UniformPolicy:
    num_constructs: int
    state_dependent: bool = field(default=False, init=False)

    def __call__(self, rng, probs):
        return rng.integers(0, self.num_constructs, size=len(probs))


@dataclass(frozen=True)
class CategoricalPolicy:
    """I.i.d. actions with fixed probabilities (used for fitted models)."""

    weights: tuple[float, ...]
    state_dependent: bool = field(default=False, init=False)

    def __call__(self, rng, probs):
        w = np.asarray(self.weights, dtype=np.float64)
        cdf = np.cumsum(w / w.sum())
        cdf[-1] = 1.0
        return np.searchsorted(cdf, rng.random(len(probs)), side="right")


@dataclass(frozen=True)
class WeakestFirstPolicy:
    """Deterministic curriculum: teach the construct with the lowest probability."""

    state_dependent: bool = field(default=True, init=False)

    def __call__(self, rng, probs):
        return np.argmin(np.asarray(probs), axis=1)


# -- dynamics ---------------------------------------------------------------


@dataclass(frozen=True)
class LinearDynamics:
    """Reduced form of a lag-window linear SCM: everything a rollout needs.

    ``s_t = sum_tau s_{t-tau} @ coefs[tau-1] + action_rows[a_t] + eps_t @ mixing``.
    """

    coefs: np.ndarray  # [lag, n, n]
    action_rows: np.ndarray  # [n, n]
    mixing: np.ndarray  # [n, n]
    noise_scales: np.ndarray  # [n] half-widths of uniform structural noise
    link: str = "logit"

    @classmethod
    def from_structural(cls, lagged, instantaneous, action_table, noise_scales, link="logit"):
        n = instantaneous.shape[0]
        mixing = np.linalg.inv(np.eye(n) - instantaneous)
        coefs = np.einsum("tij,jk->tik", lagged, mixing) if len(lagged) else np.zeros((0, n, n))
        return cls(
            coefs=np.ascontiguousarray(coefs),
            action_rows=np.ascontiguousarray(action_table @ mixing),
            mixing=np.ascontiguousarray(mixing),
            noise_scales=np.broadcast_to(np.asarray(noise_scales, dtype=np.float64), (n,)).copy(),
            link=link,
        )

    @classmethod
    def from_graph(cls, graph: TemporalGraph, noise_scale: float) -> "LinearDynamics":
        return cls.from_structural(
            graph.lagged_block(),
            graph.instantaneous_block(),
            np.diag(graph.learning_gains()),
            noise_scale,
        )

    @property
    def lag(self) -> int:
        return self.coefs.shape[0]

    @property
    def num_constructs(self) -> int:
        return self.mixing.shape[0]

    def observe(self, s):
        if self.link == "logit":
            return clamp_probs(logistic(s))
        return np.clip(s, 0.0, 1.0)

    def latent(self, p):
        p = np.asarray(p, dtype=np.float64)
        if self.link == "logit":
            return logit(p)
        return p

    def advance(self, history, actions, eps):
        """One batched step. history [B, lag, n] oldest first; eps [B, n] structural noise."""
        s = self.action_rows[actions] + eps @ self.mixing
        for tau in range(1, self.lag + 1):
            s += history[:, self.lag - tau, :] @ self.coefs[tau - 1]
        return s

    def simulate(self, actions, eps, history=None):
        """Latent path for a fixed action sequence via the compiled recursion."""
        n = self.num_constructs
        if history is None:
            history = np.zeros((self.lag, n))
        drive = self.action_rows[np.asarray(actions)] + np.asarray(eps) @ self.mixing
        return kernels.var_recursion(
            self.coefs, np.ascontiguousarray(drive), np.ascontiguousarray(history, dtype=np.float64)
        )


def spectral_radius(coefs: np.ndarray) -> float:
    """Largest |eigenvalue| of the VAR companion matrix (row-vector convention)."""
    lag, n, _ = coefs.shape
    if lag == 0:
        return 0.0
    comp = np.zeros((lag * n, lag * n))
    for tau in range(lag):
        comp[:n, tau * n : (tau + 1) * n] = coefs[tau].T
    if lag > 1:
        comp[n:, : (lag - 1) * n] = np.eye((lag - 1) * n)
    return float(np.max(np.abs(np.linalg.eigvals(comp))))


# -- graph generation -------------------------------------------------------


def generate_graph(config: SimConfig) -> TemporalGraph:
    n, lag = config.num_constructs, config.lag
    rng = make_rng(config.seed, _GRAPH_STREAM)
    lo, hi = config.weight_range
    plo, phi = config.persistence_range
    w = np.zeros((lag + 1, n + 1, n + 1))

    order = rng.permutation(n)
    rank = np.empty(n, dtype=np.int64)
    rank[order] = np.arange(n)
    forward = rank[:, None] < rank[None, :]
    mask = (rng.random((n, n)) < config.edge_probability) & forward
    vals = rng.uniform(lo, hi, size=(n, n))
    w[0, 1:, 1:] = np.where(mask, vals, 0.0)

    offdiag = ~np.eye(n, dtype=bool)
    for tau in range(1, lag + 1):
        mask = (rng.random((n, n)) < config.edge_probability) & offdiag
        vals = rng.uniform(lo, hi, size=(n, n))
        w[tau, 1:, 1:] = np.where(mask, vals, 0.0)
    if lag >= 1:
        w[1, 1:, 1:][np.diag_indices(n)] = rng.uniform(plo, phi, size=n)

    w[0, 0, 1:] = config.learning_gain

    # shrink lagged weights until the process is stationary with margin;
    # radius is not linear in the scale for lag > 1, hence the loop
    for _ in range(100):
        if lag == 0:
            break
        dyn = LinearDynamics.from_structural(w[1:, 1:, 1:], w[0, 1:, 1:], np.eye(n), 0.0)
        radius = spectral_radius(dyn.coefs)
        if radius <= config.max_spectral_radius:
            break
        w[1:, 1:, 1:] *= 0.999 * config.max_spectral_radius / radius
    return TemporalGraph(w)


# -- state stepping ---------------------------------------------------------


@dataclass(frozen=True)
class SimState:
    """Latent skills for the last ``lag`` steps, oldest first (at least one row)."""

    latent: np.ndarray

    def __post_init__(self):
        s = np.atleast_2d(np.asarray(self.latent, dtype=np.float64))
        s.setflags(write=False)
        object.__setattr__(self, "latent", s)

    @property
    def skills(self) -> np.ndarray:
        return self.latent[-1]

    @property
    def probs(self) -> np.ndarray:
        return logistic(self.skills)

    @classmethod
    def initial(cls, num_constructs: int, lag: int) -> "SimState":
        return cls(np.zeros((max(lag, 1), num_constructs)))


def step(
    state: SimState,
    action: int,
    graph: TemporalGraph,
    rng: np.random.Generator | None = None,
    noise_scale: float = 0.0,
) -> SimState:
    """Advance one time step with the bot assigning ``action``."""
    n, lag = graph.num_constructs, graph.lag
    if not 0 <= action < n:
        raise ValueError(f"action {action} outside [0, {n - 1}]")
    hist = state.latent
    if hist.shape[1] != n:
        raise ValueError("state and graph disagree on the construct count")
    if hist.shape[0] < lag:
        hist = np.vstack([np.zeros((lag - hist.shape[0], n)), hist])
    eps = np.zeros(n)
    if noise_scale > 0:
        if rng is None:
            raise ValueError("an rng is required when noise_scale > 0")
        eps = noise_scale * rng.uniform(-1.0, 1.0, size=n)
    dyn = LinearDynamics.from_graph(graph, noise_scale)
    s_new = dyn.advance(hist[None, hist.shape[0] - lag :, :], np.array([action]), eps[None, :])[0]
    keep = max(lag, 1)
    return SimState(np.vstack([hist, s_new[None, :]])[-keep:])


# -- dataset simulation -----------------------------------------------------


def _simulate_student(config: SimConfig, dyn: LinearDynamics, policy: ActionPolicy, student_id: int) -> Trajectory:
    n, T, lag = config.num_constructs, config.num_steps, config.lag
    rng = make_rng(config.seed, _STUDENT_STREAM, student_id)
    unit = rng.uniform(-1.0, 1.0, size=(T, n))
    eps = unit * config.noise_scale
    eps[0] = unit[0] * config.init_scale
    if not policy.state_dependent:
        actions = np.asarray(policy(rng, np.full((T, n), 0.5)), dtype=np.int64)
        latent = dyn.simulate(actions, eps)
    else:
        actions = np.empty(T, dtype=np.int64)
        latent = np.empty((T, n))
        hist = np.zeros((1, lag, n))
        p_prev = np.full((1, n), 0.5)
        for t in range(T):
            a = int(policy(rng, p_prev)[0])
            actions[t] = a
            s = dyn.advance(hist, np.array([a]), eps[t : t + 1])
            latent[t] = s[0]
            if lag:
                hist = np.concatenate([hist[:, 1:, :], s[:, None, :]], axis=1)
            p_prev = logistic(s)
    return Trajectory(student_id, actions, clamp_probs(logistic(latent)))


def simulate_dataset(
    config: SimConfig,
    graph: TemporalGraph,
    policy: ActionPolicy | None = None,
    jobs: int = 1,
) -> SyntheticDataset:
    if graph.num_constructs != config.num_constructs or graph.lag != config.lag:
        raise ValueError("graph does not match config")
    policy = policy or UniformPolicy(config.num_constructs)
    dyn = LinearDynamics.from_graph(graph, config.noise_scale)
    ids = range(config.num_students)
    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            trajs = list(pool.map(lambda i: _simulate_student(config, dyn, policy, i), ids))
    else:
        trajs = [_simulate_student(config, dyn, policy, i) for i in ids]
    return SyntheticDataset(tuple(trajs))


# -- CATE queries and oracle ------------------------------------------------


def _children(graph: TemporalGraph, construct: int) -> list[int]:
    out = np.abs(graph.weights[:, construct + 1, 1:]).max(axis=0) > 0
    out[construct] = False
    return [int(j) for j in np.flatnonzero(out)]


def generate_queries(
    dataset: SyntheticDataset,
    graph: TemporalGraph,
    count: int = 10,
    seed: int = 0,
    effect_time: int = EFFECT_TIME,
) -> list[CateQuery]:
    """Queries whose conditioning is a prefix of one of the dataset's trajectories.

    The target is drawn from the intervention construct and its direct
    children, so most queries have a nonzero effect.
    """
    if count < 1:
        raise ValueError("count must be at least 1")
    n, lag = dataset.num_constructs, graph.lag
    rng = make_rng(seed, _QUERY_STREAM)
    queries = []
    for _ in range(count):
        traj = dataset.trajectories[int(rng.integers(len(dataset)))]
        if len(traj) <= lag:
            raise ValueError("trajectories are too short for the graph lag")
        last = int(rng.integers(lag, len(traj)))
        c_i = int(rng.integers(n))
        c_r = int((c_i + 1 + rng.integers(n - 1)) % n)
        candidates = [c_i] + _children(graph, c_i)
        target = candidates[int(rng.integers(len(candidates)))]
        cond = traj.prefix(last + 1).rows()
        queries.append(CateQuery(cond, c_i, c_r, target, effect_time))
    return queries


def history_from_conditioning(query: CateQuery, lag: int, link: str = "logit") -> np.ndarray:
    """Latent state for the last ``lag`` conditioning rows, oldest first."""
    rows = query.conditioning
    if rows.shape[0] < lag:
        raise InvalidQueryError(f"conditioning has {rows.shape[0]} rows, lag is {lag}")
    probs = rows[rows.shape[0] - lag :, 1:]
    if link == "logit":
        if np.any((probs <= 0) | (probs >= 1)):
            raise InvalidQueryError("conditioning probabilities must lie strictly inside (0, 1)")
        return logit(probs)
    return probs.copy()


@dataclass(frozen=True)
class RolloutEstimate:
    value: float
    stderr: float
    num_rollouts: int


def paired_rollouts(
    dyn: LinearDynamics,
    history: np.ndarray,
    intervention: int,
    reference: int,
    target: int,
    horizon: int,
    num_rollouts: int,
    seed: int,
    policy: ActionPolicy,
) -> RolloutEstimate:
    """Monte-Carlo difference of E[p_target at t+horizon] under do(B_t=intervention) vs reference.

    Both arms replay one random stream, so swapping the arms negates the
    estimate exactly.
    """
    if num_rollouts < 1:
        raise ValueError("num_rollouts must be at least 1")
    lag, n = dyn.lag, dyn.num_constructs
    history = np.asarray(history, dtype=np.float64).reshape(lag, n)

    def arm(first_action):
        rng = make_rng(seed)
        hist = np.broadcast_to(history, (num_rollouts, lag, n)).copy()
        s = None
        for h in range(horizon + 1):
            eps = rng.uniform(-1.0, 1.0, size=(num_rollouts, n)) * dyn.noise_scales
            if h == 0:
                actions = np.full(num_rollouts, first_action, dtype=np.int64)
            else:
                # state-independent policies only look at the batch size
                probs = dyn.observe(s) if policy.state_dependent else s
                actions = np.asarray(policy(rng, probs), dtype=np.int64)
            s = dyn.advance(hist, actions, eps)
            if lag:
                hist = np.concatenate([hist[:, 1:, :], s[:, None, :]], axis=1)
        return dyn.observe(s[:, target])

    y_i = arm(intervention)
    y_r = y_i if intervention == reference else arm(reference)
    value = float(np.mean(y_i) - np.mean(y_r))
    diffs = y_i - y_r
    stderr = float(np.std(diffs, ddof=1) / np.sqrt(num_rollouts)) if num_rollouts > 1 else float("nan")
    return RolloutEstimate(value, stderr, num_rollouts)


def cate_oracle_estimate(
    graph: TemporalGraph,
    query: CateQuery,
    num_rollouts: int = 10_000,
    seed: int = 0,
    noise_scale: float = 0.3,
    policy: ActionPolicy | None = None,
) -> RolloutEstimate:
    if query.num_constructs != graph.num_constructs:
        raise InvalidQueryError("query and graph disagree on the construct count")
    history = history_from_conditioning(query, graph.lag)
    dyn = LinearDynamics.from_graph(graph, noise_scale)
    policy = policy or UniformPolicy(graph.num_constructs)
    return paired_rollouts(
        dyn, history, query.intervention, query.reference, query.target,
        query.effect_time, num_rollouts, seed, policy,
    )


def cate_oracle(
    graph: TemporalGraph,
    query: CateQuery,
    num_rollouts: int = 10_000,
    seed: int = 0,
    noise_scale: float = 0.3,
    policy: ActionPolicy | None = None,
) -> float:
    """Ground-truth CATE by simulating the true graph forward from the conditioning state."""
    return cate_oracle_estimate(graph, query, num_rollouts, seed, noise_scale, policy).value

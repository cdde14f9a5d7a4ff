"""Domain types and graph algebra shared by every other module.

Variable index 0 on the variable axes of a temporal graph is always the bot
action; indices ``1..n`` are the constructs.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Sequence

import numpy as np

DEFAULT_THRESHOLD = 0.05
EFFECT_TIME = 2


class RelationCategory(IntEnum):
    NONE = 0
    FORWARD = 1  # i -> j
    BACKWARD = 2  # i <- j
    BOTH = 3  # i <-> j


class GraphError(ValueError):
    pass


def _is_dag(adj: np.ndarray) -> bool:
    """Kahn's algorithm on a boolean adjacency matrix."""
    adj = np.asarray(adj, dtype=bool).copy()
    indeg = adj.sum(axis=0)
    ready = [i for i in range(adj.shape[0]) if indeg[i] == 0]
    seen = 0
    while ready:
        i = ready.pop()
        seen += 1
        for j in np.flatnonzero(adj[i]):
            adj[i, j] = False
            indeg[j] -= 1
            if indeg[j] == 0:
                ready.append(j)
    return seen == adj.shape[0]


@dataclass(frozen=True)
class TemporalGraph:
    """Weighted lagged adjacency tensor.

    ``weights[t, i, j]`` is the coefficient from variable ``i`` at time
    ``now - t`` to variable ``j`` at ``now``.
    """

    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64)
        if w.ndim != 3 or w.shape[1] != w.shape[2] or w.shape[1] < 2:
            raise GraphError(f"weights must have shape [lag+1, n+1, n+1], got {w.shape}")
        if not np.all(np.isfinite(w)):
            raise GraphError("weights must be finite")
        inst = w[0]
        if np.any(np.diag(inst) != 0):
            raise GraphError("lag-0 diagonal must be zero")
        if np.any(inst[1:, 0] != 0):
            raise GraphError("constructs cannot affect bot_action instantaneously")
        if not _is_dag(inst != 0):
            raise GraphError("lag-0 slice must be acyclic")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def lag(self) -> int:
        return self.weights.shape[0] - 1

    @property
    def num_constructs(self) -> int:
        return self.weights.shape[1] - 1

    def lagged_block(self) -> np.ndarray:
        """Construct-to-construct weights for lags ``1..lag``, shape [lag, n, n]."""
        return self.weights[1:, 1:, 1:]

    def instantaneous_block(self) -> np.ndarray:
        return self.weights[0, 1:, 1:]

    def learning_gains(self) -> np.ndarray:
        """Gain on construct ``j`` when the bot assigns ``j`` (the gated bot edges)."""
        return self.weights[0, 0, 1:]

    def __eq__(self, other):
        if not isinstance(other, TemporalGraph):
            return NotImplemented
        return np.array_equal(self.weights, other.weights)

    def __hash__(self):
        return hash(self.weights.tobytes())


@dataclass(frozen=True)
class AggregatedGraph:
    """Binary construct-to-construct matrix; ``adj[i, j] = 1`` means i is a prerequisite of j."""

    adj: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.adj)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise GraphError(f"adjacency must be square, got shape {a.shape}")
        if not np.all((a == 0) | (a == 1)):
            raise GraphError("adjacency entries must be 0 or 1")
        a = a.astype(bool)
        if np.any(np.diag(a)):
            raise GraphError("adjacency diagonal must be zero")
        a.setflags(write=False)
        object.__setattr__(self, "adj", a)

    @property
    def n(self) -> int:
        return self.adj.shape[0]

    def subset(self, indices: Sequence[int]) -> "AggregatedGraph":
        idx = np.asarray(indices, dtype=np.int64)
        return AggregatedGraph(self.adj[np.ix_(idx, idx)])

    def __eq__(self, other):
        if not isinstance(other, AggregatedGraph):
            return NotImplemented
        return np.array_equal(self.adj, other.adj)

    def __hash__(self):
        return hash(self.adj.tobytes())


@dataclass(frozen=True)
class Trajectory:
    student_id: int
    actions: np.ndarray  # [T] int
    probs: np.ndarray  # [T, n] float

    def __post_init__(self):
        actions = np.asarray(self.actions, dtype=np.int64)
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.ndim != 2 or actions.shape != (probs.shape[0],):
            raise ValueError("actions must be [T] and probs [T, n]")
        if probs.shape[0] == 0:
            raise ValueError("trajectory must have at least one step")
        if np.any((probs < 0) | (probs > 1)) or not np.all(np.isfinite(probs)):
            raise ValueError("probabilities must lie in [0, 1]")
        if np.any((actions < 0) | (actions >= probs.shape[1])):
            raise ValueError("bot_action out of range")
        if self.student_id < 0:
            raise ValueError("student_id must be nonnegative")
        actions.setflags(write=False)
        probs.setflags(write=False)
        object.__setattr__(self, "actions", actions)
        object.__setattr__(self, "probs", probs)

    def __len__(self):
        return self.probs.shape[0]

    @property
    def num_constructs(self) -> int:
        return self.probs.shape[1]

    def rows(self) -> np.ndarray:
        """[T, n+1] matrix with the bot action in column 0."""
        return np.column_stack([self.actions.astype(np.float64), self.probs])

    def prefix(self, length: int) -> "Trajectory":
        return Trajectory(self.student_id, self.actions[:length], self.probs[:length])


@dataclass(frozen=True)
class SyntheticDataset:
    trajectories: tuple[Trajectory, ...]

    def __post_init__(self):
        trajs = tuple(self.trajectories)
        if not trajs:
            raise ValueError("dataset must contain at least one trajectory")
        n = trajs[0].num_constructs
        if any(t.num_constructs != n for t in trajs):
            raise ValueError("all trajectories must share the construct count")
        object.__setattr__(self, "trajectories", trajs)

    @property
    def num_constructs(self) -> int:
        return self.trajectories[0].num_constructs

    @property
    def num_rows(self) -> int:
        return sum(len(t) for t in self.trajectories)

    def __len__(self):
        return len(self.trajectories)

    def __iter__(self):
        return iter(self.trajectories)

    def __eq__(self, other):
        if not isinstance(other, SyntheticDataset) or len(self) != len(other):
            return NotImplemented if not isinstance(other, SyntheticDataset) else False
        return all(
            a.student_id == b.student_id
            and np.array_equal(a.actions, b.actions)
            and np.array_equal(a.probs, b.probs)
            for a, b in zip(self, other)
        )


@dataclass(frozen=True)
class CateQuery:
    """A task-2 query: conditioning history plus intervention/reference bot actions.

    ``conditioning`` is [L+1, n+1] with the bot action in column 0.
    ``target`` is a construct index (variable ``target + 1`` in the mask).
    """

    conditioning: np.ndarray
    intervention: int
    reference: int
    target: int
    effect_time: int = EFFECT_TIME

    def __post_init__(self):
        cond = np.asarray(self.conditioning, dtype=np.float64)
        if cond.ndim != 2 or cond.shape[1] < 2 or cond.shape[0] < 1:
            raise ValueError(f"conditioning must be [L+1, n+1], got {cond.shape}")
        n = cond.shape[1] - 1
        for name in ("intervention", "reference", "target"):
            v = getattr(self, name)
            if not 0 <= int(v) < n:
                raise ValueError(f"{name}={v} outside [0, {n - 1}]")
            object.__setattr__(self, name, int(v))
        if self.intervention == self.reference:
            raise ValueError("intervention and reference must differ")
        if self.effect_time < 0:
            raise ValueError("effect_time must be nonnegative")
        cond.setflags(write=False)
        object.__setattr__(self, "conditioning", cond)

    @property
    def num_constructs(self) -> int:
        return self.conditioning.shape[1] - 1

    @property
    def conditioning_length(self) -> int:
        # row count minus one: the first row is time 0
        return self.conditioning.shape[0] - 1

    def intervention_vector(self) -> np.ndarray:
        v = np.full((1, self.num_constructs + 1), np.nan)
        v[0, 0] = self.intervention
        return v

    def reference_vector(self) -> np.ndarray:
        v = np.full((1, self.num_constructs + 1), np.nan)
        v[0, 0] = self.reference
        return v

    def effect_mask(self) -> np.ndarray:
        mask = np.zeros((max(3, self.effect_time + 1), self.num_constructs + 1), dtype=bool)
        mask[self.effect_time, self.target + 1] = True
        return mask

    def swapped(self) -> "CateQuery":
        return CateQuery(self.conditioning, self.reference, self.intervention, self.target, self.effect_time)

    def __eq__(self, other):
        if not isinstance(other, CateQuery):
            return NotImplemented
        return (
            np.array_equal(self.conditioning, other.conditioning)
            and (self.intervention, self.reference, self.target, self.effect_time)
            == (other.intervention, other.reference, other.target, other.effect_time)
        )

    def __hash__(self):
        return hash((self.conditioning.tobytes(), self.intervention, self.reference, self.target, self.effect_time))


@dataclass(frozen=True)
class CateResult:
    dataset_index: int
    query_index: int
    value: float

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise ValueError("CATE value must be finite")


def aggregate(graph: TemporalGraph, threshold: float = DEFAULT_THRESHOLD) -> AggregatedGraph:
    """Logical-or of ``|w| > threshold`` over all lags, bot variable cropped."""
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    block = np.abs(graph.weights[:, 1:, 1:]) > threshold
    adj = block.any(axis=0)
    np.fill_diagonal(adj, False)
    return AggregatedGraph(adj)


def relation_category(adj: AggregatedGraph | np.ndarray, i: int, j: int) -> RelationCategory:
    a = adj.adj if isinstance(adj, AggregatedGraph) else np.asarray(adj)
    n = a.shape[0]
    if not (0 <= i < n and 0 <= j < n):
        raise IndexError(f"pair ({i}, {j}) out of range for n={n}")
    if i >= j:
        raise ValueError("relation_category requires i < j")
    return RelationCategory(int(bool(a[i, j])) + 2 * int(bool(a[j, i])))


def relation_categories(adj: np.ndarray) -> np.ndarray:
    """Vectorized categories for all pairs; only the strict upper triangle is meaningful."""
    a = np.asarray(adj).astype(np.int8)
    return a + 2 * a.T

"""Competition metrics and submission validation.

Discovery tasks (1, 3) are scored with a four-category relation F1 over
unordered construct pairs; inference tasks (2, 4) with RMSE.
"""
from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import AggregatedGraph, relation_categories
from .dataio import FormatError, SubmissionError, read_npy, unpack_submission

DISCOVERY_TASKS = (1, 3)
INFERENCE_TASKS = (2, 4)
MEMBER_NAMES = {1: "adj_matrix.npy", 2: "cate_estimate.npy", 3: "adj_matrix.npy", 4: "cate_estimate.npy"}


class ScoringError(ValueError):
    pass


# -- edge masks -------------------------------------------------------------


@dataclass(frozen=True)
class EdgeMask:
    """Unordered pairs ``(i, j)``, ``i < j``, over which discovery metrics are summed."""

    n: int
    pairs: frozenset[tuple[int, int]]

    def __post_init__(self):
        norm = set()
        for i, j in self.pairs:
            i, j = int(i), int(j)
            if i == j:
                raise ScoringError(f"self-pair ({i}, {i}) in edge mask")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ScoringError(f"pair ({i}, {j}) out of range for n={self.n}")
            norm.add((min(i, j), max(i, j)))
        object.__setattr__(self, "pairs", frozenset(norm))

    @classmethod
    def all_pairs(cls, n: int) -> "EdgeMask":
        return cls(n, frozenset((i, j) for i in range(n) for j in range(i + 1, n)))

    def matrix(self) -> np.ndarray:
        m = np.zeros((self.n, self.n), dtype=bool)
        for i, j in self.pairs:
            m[i, j] = True
        return m

    @classmethod
    def from_text(cls, text: str, n: int) -> "EdgeMask":
        """One ``i,j`` pair per line; blank lines and ``#`` comments ignored."""
        pairs = []
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            a, b = line.replace(" ", "").split(",")
            pairs.append((int(a), int(b)))
        return cls(n, frozenset(pairs))


def _as_adj(x) -> np.ndarray:
    return x.adj if isinstance(x, AggregatedGraph) else np.asarray(x)


def discovery_counts(submitted, truth, mask: EdgeMask | None = None) -> tuple[int, int, int, int]:
    """(matches on true edges, true edges, matches on submitted edges, submitted edges)."""
    sub, tru = _as_adj(submitted), _as_adj(truth)
    if sub.shape != tru.shape or sub.ndim != 2 or sub.shape[0] != sub.shape[1]:
        raise ScoringError(f"shape mismatch: submitted {sub.shape} vs truth {tru.shape}")
    n = sub.shape[0]
    if mask is None:
        sel = np.triu(np.ones((n, n), dtype=bool), 1)
    else:
        if mask.n != n:
            raise ScoringError(f"mask is for n={mask.n}, matrices have n={n}")
        sel = mask.matrix()
    r = relation_categories(sub != 0)[sel]
    r_hat = relation_categories(tru != 0)[sel]
    same = r == r_hat
    return (
        int(np.sum(same & (r_hat != 0))),
        int(np.sum(r_hat != 0)),
        int(np.sum(same & (r != 0))),
        int(np.sum(r != 0)),
    )


def precision_recall_f1(submitted, truth, mask: EdgeMask | None = None) -> tuple[float, float, float]:
    hit_t, n_t, hit_s, n_s = discovery_counts(submitted, truth, mask)
    recall = hit_t / n_t if n_t else 0.0
    precision = hit_s / n_s if n_s else 0.0
    f1 = 2 * recall * precision / (recall + precision) if recall + precision > 0 else 0.0
    return precision, recall, f1


def f1_discovery(submitted, truth, mask: EdgeMask | None = None) -> float:
    """Relation-category F1 over pairs ``i < j`` (0/0 counts as 0)."""
    return precision_recall_f1(submitted, truth, mask)[2]


def per_dataset_f1(submission: np.ndarray, truths: np.ndarray, mask: EdgeMask | None = None) -> list[float]:
    """F1 per dataset; a [D, s, n, n] submission averages over its ``s`` samples."""
    sub = np.asarray(submission)
    tru = np.asarray(truths)
    if tru.ndim != 3:
        raise ScoringError(f"truths must be [D, n, n], got {tru.shape}")
    if sub.ndim == 3:
        sub = sub[:, None]
    if sub.ndim != 4 or sub.shape[0] != tru.shape[0] or sub.shape[2:] != tru.shape[1:]:
        raise ScoringError(f"submission shape {np.shape(submission)} incompatible with truths {tru.shape}")
    return [
        float(np.mean([f1_discovery(sample, tru[d], mask) for sample in sub[d]]))
        for d in range(tru.shape[0])
    ]


def f1_mean(submission: np.ndarray, truths: np.ndarray, mask: EdgeMask | None = None) -> float:
    return float(np.mean(per_dataset_f1(submission, truths, mask)))


# -- RMSE -------------------------------------------------------------------


def _check_cate(estimates, truths, ndim):
    est = np.asarray(estimates, dtype=np.float64)
    tru = np.asarray(truths, dtype=np.float64)
    if est.shape != tru.shape or est.ndim != ndim:
        raise ScoringError(f"shape mismatch: estimates {est.shape} vs truths {tru.shape}")
    if not np.all(np.isfinite(est)):
        raise ScoringError("estimates contain missing or non-finite values")
    if not np.all(np.isfinite(tru)):
        raise ScoringError("truths contain non-finite values")
    return est, tru


def per_dataset_rmse(estimates, truths) -> list[float]:
    est, tru = _check_cate(estimates, truths, 2)
    return [float(np.sqrt(np.mean((est[d] - tru[d]) ** 2))) for d in range(est.shape[0])]


def rmse_task2(estimates, truths) -> float:
    """Root of the per-dataset mean square error, then averaged over datasets."""
    return float(np.mean(per_dataset_rmse(estimates, truths)))


def rmse_task4(estimates, truths) -> float:
    est, tru = _check_cate(estimates, truths, 1)
    return float(np.sqrt(np.mean((est - tru) ** 2)))


def rank_key(score: float, task: int, timestamp: float = 0.0) -> tuple[float, float]:
    """Ascending sort key: best submission first, earlier timestamp wins ties."""
    if task in DISCOVERY_TASKS:
        return (-float(score), float(timestamp))
    if task in INFERENCE_TASKS:
        return (float(score), float(timestamp))
    raise ScoringError(f"unknown task {task}")


def opaque_rank_token(key: tuple[float, float]) -> str:
    """Order-preserving hex token for a rank key: sorts like the key, hides the number.

    Each float is mapped to its IEEE-754 bits with the usual sign fix-up so
    that unsigned comparison matches numeric comparison.
    """
    parts = []
    for v in key:
        (bits,) = struct.unpack(">Q", struct.pack(">d", float(v) + 0.0))
        bits = bits ^ 0xFFFFFFFFFFFFFFFF if bits >> 63 else bits | (1 << 63)
        parts.append(f"{bits:016x}")
    return "".join(parts)


# -- submission validation --------------------------------------------------


@dataclass(frozen=True)
class ExpectedShape:
    """Dimensions a submission is checked against."""

    datasets: int = 5
    constructs: int = 50
    queries: int = 10

    def allowed(self, task: int) -> list[tuple[int | None, ...]]:
        """Allowed shapes; ``None`` marks the free sample dimension ``s``."""
        d, n, k = self.datasets, self.constructs, self.queries
        if task == 1:
            return [(d, n, n), (d, None, n, n)]
        if task == 2:
            return [(d, k)]
        if task == 3:
            return [(n, n), (None, n, n)]
        if task == 4:
            return [(k,)]
        raise ScoringError(f"unknown task {task}")


def _shape_matches(shape, pattern) -> bool:
    return len(shape) == len(pattern) and all(p is None and s >= 1 or p == s for s, p in zip(shape, pattern))


@dataclass
class ValidationReport:
    ok: bool
    task: int
    errors: list[dict] = field(default_factory=list)
    shape: tuple[int, ...] | None = None
    samples: int | None = None
    array: np.ndarray | None = field(default=None, repr=False)

    @property
    def codes(self) -> list[str]:
        return [e["code"] for e in self.errors]

    @property
    def counts_against_quota(self) -> bool:
        # failed submissions do not use up the daily allowance
        return self.ok


def validate_array(array: np.ndarray, task: int, expected: ExpectedShape) -> ValidationReport:
    report = ValidationReport(ok=False, task=task, shape=tuple(array.shape))
    patterns = expected.allowed(task)
    if not any(_shape_matches(array.shape, p) for p in patterns):
        report.errors.append(
            {"code": "SHAPE_MISMATCH", "message": f"shape {array.shape} not in {patterns}"}
        )
        return report
    if task in DISCOVERY_TASKS:
        if array.dtype.kind not in "biu" or not np.all((array == 0) | (array == 1)):
            report.errors.append({"code": "NOT_BINARY", "message": "adjacency entries must be 0 or 1"})
            return report
        if task == 1 and array.ndim == 4:
            report.samples = array.shape[1]
        elif task == 3 and array.ndim == 3:
            report.samples = array.shape[0]
    else:
        if array.dtype.kind not in "fiu":
            report.errors.append({"code": "CATE_DTYPE", "message": f"dtype {array.dtype} is not numeric"})
            return report
        if not np.all(np.isfinite(array)):
            report.errors.append({"code": "CATE_NAN", "message": "CATE estimates contain NaN or infinite values"})
            return report
    report.ok = True
    report.array = array
    return report


def validate_submission(zip_bytes: bytes, task: int, expected: ExpectedShape | None = None) -> ValidationReport:
    """Check a zipped submission; every failure carries a distinct error code."""
    expected = expected or ExpectedShape()
    if task not in MEMBER_NAMES:
        raise ScoringError(f"unknown task {task}")
    try:
        raw = unpack_submission(zip_bytes, MEMBER_NAMES[task])
    except SubmissionError as exc:
        return ValidationReport(ok=False, task=task, errors=[{"code": exc.code, "message": str(exc)}])
    try:
        array = read_npy(raw)
    except FormatError as exc:
        return ValidationReport(ok=False, task=task, errors=[{"code": "NPY_" + exc.code, "message": str(exc)}])
    return validate_array(array, task, expected)


# -- score reports ----------------------------------------------------------


@dataclass
class ScoreReport:
    task: int
    per_dataset: list[float]
    final: float | None
    redacted: bool = False
    errors: list[dict] = field(default_factory=list)
    rank_key: list[float] | str | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def score_submission(
    zip_bytes: bytes,
    task: int,
    truth: np.ndarray,
    *,
    mask: EdgeMask | None = None,
    redact: bool = False,
    timestamp: float = 0.0,
) -> ScoreReport:
    """Validate then score. ``redact`` hides numbers but keeps the ranking key."""
    truth = np.asarray(truth)
    if task == 1:
        expected = ExpectedShape(datasets=truth.shape[0], constructs=truth.shape[-1])
    elif task == 2:
        expected = ExpectedShape(datasets=truth.shape[0], queries=truth.shape[1])
    elif task == 3:
        expected = ExpectedShape(constructs=truth.shape[-1])
    elif task == 4:
        expected = ExpectedShape(queries=truth.shape[0])
    else:
        raise ScoringError(f"unknown task {task}")
    report = validate_submission(zip_bytes, task, expected)
    if not report.ok:
        return ScoreReport(task=task, per_dataset=[], final=None, redacted=redact, errors=report.errors)
    sub = report.array
    if task == 1:
        per = per_dataset_f1(sub, truth, mask)
    elif task == 3:
        per = per_dataset_f1(sub[None], truth[None], mask)
    elif task == 2:
        per = per_dataset_rmse(sub, truth)
    else:
        per = [rmse_task4(sub, truth)]
    final = float(np.mean(per))
    key = rank_key(final, task, timestamp)
    if redact:
        return ScoreReport(task=task, per_dataset=[], final=None, redacted=True, rank_key=opaque_rank_token(key))
    return ScoreReport(task=task, per_dataset=per, final=final, rank_key=list(key))

"""Randomized invariants of the metrics and the file formats."""
import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import array_shapes, arrays

from edcausal.core import CateQuery, SyntheticDataset, Trajectory
from edcausal.dataio import (
    decode_queries_json,
    decode_train_csv,
    encode_queries_json,
    encode_train_csv,
    pack_submission,
    read_npy,
    unpack_submission,
    write_npy,
)
from edcausal.scoring import f1_discovery, rmse_task2, score_submission
from oracles import brute_force_f1

settings.register_profile("repo", max_examples=60, deadline=None)
settings.load_profile("repo")


def adjacency(n_min=2, n_max=6):
    return st.integers(n_min, n_max).flatmap(
        lambda n: st.tuples(arrays(bool, (n, n)), arrays(bool, (n, n)))
    )


@given(adjacency())
def test_f1_matches_enumeration(pair):
    sub, truth = pair
    assert f1_discovery(sub, truth) == brute_force_f1(sub, truth)


@given(adjacency())
def test_f1_symmetric_under_transpose(pair):
    sub, truth = pair
    f = f1_discovery(sub, truth)
    assert 0.0 <= f <= 1.0
    assert f1_discovery(sub.T, truth.T) == f


@given(adjacency())
def test_f1_ignores_diagonal(pair):
    sub, truth = pair
    s2 = sub.copy()
    np.fill_diagonal(s2, True)
    assert f1_discovery(s2, truth) == f1_discovery(sub, truth)


finite = st.floats(-1e6, 1e6, allow_nan=False, width=64)


@given(st.one_of(
    arrays(np.float64, array_shapes(min_dims=0, max_dims=3, max_side=5), elements=finite),
    arrays(bool, array_shapes(min_dims=1, max_dims=3, max_side=5)),
    arrays(np.int64, array_shapes(min_dims=1, max_dims=2, max_side=5)),
))
def test_npy_round_trip_and_numpy_compat(a):
    buf = write_npy(a)
    back = read_npy(buf)
    assert back.dtype == a.dtype and back.shape == a.shape
    assert np.array_equal(back, a)
    import io
    ref = io.BytesIO()
    np.save(ref, a)
    assert ref.getvalue() == buf


@given(arrays(np.float64, (2, 3), elements=finite))
def test_zip_round_trip(a):
    assert np.array_equal(read_npy(unpack_submission(pack_submission(a, "cate_estimate.npy"), "cate_estimate.npy")), a)


probs = st.floats(1e-9, 1 - 1e-9, allow_nan=False)


@st.composite
def datasets(draw):
    n = draw(st.integers(1, 4))
    trajs = []
    for sid in draw(st.lists(st.integers(0, 10**6), min_size=1, max_size=3, unique=True)):
        t = draw(st.integers(1, 5))
        acts = draw(arrays(np.int64, t, elements=st.integers(0, n - 1)))
        p = draw(arrays(np.float64, (t, n), elements=probs))
        trajs.append(Trajectory(sid, acts, p))
    return SyntheticDataset(tuple(trajs))


@given(datasets())
def test_train_csv_round_trip(ds):
    back = decode_train_csv(encode_train_csv(ds))
    assert back == ds


@st.composite
def queries(draw):
    n = draw(st.integers(2, 5))
    rows = draw(st.integers(1, 6))
    cond = draw(arrays(np.float64, (rows, n + 1), elements=probs))
    cond[:, 0] = draw(arrays(np.int64, rows, elements=st.integers(0, n - 1)))
    ci, cr = draw(st.lists(st.integers(0, n - 1), min_size=2, max_size=2, unique=True))
    return CateQuery(cond, ci, cr, draw(st.integers(0, n - 1)), effect_time=draw(st.integers(0, 3)))


@given(st.lists(queries(), min_size=1, max_size=3))
def test_query_json_round_trip(qs):
    assert decode_queries_json(encode_queries_json(qs)) == qs


@given(arrays(np.float64, (3, 4), elements=st.floats(-5, 5)), st.floats(-3, 3))
def test_rmse_uniform_offset(truth, delta):
    assert abs(rmse_task2(truth + delta, truth) - abs(delta)) < 1e-9


@given(adjacency(3, 3))
def test_scoring_is_pure(pair):
    sub, truth = pair
    z = pack_submission(sub, "adj_matrix.npy")
    t0 = truth.copy()
    a = score_submission(z, 3, truth)
    b = score_submission(z, 3, truth)
    assert a == b and np.array_equal(truth, t0)

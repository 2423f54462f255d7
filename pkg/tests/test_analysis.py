import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
import hypothesis.extra.numpy as hnp

from pjrm.analysis import (analyze_pair, compute_metrics, data_residual, pearson, robust_clip, time_lapse_mean,
                           time_lapse_std)

finite = st.floats(-1e3, 1e3, allow_nan=False)


def stacks(S_min=1):
    return st.tuples(st.integers(S_min, 6), st.integers(1, 5), st.integers(1, 5)).flatmap(
        lambda sh: st.tuples(hnp.arrays(np.float64, sh, elements=finite), hnp.arrays(np.float64, sh, elements=finite)))


@given(stacks())
@settings(max_examples=50, deadline=None)
def test_mean_equals_loop_oracle(pair):
    a, b = pair
    S, nz, nx = a.shape
    expect = np.zeros((nz, nx))
    for i in range(nz):
        for j in range(nx):
            sa = sb = 0.0
            for s in range(S):
                sa += a[s, i, j]
                sb += b[s, i, j]
            expect[i, j] = sb / S - sa / S
    np.testing.assert_allclose(time_lapse_mean(a, b), expect, rtol=1e-12, atol=1e-9)


@given(stacks(S_min=2))
@settings(max_examples=50, deadline=None)
def test_std_equals_two_pass_oracle(pair):
    a, b = pair
    S = a.shape[0]
    d = b - a
    mean = sum(d[s] for s in range(S)) / S
    var = sum((d[s] - mean) ** 2 for s in range(S)) / S
    got = time_lapse_std(a, b)
    assert np.all(got >= 0)
    np.testing.assert_allclose(got, np.sqrt(var), atol=1e-6)


def test_trivial_cases():
    a = np.random.default_rng(0).normal(size=(4, 3, 2))
    assert np.all(time_lapse_mean(a, a) == 0)
    assert np.all(time_lapse_std(a, a + 1.5) < 1e-12)
    np.testing.assert_array_equal(time_lapse_mean(a[:1], a[1:2]), a[1] - a[0])
    two_a, two_b = a[:2].copy(), a[:2].copy()
    two_b[0, 2, 0] += 1.4
    assert time_lapse_std(two_a, two_b)[2, 0] == pytest.approx(0.7)


def test_shape_errors():
    a = np.zeros((3, 2, 2))
    with pytest.raises(ValueError):
        time_lapse_mean(a, np.zeros((4, 2, 2)))
    with pytest.raises(ValueError):
        time_lapse_std(a[:1], a[:1])
    with pytest.raises(ValueError):
        time_lapse_mean(np.zeros((2, 2)), np.zeros((2, 2)))


def test_metrics_trivial_values():
    rng = np.random.default_rng(1)
    ta, tb = rng.normal(size=(16, 8)), rng.normal(size=(16, 8))
    mask = rng.random((16, 8)) > 0.5
    m = compute_metrics(tb - ta, rng.random((16, 8)), ta, tb, mask)
    assert m.rmse_timelapse == 0
    md = tb - ta + rng.normal(size=(16, 8))
    m = compute_metrics(md, np.abs(md - (tb - ta)), ta, tb, mask)
    assert m.pearson_r_std_vs_abs_error == pytest.approx(1.0)
    m = compute_metrics(md, np.ones((16, 8)), ta, tb, mask)
    assert m.correlation_degenerate and m.pearson_r_std_vs_abs_error == 0.0


def _reference_metrics(md, sd, ta, tb, mask):
    err = [md[i, j] - (tb[i, j] - ta[i, j]) for i in range(md.shape[0]) for j in range(md.shape[1])]
    s = sd.ravel().tolist()
    m = mask.ravel().tolist()
    n = len(err)
    rmse = (sum(e * e for e in err) / n) ** 0.5
    inside = [v for v, k in zip(s, m) if k]
    outside = [v for v, k in zip(s, m) if not k]
    ae = [abs(e) for e in err]
    ms, me = sum(s) / n, sum(ae) / n
    cov = sum((x - ms) * (y - me) for x, y in zip(s, ae))
    vs = sum((x - ms) ** 2 for x in s)
    ve = sum((y - me) ** 2 for y in ae)
    return rmse, sum(inside) / len(inside), sum(outside) / len(outside), cov / (vs * ve) ** 0.5


@pytest.mark.parametrize("seed", range(5))
def test_metrics_match_independent_reimplementation(seed):
    rng = np.random.default_rng(seed)
    md, ta, tb = (rng.normal(size=(16, 8)) for _ in range(3))
    sd = rng.random((16, 8))
    mask = rng.random((16, 8)) > 0.6
    m = compute_metrics(md, sd, ta, tb, mask, [0.1, 0.2], 800)
    ref = _reference_metrics(md, sd, ta, tb, mask)
    got = (m.rmse_timelapse, m.mean_std_in_plume, m.mean_std_out_plume, m.pearson_r_std_vs_abs_error)
    np.testing.assert_allclose(got, ref, atol=1e-9)
    row = m.as_row()
    assert row["data_residual_2"] == 0.2 and row["forward_op_calls"] == 800


@given(hnp.arrays(np.float64, 30, elements=finite), hnp.arrays(np.float64, 30, elements=finite))
@settings(max_examples=80, deadline=None)
def test_pearson_bounded(a, b):
    r, _ = pearson(a, b)
    assert -1.0 <= r <= 1.0


def test_analyze_pair_consistency_and_residual():
    rng = np.random.default_rng(2)
    a, b = rng.normal(size=(8, 6, 4)), rng.normal(size=(8, 6, 4))
    ta, tb = rng.normal(size=(6, 4)), rng.normal(size=(6, 4))
    res = analyze_pair(a, b, ta, tb, np.ones((6, 4), bool))
    np.testing.assert_allclose(res.error, res.mean_diff - (tb - ta))
    assert res.std_diff.shape == res.mean_diff.shape == (6, 4)

    class Eye:
        def forward(self, x):
            return x
    y = rng.normal(size=(6, 4))
    assert data_residual(Eye(), y, y) == 0.0
    assert data_residual(Eye(), 2 * y, y) == pytest.approx(1.0)


def test_robust_clip_symmetric():
    lo, hi = robust_clip(np.random.default_rng(3).normal(size=10_000))
    assert lo == -hi and hi == pytest.approx(3.0, rel=0.05)
    assert robust_clip(np.zeros(5)) == (-3.0, 3.0)

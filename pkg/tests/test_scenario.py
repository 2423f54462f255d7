import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pjrm.config import RunConfig
from pjrm.kernel import RngState
from pjrm.scenario import (PlumeSchedule, build_layered_background, build_operator, grow_plume, plume_mask,
                           simulate_surveys)


def _schedule(n=6, **kw):
    base = dict(nz=100, nx=50, injection_z=70, injection_x=24.5, radius_z=8, radius_x=8, drift=6.0,
                n_surveys=n, smoothness=3.0)
    base.update(kw)
    return PlumeSchedule(**base)


def test_two_layers_have_one_interface():
    m = build_layered_background(40, 20, 2, RngState(0), undulation=0.0)
    assert len(np.unique(m.background)) == 2
    changes = np.count_nonzero(np.diff(m.background[:, 0]))
    assert changes == 1


@given(seed=st.integers(0, 5000), layers=st.integers(2, 10))
@settings(max_examples=30, deadline=None)
def test_background_within_range(seed, layers):
    m = build_layered_background(60, 30, layers, RngState(seed), (2.0, 6.0))
    assert m.background.min() >= 2.0 and m.background.max() <= 6.0


def test_paper_grid_discretization():
    m = build_layered_background(398, 103, 6, RngState(0))
    assert m.shape == (398, 103)
    assert m.dz_m == pytest.approx(3200.0 / 398)
    paper = RunConfig(grid="paper")
    assert (paper.nz, paper.nx) == (398, 103)


def test_zero_amplitude_plume_is_zero():
    assert np.all(grow_plume(_schedule(amplitude=0.0), 1) == 0)


@pytest.mark.parametrize("smooth", [1.0, 3.0])
def test_plumes_nested_with_growing_mass(smooth):
    sch = _schedule(6, smoothness=smooth)
    plumes = [grow_plume(sch, i) for i in range(1, 7)]
    masses = [abs(p.sum()) for p in plumes]
    for a, b in zip(plumes, plumes[1:]):
        assert np.all((b != 0) | (a == 0))
    assert all(m2 > m1 for m1, m2 in zip(masses, masses[1:]))


def test_first_and_last_survey_shared_across_counts():
    a, b = _schedule(2), _schedule(6)
    np.testing.assert_array_equal(grow_plume(a, 1), grow_plume(b, 1))
    np.testing.assert_array_equal(grow_plume(a, 2), grow_plume(b, 6))


def test_survey_index_out_of_range():
    with pytest.raises(ValueError):
        grow_plume(_schedule(2), 3)
    with pytest.raises(ValueError):
        grow_plume(_schedule(2), 0)


def test_plume_leaving_grid_rejected():
    with pytest.raises(ValueError):
        _schedule(injection_z=95)


def test_mask_nesting_threshold_and_bruteforce():
    sch = _schedule(6)
    masks = [plume_mask(sch, i) for i in range(1, 7)]
    for a, b in zip(masks, masks[1:]):
        assert np.all(b | ~a)
    tight = plume_mask(sch, 6, 0.999)
    assert 0 < tight.sum() < masks[-1].sum() // 10
    anomaly = grow_plume(sch, 6)
    peak = np.abs(anomaly).max()
    count = 0
    for v in anomaly.ravel():
        if abs(v) > 0.05 * peak:
            count += 1
    assert masks[-1].sum() == count


def _simulate(noise, n=2, sch=None, seed=0):
    model = build_layered_background(100, 50, 6, RngState(seed), extent_z_km=0.8)
    op = build_operator(100, 50, model.dz_m)
    sch = sch or _schedule(n)
    return model, op, simulate_surveys(model, sch, op, noise, n, RngState(seed, 2))


def test_identical_anomaly_noise_free_gives_identical_data():
    sch = _schedule(3, t_first=1.0)
    _, _, (truths, surveys) = _simulate(0.0, 3, sch)
    assert np.array_equal(surveys[0].grid, surveys[2].grid)


def test_data_difference_is_linear_in_anomaly():
    model, op, (truths, surveys) = _simulate(0.01)
    _, _, (_, clean) = _simulate(0.0)
    noise_diff = (surveys[1].grid - clean[1].grid) - (surveys[0].grid - clean[0].grid)
    lhs = surveys[1].grid - surveys[0].grid
    rhs = op.forward(truths[1] - truths[0]) + noise_diff
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_six_surveys_strictly_nested_and_deterministic():
    _, _, (t1, s1) = _simulate(0.005, 6)
    _, _, (t2, s2) = _simulate(0.005, 6)
    assert all(np.array_equal(a.grid, b.grid) for a, b in zip(s1, s2))
    supports = [(t - t1[0] + grow_plume(_schedule(6), 1)) != 0 for t in t1]
    sizes = [s.sum() for s in supports]
    assert all(b > a for a, b in zip(sizes, sizes[1:]))


def test_simulate_checks_survey_count():
    model = build_layered_background(100, 50, 6, RngState(0), extent_z_km=0.8)
    op = build_operator(100, 50, model.dz_m)
    with pytest.raises(ValueError):
        simulate_surveys(model, _schedule(2), op, 0.0, 3, RngState(0))

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays


from pvd_crossdiff.flux import FluxSchedule, sample_fluxes, thickness_track

from conftest import BETA_LONG, LEVELS

from importlib.resources import files

DATA = files("pvd_crossdiff") / "data"


def test_constant_samples():
    s = sample_fluxes(FluxSchedule.constant([0.9, 0.8]), 7, 3.5)
    assert s.shape == (2, 7)
    assert np.all(s[0] == 0.9) and np.all(s[1] == 0.8)


def test_piecewise_aligned_breaks():
    phi = FluxSchedule.piecewise(np.tile([66.0, 132.0], (4, 1)), LEVELS)
    s = sample_fluxes(phi, 200, 200.0)
    assert np.allclose(s[:, :66], LEVELS[:, :1], rtol=1e-13)
    assert np.allclose(s[:, 66:132], LEVELS[:, 1:2], rtol=1e-13)
    assert np.allclose(s[:, 132:], LEVELS[:, 2:], rtol=1e-13)


def test_breakpoint_mid_step_is_length_weighted():
    phi = FluxSchedule.piecewise([[2.25, 3.0]], [[1.0, 5.0, 2.0]])
    s = sample_fluxes(phi, 4, 4.0)[0]
    assert s[2] == pytest.approx(0.25 * 1.0 + 0.75 * 5.0, rel=1e-14)
    assert s[3] == pytest.approx(2.0, rel=1e-14)


def test_point_values_left_continuous():
    phi = FluxSchedule.piecewise([[1.0, 2.0]], [[1.0, 5.0, 2.0]])
    assert phi(1.0)[0] == 1.0 and phi(1.5)[0] == 5.0 and phi(2.5)[0] == 2.0


def test_thickness_constant_fluxes():
    dt = 1.0
    s = sample_fluxes(FluxSchedule.constant(BETA_LONG), 2000, 2000.0)
    tr = thickness_track(s, 1.0, dt)
    assert tr.e[-1] == pytest.approx(7801.0, rel=1e-12)
    assert np.allclose(tr.e, 1.0 + 3.9 * tr.times(), rtol=1e-12)


def test_thickness_zero_fluxes():
    tr = thickness_track(np.zeros((3, 10)), 2.5, 0.1)
    assert np.all(tr.e == 2.5) and np.all(tr.ed == 0.0)


def test_reconstruction_target_thickness():
    from pvd_crossdiff.config import parse_config_string

    cfg = parse_config_string((DATA / "fig8.cfg").read_text())
    tr = thickness_track(sample_fluxes(cfg.schedule(), cfg.M, cfg.T), cfg.e0, cfg.dt)
    assert tr.e[-1] == pytest.approx(483.4, abs=0.05)


@pytest.mark.parametrize("kw", [
    dict(kind="constant", beta=[1.0, -0.1]),
    dict(kind="piecewise", breaks=[[2.0, 1.0]], levels=[[1.0, 1.0, 1.0]]),
    dict(kind="piecewise", breaks=[[0.0, 1.0]], levels=[[1.0, 1.0, 1.0]]),
    dict(kind="constant", beta=[1.0, 3.0], bound=2.0),
    dict(kind="spline"),
])
def test_invalid_schedules(kw):
    with pytest.raises(ValueError):
        FluxSchedule(**kw)


def test_negative_sample_rejected():
    with pytest.raises(ValueError):
        thickness_track(np.array([[1.0, -1e-3]]), 1.0, 1.0)


def test_table_length_mismatch():
    with pytest.raises(ValueError):
        sample_fluxes(FluxSchedule.from_table(np.ones((2, 5))), 6, 6.0)


@settings(max_examples=100, deadline=None)
@given(
    st.floats(0.1, 5.0), st.floats(0.1, 5.0),
    arrays(float, 3, elements=st.floats(0.0, 3.0)),
    st.integers(1, 60), st.floats(1.0, 20.0),
)
def test_samples_integrate_the_schedule(t1, gap, levels, M, T):
    phi = FluxSchedule.piecewise([[t1, t1 + gap]], [levels])
    s = sample_fluxes(phi, M, T)
    assert np.all(s >= 0)
    assert s.sum() * T / M == pytest.approx(phi.cumulative(T)[0], rel=1e-12, abs=1e-12)
    tr = thickness_track(s, 1.0, T / M)
    assert np.all(np.diff(tr.e) >= 0)
    assert tr.e[0] == 1.0

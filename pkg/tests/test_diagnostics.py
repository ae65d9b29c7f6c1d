import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pvd_crossdiff import diagnostics as dg
from pvd_crossdiff.errors import DegenerateFit
from pvd_crossdiff.flux import FluxSchedule
from pvd_crossdiff.solver import Grid, simulate

from conftest import BETA_LONG, K4


@pytest.fixture(scope="module")
def stationary():
    fbar = BETA_LONG / BETA_LONG.sum()
    grid = Grid(20)
    v0 = np.repeat(fbar[:, None], grid.Q, axis=1)
    return simulate(v0, FluxSchedule.constant(BETA_LONG), K4, grid, 60, 60.0, 1.0), fbar


def test_stationary_entropy(stationary):
    traj, fbar = stationary
    es = dg.entropy_series(traj)
    assert np.allclose(es.E, np.sum(fbar * np.log(fbar)), rtol=1e-13)
    assert np.all(es.Ebar <= 1e-15)
    assert dg.weighted_entropy_monotone(traj, FluxSchedule.constant(BETA_LONG)).monotone


def test_uniform_entropy():
    fields = np.full((1, 4, 10), 0.25)
    assert dg.entropy_values(fields, 0.1)[0] == pytest.approx(-np.log(4), rel=1e-14)


def test_stationary_fit_is_degenerate(stationary):
    traj, fbar = stationary
    with pytest.raises(DegenerateFit):
        dg.decay_quantities(traj, fbar)


def test_affine_fit_self_test():
    t = np.linspace(0, 10, 50)
    f = dg.affine_fit(t, 2 * t + 3)
    assert f.slope == pytest.approx(2, rel=1e-12)
    assert f.intercept == pytest.approx(3, rel=1e-12)
    assert f.r2 == pytest.approx(1.0, abs=1e-14)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_r2_in_unit_interval(seed):
    rng = np.random.default_rng(seed)
    t = np.arange(30.0)
    assert 0.0 <= dg.affine_fit(t, rng.normal(size=30)).r2 <= 1.0


def test_mean_fraction_formula():
    assert dg.mean_fraction_exact(10, 0.25, 1.7, 3.9, 1.0) == pytest.approx(0.43125, rel=1e-14)
    assert dg.mean_fraction_exact(0, 0.25, 1.7, 3.9, 1.0) == 0.25
    assert dg.mean_fraction_exact(1e15, 0.25, 1.7, 3.9, 1.0) == pytest.approx(1.7 / 3.9)


def test_mean_fraction_observed():
    traj = type("T", (), {})()
    traj.fields = np.zeros((2, 2, 5))
    traj.fields[1, 0] = 0.3
    assert dg.mean_fraction_observed(traj, 0, 1) == pytest.approx(0.3)
    assert dg.mean_fraction_observed(traj, 1, 1) == 0.0


def test_csiszar_kullback_two_cells():
    field = np.array([[0.8, 0.2], [0.2, 0.8]])
    lhs, rhs = dg.csiszar_kullback_terms(field, 0.5)
    # with cell weights the L1 gap is 0.5 * (0.3 + 0.3)
    assert lhs[1] == pytest.approx(0.09, rel=1e-14)
    assert rhs[1] == pytest.approx(0.2 * np.log(0.4) + 0.8 * np.log(1.6), rel=1e-14)
    assert lhs[1] <= rhs[1]


def test_csiszar_kullback_constant_field():
    lhs, rhs = dg.csiszar_kullback_terms(np.full((3, 8), 1 / 3), 1 / 8)
    assert np.allclose(lhs, 0, atol=1e-30) and np.allclose(rhs, 0, atol=1e-15)


def test_monotone_self_test():
    s = np.array([5.0, 4.0, 3.0, 3.5, 2.0])
    rep = dg.check_nonincreasing(s)
    assert not rep.monotone
    assert rep.index == 3
    assert rep.max_violation == pytest.approx(0.5 - 1e-8 * 4.0)
    assert dg.check_nonincreasing([3.0, 3.0 + 1e-9, 2.0]).monotone


def test_weighted_rejects_piecewise(deposit_run):
    traj, phi = deposit_run
    with pytest.raises(ValueError):
        dg.weighted_entropy_monotone(traj, phi)


def test_simplex_audit():
    good = np.full((2, 3, 4), 1 / 3)
    assert dg.simplex_audit(good) <= 2.3e-16
    bad = good.copy()
    bad[1, 0, 2] = -1e-3
    assert dg.simplex_audit(bad) >= 1e-3


def test_longtime_run_observables(longtime_run):
    traj, phi = longtime_run
    fbar = dg.equilibrium(phi.beta)
    es = dg.entropy_series(traj)
    assert np.all(es.Ebar >= 0)
    assert np.all(np.diff(es.Ebar[10:]) < 0)
    assert np.all(es.E >= -np.log(4) - 1e-14) and np.all(es.E <= 0)
    assert dg.weighted_entropy_monotone(traj, phi, form="discrete").monotone
    assert dg.csiszar_kullback_gap(traj).min() >= -1e-12
    rep = dg.decay_quantities(traj, fbar)
    assert rep.window == (1000.0, 2000.0)
    assert rep.gamma.slope > 0 and rep.eta.slope > 0

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import solve_banded

from pvd_crossdiff.errors import DegenerateCell, NonConvergence
from pvd_crossdiff.flux import FluxSchedule
from pvd_crossdiff.solver import (Grid, NewtonConfig, Scheme, assemble_jacobian,
                                  assemble_residual, discretize_initial, newton_step_solve,
                                  project_simplex, simulate)

from conftest import K4, LEVELS, W_DEPOSIT, W_LONG


def random_field(rng, b, Q, floor=0.05):
    v = rng.uniform(floor, 1.0, size=(b, Q))
    return v / v.sum(axis=0)


def reference_residual(V, Vp, K, e, ed, phi, grid, dt):
    """Row-by-row evaluation of the implicit step, written independently of the kernels."""
    b, Q = V.shape
    dy = grid.dy
    y = grid.y
    R = np.zeros((Q, b))
    for q in range(Q):
        for i in range(b):
            if 0 < q < Q - 1:
                diff = 0.0
                for j in range(b):
                    lap_i = V[i, q + 1] + V[i, q - 1] - 2 * V[i, q]
                    lap_j = V[j, q + 1] + V[j, q - 1] - 2 * V[j, q]
                    diff += K[i, j] * (V[j, q] * lap_i - V[i, q] * lap_j)
                R[q, i] = ((V[i, q] - Vp[i, q]) / dt
                           - ed / e * y[q] * (V[i, q + 1] - V[i, q]) / dy
                           - diff / (e * e * dy * dy))
            else:
                nb = 1 if q == 0 else Q - 2
                flux = 0.0
                for j in range(b):
                    flux += K[i, j] * (V[j, q] * (V[i, nb] - V[i, q])
                                       - V[i, q] * (V[j, nb] - V[j, q]))
                R[q, i] = flux / (e * dy)
                if q == Q - 1:
                    R[q, i] -= ed * V[i, q] - phi[i]
        if q in (0, Q - 1):
            R[q, 0] += V[:, q].sum() - 1.0
    return R.ravel()


# -- assembly --------------------------------------------------------------------

def test_fixed_point_residual_vanishes():
    beta = np.array([0.9, 0.8, 1.7, 0.5])
    fbar = beta / beta.sum()
    grid = Grid(20)
    V = np.repeat(fbar[:, None], grid.Q, axis=1)
    R = assemble_residual(V, V, K4, 5.0, beta.sum(), beta, grid, 1.0)
    assert np.max(np.abs(R)) <= 1e-14


def test_residual_matches_reference():
    rng = np.random.default_rng(1)
    grid = Grid(12)
    V, Vp = random_field(rng, 4, 12), random_field(rng, 4, 12)
    phi = rng.uniform(0, 2, 4)
    args = (K4, 3.0, 1.7, phi, grid, 0.5)
    R = assemble_residual(V, Vp, *args)
    ref = reference_residual(V, Vp, *args)
    assert np.max(np.abs(R - ref)) <= 1e-13 * max(1.0, np.abs(ref).max())


def test_zero_flux_rows_have_no_drift():
    rng = np.random.default_rng(2)
    grid = Grid(8)
    V = random_field(rng, 3, 8)
    K = np.array([[0, 1, 2], [1, 0, 3], [2, 3, 0.0]])
    R0 = assemble_residual(V, V, K, 2.0, 0.0, np.zeros(3), grid, 1.0)
    ref = reference_residual(V, V, K, 2.0, 0.0, np.zeros(3), grid, 1.0)
    assert np.allclose(R0, ref, atol=1e-13)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_jacobian_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    b, Q = 4, 5
    grid = Grid(Q)
    V, Vp = random_field(rng, b, Q), random_field(rng, b, Q)
    args = (Vp, K4, rng.uniform(1, 5), rng.uniform(0, 4), rng.uniform(0, 2, b), grid,
            rng.uniform(0.1, 2))
    J = assemble_jacobian(V, *args).toarray()
    x = V.T.ravel()
    h = 1e-6
    fd = np.empty_like(J)
    for k in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp[k] += h
        xm[k] -= h
        fd[:, k] = (assemble_residual(xp.reshape(Q, b).T, *args)
                    - assemble_residual(xm.reshape(Q, b).T, *args)) / (2 * h)
    nz = np.abs(J) > 1e-8 * np.abs(J).max()
    rel = np.abs(J[nz] - fd[nz]) / np.abs(J[nz])
    assert rel.max() <= 1e-6
    assert np.max(np.abs(fd[~nz])) <= 1e-6 * np.abs(J).max()


def test_jacobian_is_block_tridiagonal():
    rng = np.random.default_rng(3)
    b, Q = 3, 7
    V = random_field(rng, b, Q)
    K = np.array([[0, 1, 2], [1, 0, 3], [2, 3, 0.0]])
    J = assemble_jacobian(V, V, K, 2.0, 1.0, np.ones(b), Grid(Q), 1.0).toarray()
    rows, cols = np.nonzero(J)
    assert np.all(np.abs(rows // b - cols // b) <= 1)


# -- Newton and projection -----------------------------------------------------

def test_newton_fixed_point_needs_no_iterations():
    beta = np.array([0.9, 0.8, 1.7, 0.5])
    grid = Grid(30)
    V = np.repeat((beta / beta.sum())[:, None], grid.Q, axis=1)
    Vt, stats = newton_step_solve(V, K4, 4.9, 3.9, beta, grid, 1.0)
    assert stats.iterations <= 1
    assert np.allclose(Vt, V, atol=1e-13)


def test_newton_one_deposition_step():
    grid = Grid(100)
    v0 = discretize_initial(W_DEPOSIT, grid)
    phi = LEVELS[:, 0]
    Vt, stats = newton_step_solve(v0, K4, 1.0 + phi.sum(), phi.sum(), phi, grid, 1.0)
    assert stats.iterations <= 10
    assert stats.residual <= 1e-10


def test_newton_reports_nonconvergence():
    grid = Grid(50)
    v0 = discretize_initial(W_DEPOSIT, grid)
    phi = LEVELS[:, 0]
    with pytest.raises(NonConvergence) as info:
        newton_step_solve(v0, K4, 1.0 + phi.sum(), phi.sum(), phi, grid, 1.0,
                          NewtonConfig(residual_tol=1e-30, max_iter=1, step_tol=0.0))
    assert info.value.residual > 0


def test_projection_examples():
    v = project_simplex(np.array([[0.5], [0.6], [-0.1], [0.2]]))[:, 0]
    assert np.allclose(v, np.array([0.5, 0.6, 0.0, 0.2]) / 1.3, rtol=1e-15)
    assert np.array_equal(project_simplex(np.array([[2.0], [0], [0], [0]]))[:, 0], [1, 0, 0, 0])


def test_projection_degenerate_cell():
    with pytest.raises(DegenerateCell) as info:
        project_simplex(np.array([[0.5, -1.0], [0.5, 0.0]]))
    assert info.value.cell == 2


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_projection_invariants(seed):
    rng = np.random.default_rng(seed)
    vt = rng.normal(0.3, 0.5, size=(4, 9))
    vt[0] = np.abs(vt[0]) + 1e-3
    v = project_simplex(vt)
    assert np.all(v >= 0)
    assert np.max(np.abs(v.sum(axis=0) - 1)) <= 1e-14
    assert np.allclose(project_simplex(v), v, atol=1e-16, rtol=1e-15)


def test_discretize_initial():
    grid = Grid(6)  # second cell centre at y = 0.25
    v = discretize_initial(W_DEPOSIT, grid)
    assert np.allclose(v[:, 1], [0.2, 0.4, 0.4, 0.0], rtol=1e-14)
    assert np.all(v[3] == 0)
    u = discretize_initial([lambda y: 1.0] * 3, grid)
    assert np.allclose(u, 1 / 3)
    with pytest.raises(DegenerateCell):
        discretize_initial([lambda y: 0 * y, lambda y: 0 * y], grid)


# -- whole runs ------------------------------------------------------------------

def test_fixed_point_preserved():
    beta = np.array([0.9, 0.8, 1.7, 0.5])
    fbar = beta / beta.sum()
    grid = Grid(100)
    v0 = np.repeat(fbar[:, None], grid.Q, axis=1)
    tr = simulate(v0, FluxSchedule.constant(beta), K4, grid, 200, 200.0, 1.0)
    assert np.max(np.abs(tr.fields - fbar[None, :, None])) <= 1e-12
    assert np.allclose(tr.thickness.e, 1 + 3.9 * tr.t, rtol=1e-12)


def scalar_step(v, K, e, ed, phi, grid, dt):
    """Implicit advection-diffusion step for one species with the same boundary rows."""
    Q, dy, y = grid.Q, grid.dy, grid.y
    c = K / (e * e * dy * dy)
    adv = ed / e * y / dy
    ab = np.zeros((3, Q))  # upper, diagonal, lower
    rhs = v / dt
    ab[1, 1:-1] = 1 / dt + adv[1:-1] + 2 * c
    ab[0, 2:] = -adv[1:-1] - c
    ab[2, :-2] = -c
    cb = K / (e * dy)
    ab[1, 0], ab[0, 1], rhs[0] = -cb, cb, 0.0
    ab[1, -1], ab[2, -2], rhs[-1] = -cb - ed, cb, -phi
    return solve_banded((1, 1), ab, rhs)


def test_decoupling_oracle():
    Kc = 0.08
    K = np.full((4, 4), Kc)
    np.fill_diagonal(K, 0.0)
    grid = Grid(60)
    v0 = discretize_initial(W_LONG, grid)
    beta = np.array([0.9, 0.8, 1.7, 0.5])
    M, T = 40, 40.0
    tr = simulate(v0, FluxSchedule.constant(beta), K, grid, M, T, 1.0)
    th = tr.thickness
    v = v0.copy()
    for m in range(1, M + 1):
        e, ed = th.e[m], th.ed[m - 1]
        v = np.array([scalar_step(v[i].copy(), Kc, e, ed, beta[i], grid, T / M)
                      for i in range(4)])
        assert np.max(np.abs(v - tr.fields[m])) <= 1e-8


def test_mass_drift_shrinks_with_dy():
    drifts = []
    for Q in (25, 50, 100):
        grid = Grid(Q)
        v0 = discretize_initial(W_LONG, grid)
        tr = simulate(v0, FluxSchedule.constant(np.zeros(4)), K4, grid, 50, 5.0, 1.0)
        mass = tr.fields.sum(axis=2) * grid.dy
        drifts.append(np.abs(mass - mass[0]).max())
    drifts = np.array(drifts)
    assert np.all(drifts * np.array([25, 50, 100]) <= 1.0)
    assert np.all(np.diff(drifts) < 0)


def test_zero_flux_keeps_thickness():
    grid = Grid(20)
    v0 = discretize_initial(W_LONG, grid)
    tr = simulate(v0, FluxSchedule.constant(np.zeros(4)), K4, grid, 5, 5.0, 2.0)
    assert np.all(tr.thickness.e == 2.0)


def test_deposition_run_large_steps(deposit_run):
    phi = FluxSchedule.piecewise(np.tile([66.0, 132.0], (4, 1)), LEVELS)
    grid = Grid(100)
    big = simulate(discretize_initial(W_DEPOSIT, grid), phi, K4, grid, 20, 200.0, 1.0)
    small, _ = deposit_run
    for tr in (big, small):
        assert tr.substeps.sum() == 0
        assert np.all(tr.fields >= 0)
        assert np.max(np.abs(tr.fields.sum(axis=1) - 1)) <= 1e-14
    assert np.array_equal(small.fields[0], discretize_initial(W_DEPOSIT, grid))
    # interval-averaged fluxes deposit the same total at every common time
    assert big.thickness.e[-1] == pytest.approx(small.thickness.e[-1], rel=1e-13)


def test_printed_stencil_is_available():
    grid = Grid(10)
    v0 = discretize_initial(W_LONG, grid)
    R = assemble_residual(v0, v0, K4, 1.0, 0.0, np.zeros(4), grid, 1.0, Scheme("printed"))
    Rc = assemble_residual(v0, v0, K4, 1.0, 0.0, np.zeros(4), grid, 1.0)
    assert R.shape == Rc.shape and not np.allclose(R, Rc)


def test_inconsistent_shapes_rejected():
    grid = Grid(10)
    with pytest.raises(ValueError):
        simulate(np.full((3, 10), 1 / 3), FluxSchedule.constant(np.ones(4)), K4, grid, 2, 2.0, 1.0)
    with pytest.raises(ValueError):
        simulate(np.full((4, 10), 0.3), FluxSchedule.constant(np.ones(4)), K4, grid, 2, 2.0, 1.0)

"""Fully implicit finite-difference scheme on the rescaled unit domain.

Every step solves the coupled nonlinear system for all ``n + 1`` species
with Newton's method (initial guess: the previous field), then projects
each cell back onto the simplex.  Fields are arrays of shape ``(n+1, Q)``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.linalg import lapack
from scipy import sparse

from ._backend import kernels
from .errors import DegenerateCell, NonConvergence, SingularJacobian
from .flux import FluxSchedule, ThicknessTrack, sample_fluxes, thickness_track
from .model import check_kmatrix

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Grid:
    Q: int

    def __post_init__(self):
        if self.Q < 3:
            raise ValueError("the interior stencil needs Q >= 3")

    @property
    def dy(self) -> float:
        return 1.0 / self.Q

    @property
    def y(self) -> np.ndarray:
        return (np.arange(1, self.Q + 1) - 0.5) * self.dy


@dataclass(frozen=True)
class NewtonConfig:
    residual_tol: float = 1e-10
    max_iter: int = 50
    # accept once the update itself is at round-off level (fine grids put
    # the attainable residual above residual_tol)
    step_tol: float = 1e-13
    damping: float = 1.0
    max_halvings: int = 12

    def __post_init__(self):
        if self.residual_tol <= 0 or self.max_iter < 1:
            raise ValueError("need residual_tol > 0 and max_iter >= 1")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")


@dataclass(frozen=True)
class Scheme:
    """Discretization switches.

    ``stencil``
        ``"corrected"`` uses the second difference of species ``i`` over
        ``dy**2`` in the interior; ``"printed"`` keeps the literal
        ``-2 v_j`` term and the ``2 dy**2`` denominator.
    ``inflow_sign``
        ``-1`` makes the last-cell row discretize
        ``(1/e) A dv/dy + e' v = phi``, so each species gains exactly its
        injected flux; ``+1`` is the literal row with the one-sided
        difference taken inward, which flips the sign of the diffusive flux
        and does not conserve mass.
    ``closure``
        Append ``sum_i v_i = 1`` to the species-0 row of both boundary
        cells, whose rows are otherwise linearly dependent.
    """

    stencil: str = "corrected"
    inflow_sign: float = -1.0
    closure: bool = True

    def __post_init__(self):
        if self.stencil not in ("corrected", "printed"):
            raise ValueError(f"unknown stencil {self.stencil!r}")
        if self.inflow_sign not in (1.0, -1.0):
            raise ValueError("inflow_sign must be +1 or -1")

    @property
    def variant(self) -> int:
        return 0 if self.stencil == "corrected" else 1


DEFAULT_SCHEME = Scheme()


@lru_cache(maxsize=32)
def _band_layout(Q: int, b: int):
    """Index arrays placing the three block bands into LAPACK band storage."""
    kl = ku = 2 * b - 1
    i, k = np.meshgrid(np.arange(b), np.arange(b), indexing="ij")
    rows, cols = [], []
    for offset in (-1, 0, 1):
        qs = np.arange(Q)
        qs = qs[(qs + offset >= 0) & (qs + offset < Q)]
        r = (qs[:, None, None] * b + i[None]).ravel()
        c = ((qs[:, None, None] + offset) * b + k[None]).ravel()
        rows.append(r)
        cols.append(c)
    return kl, ku, rows, cols


def _band_matrix(lower, diag, upper):
    Q, b, _ = diag.shape
    kl, ku, rows, cols = _band_layout(Q, b)
    ab = np.zeros((2 * kl + ku + 1, Q * b))
    for blocks, r, c in zip((lower[1:], diag, upper[:-1]), rows, cols):
        ab[kl + ku + r - c, c] = blocks.ravel()
    return ab, kl, ku


def _sparse_matrix(lower, diag, upper):
    Q, b, _ = diag.shape
    _, _, rows, cols = _band_layout(Q, b)
    data = np.concatenate([lower[1:].ravel(), diag.ravel(), upper[:-1].ravel()])
    return sparse.csr_matrix(
        (data, (np.concatenate(rows), np.concatenate(cols))), shape=(Q * b, Q * b)
    )


@dataclass
class BandedLU:
    lu: np.ndarray
    piv: np.ndarray
    kl: int
    ku: int

    @classmethod
    def factor(cls, lower, diag, upper):
        ab, kl, ku = _band_matrix(lower, diag, upper)
        lu, piv, info = lapack.dgbtrf(ab, kl, ku)
        if info != 0:
            raise SingularJacobian(f"banded LU failed (info={info})")
        return cls(lu, piv, kl, ku)

    def solve(self, rhs, transpose=False):
        x, info = lapack.dgbtrs(self.lu, self.kl, self.ku, rhs, self.piv,
                                trans=1 if transpose else 0)
        if info != 0:
            raise SingularJacobian(f"banded solve failed (info={info})")
        return x


def _cellmajor(v):
    return np.ascontiguousarray(np.asarray(v, dtype=float).T)


def assemble_residual(vtilde, vprev, K, e_m, ed_m, phi_m, grid: Grid, dt,
                      scheme: Scheme = DEFAULT_SCHEME) -> np.ndarray:
    """Residual of one implicit step, flattened cell-major (``index = q*(n+1) + i``)."""
    R, *_ = kernels.assemble(
        _cellmajor(vtilde), _cellmajor(vprev), np.ascontiguousarray(K, dtype=float),
        float(e_m), float(ed_m), np.ascontiguousarray(phi_m, dtype=float), grid.y,
        grid.dy, float(dt), scheme.variant, scheme.inflow_sign, scheme.closure,
    )
    return R.ravel()


def assemble_jacobian(vtilde, vprev, K, e_m, ed_m, phi_m, grid: Grid, dt,
                      scheme: Scheme = DEFAULT_SCHEME) -> sparse.csr_matrix:
    """Analytic Jacobian of :func:`assemble_residual` as a sparse matrix."""
    _, lower, diag, upper = kernels.assemble(
        _cellmajor(vtilde), _cellmajor(vprev), np.ascontiguousarray(K, dtype=float),
        float(e_m), float(ed_m), np.ascontiguousarray(phi_m, dtype=float), grid.y,
        grid.dy, float(dt), scheme.variant, scheme.inflow_sign, scheme.closure,
    )
    return _sparse_matrix(lower, diag, upper)


@dataclass
class NewtonStats:
    iterations: int
    residual: float
    lu: BandedLU | None = None


def _newton(Vprev, K, e, ed, phi, grid, dt, cfg, scheme, keep_lu=False):
    """Newton iterations in cell-major layout; returns ``(V, stats)``."""
    args = (K, e, ed, phi, grid.y, grid.dy, dt, scheme.variant, scheme.inflow_sign,
            scheme.closure)
    V = Vprev.copy()
    R, lo, di, up = kernels.assemble(V, Vprev, *args)
    r = float(np.max(np.abs(R)))
    it = 0
    while not r <= cfg.residual_tol:
        if it >= cfg.max_iter:
            raise NonConvergence(
                f"Newton did not converge in {cfg.max_iter} iterations (residual {r:.3e})",
                residual=r,
            )
        delta = BandedLU.factor(lo, di, up).solve(R.ravel()).reshape(V.shape)
        if float(np.max(np.abs(delta))) <= cfg.step_tol:
            break
        lam = cfg.damping
        for _ in range(cfg.max_halvings + 1):
            Vn = V - lam * delta
            Rn, lo_n, di_n, up_n = kernels.assemble(Vn, Vprev, *args)
            rn = float(np.max(np.abs(Rn)))
            if rn < r:
                break
            lam *= 0.5
        V, R, lo, di, up, r = Vn, Rn, lo_n, di_n, up_n, rn
        it += 1
        if not np.isfinite(r):
            raise NonConvergence("Newton iterate became non-finite", residual=r)
    lu = BandedLU.factor(lo, di, up) if keep_lu else None
    return V, NewtonStats(it, r, lu)


def newton_step_solve(vprev, K, e_m, ed_m, phi_m, grid: Grid, dt,
                      cfg: NewtonConfig = NewtonConfig(),
                      scheme: Scheme = DEFAULT_SCHEME):
    """Solve one implicit step from ``vprev``; returns the unprojected iterate and stats."""
    V, stats = _newton(
        _cellmajor(vprev), np.ascontiguousarray(K, dtype=float), float(e_m), float(ed_m),
        np.ascontiguousarray(phi_m, dtype=float), grid, float(dt), cfg, scheme,
    )
    return V.T.copy(), stats


def _project_cellmajor(Vt, step=None):
    V, s = kernels.project(np.ascontiguousarray(Vt))
    bad = np.flatnonzero(~(s > 0.0))
    if bad.size:
        raise DegenerateCell(
            f"all positive parts vanish at cell {bad[0] + 1}", cell=int(bad[0]) + 1, step=step
        )
    return V, s


def project_simplex(vtilde) -> np.ndarray:
    """Clip negative parts and renormalize each cell so the fractions sum to one."""
    V, _ = _project_cellmajor(_cellmajor(vtilde))
    return V.T.copy()


def discretize_initial(w, grid: Grid) -> np.ndarray:
    """Normalize the profiles ``w_0..w_n`` at the cell centres."""
    y = grid.y
    W = np.array([np.broadcast_to(np.asarray(f(y), dtype=float), y.shape) for f in w])
    if np.any(W < 0):
        raise ValueError("initial profiles must be nonnegative")
    den = W.sum(axis=0)
    bad = np.flatnonzero(~(den > 0.0))
    if bad.size:
        raise DegenerateCell(f"initial profiles vanish together at cell {bad[0] + 1}",
                             cell=int(bad[0]) + 1)
    return W / den


@dataclass
class StepRecord:
    """One elementary implicit solve, kept for the adjoint sweep.

    The solve runs from ``Vprev`` over ``dt`` at thickness
    ``e = e[m-1] + frac * Dt * ed[m-1]``.
    """

    m: int
    frac: float
    dt: float
    e: float
    Vprev: np.ndarray
    Vtilde: np.ndarray
    sums: np.ndarray
    lu: BandedLU


@dataclass
class Trajectory:
    t: np.ndarray
    fields: np.ndarray  # (M+1, n+1, Q)
    thickness: ThicknessTrack
    samples: np.ndarray  # (n+1, M)
    grid: Grid
    newton_iters: np.ndarray
    newton_residual: np.ndarray
    substeps: np.ndarray
    records: list = field(default_factory=list, repr=False)

    @property
    def n_species(self) -> int:
        return self.fields.shape[1]

    @property
    def final(self) -> np.ndarray:
        return self.fields[-1]


def _advance(Vprev, K, e_prev, ed, phi, grid, Dt, m, cfg, scheme, record):
    """One time step with a single Dt/2 sub-stepping retry on failure."""
    records = []
    try:
        e = e_prev + Dt * ed
        Vt, st = _newton(Vprev, K, e, ed, phi, grid, Dt, cfg, scheme, keep_lu=record)
        V, s = _project_cellmajor(Vt, step=m)
        if record:
            records.append(StepRecord(m, 1.0, Dt, e, Vprev, Vt, s, st.lu))
        return V, st.iterations, st.residual, 0, records
    except (NonConvergence, SingularJacobian) as exc:
        log.warning("step %d failed (%s); retrying with two half steps", m, exc)
    V = Vprev
    iters = 0
    try:
        for frac in (0.5, 1.0):
            e = e_prev + frac * Dt * ed
            Vt, st = _newton(V, K, e, ed, phi, grid, 0.5 * Dt, cfg, scheme, keep_lu=record)
            Vn, s = _project_cellmajor(Vt, step=m)
            if record:
                records.append(StepRecord(m, frac, 0.5 * Dt, e, V, Vt, s, st.lu))
            V = Vn
            iters += st.iterations
    except NonConvergence as exc:
        exc.step = m
        raise
    except SingularJacobian as exc:
        exc.step = m
        raise
    return V, iters, st.residual, 1, records


def simulate_samples(v0, samples, K, grid: Grid, T: float, e0: float,
                     cfg: NewtonConfig = NewtonConfig(), scheme: Scheme = DEFAULT_SCHEME,
                     record: bool = False) -> Trajectory:
    """Run the scheme for explicit per-step flux samples of shape ``(n+1, M)``."""
    K = np.ascontiguousarray(check_kmatrix(K))
    samples = np.asarray(samples, dtype=float)
    b, M = samples.shape
    v0 = np.asarray(v0, dtype=float)
    if v0.shape != (b, grid.Q) or K.shape[0] != b:
        raise ValueError(f"inconsistent shapes: v0 {v0.shape}, K {K.shape}, fluxes {samples.shape}")
    if np.any(v0 < 0) or np.max(np.abs(v0.sum(axis=0) - 1.0)) > 1e-12:
        raise ValueError("v0 must lie on the simplex in every cell")
    Dt = T / M
    track = thickness_track(samples, e0, Dt)
    fields = np.empty((M + 1, b, grid.Q))
    fields[0] = v0
    iters = np.zeros(M, dtype=int)
    resid = np.zeros(M)
    subs = np.zeros(M, dtype=int)
    records = []
    V = _cellmajor(v0)
    for m in range(1, M + 1):
        phi = np.ascontiguousarray(samples[:, m - 1])
        V, iters[m - 1], resid[m - 1], subs[m - 1], recs = _advance(
            V, K, track.e[m - 1], track.ed[m - 1], phi, grid, Dt, m, cfg, scheme, record
        )
        records.extend(recs)
        fields[m] = V.T
    return Trajectory(
        t=Dt * np.arange(M + 1), fields=fields, thickness=track, samples=samples, grid=grid,
        newton_iters=iters, newton_residual=resid, substeps=subs, records=records,
    )


def simulate(v0, phi: FluxSchedule, K, grid: Grid, M: int, T: float, e0: float,
             cfg: NewtonConfig = NewtonConfig(), scheme: Scheme = DEFAULT_SCHEME,
             record: bool = False) -> Trajectory:
    """Simulate the rescaled moving-domain system under a flux schedule."""
    return simulate_samples(v0, sample_fluxes(phi, M, T), K, grid, T, e0, cfg, scheme, record)

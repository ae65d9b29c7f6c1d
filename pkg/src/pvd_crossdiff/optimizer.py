"""Flux optimization: cost, discrete adjoint gradient and projected BFGS.

The control is one nonnegative flux value per species and per time step,
stored as the flattened ``(n+1, M)`` sample table (species-major).  The
gradient is that of the discrete cost, obtained by a backward sweep through
the factored Newton Jacobians kept during the forward run.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ._backend import kernels
from .errors import LineSearchFailure, NonDifferentiablePoint
from .flux import FluxSchedule, sample_fluxes
from .solver import DEFAULT_SCHEME, Grid, NewtonConfig, Scheme, Trajectory, simulate_samples

log = logging.getLogger(__name__)


@dataclass
class OptProblem:
    """Targets and forward-model settings of a flux reconstruction."""

    v_opt: np.ndarray  # (n+1, Q)
    e_opt: float
    T: float
    M: int
    grid: Grid
    e0: float
    K: np.ndarray
    v0: np.ndarray  # (n+1, Q)
    F: float = np.inf
    eps_J: float = 1e-5
    nu_grad: float = 1e-5
    max_outer: int = 500
    include_species0: bool = False
    newton: NewtonConfig = field(default_factory=NewtonConfig)
    scheme: Scheme = DEFAULT_SCHEME

    def __post_init__(self):
        self.v_opt = np.asarray(self.v_opt, dtype=float)
        self.v0 = np.asarray(self.v0, dtype=float)
        self.K = np.asarray(self.K, dtype=float)
        if self.e_opt <= self.e0:
            raise ValueError("the target thickness must exceed e0")
        if self.v_opt.shape != self.v0.shape or self.v0.shape[1] != self.grid.Q:
            raise ValueError("targets and initial data must both have shape (n+1, Q)")
        if np.any(self.v_opt < 0) or np.max(np.abs(self.v_opt.sum(axis=0) - 1.0)) > 1e-10:
            raise ValueError("target concentrations must lie on the simplex")
        if not self.F > 0:
            raise ValueError("the flux bound F must be positive")

    @property
    def n_species(self) -> int:
        return self.v0.shape[0]

    @property
    def dt(self) -> float:
        return self.T / self.M

    @property
    def size(self) -> int:
        return self.n_species * self.M

    def species_mask(self) -> np.ndarray:
        mask = np.ones(self.n_species, dtype=bool)
        mask[0] = self.include_species0
        return mask

    def samples(self, ctrl) -> np.ndarray:
        ctrl = np.asarray(ctrl, dtype=float)
        if ctrl.shape != (self.size,):
            raise ValueError(f"control must have length (n+1)*M = {self.size}")
        return ctrl.reshape(self.n_species, self.M)

    def control_from(self, phi: FluxSchedule) -> np.ndarray:
        """Flatten the interval averages of a schedule into a control vector."""
        return sample_fluxes(phi, self.M, self.T).ravel()

    def project(self, ctrl) -> np.ndarray:
        return np.clip(ctrl, 0.0, self.F)


@dataclass
class AdjointInfo:
    """Diagnostics of one gradient evaluation."""

    clipped: int  # projection entries sitting on the clip
    active_bounds: int  # control entries on 0 or F
    solves: int

    @property
    def differentiable(self) -> bool:
        return self.clipped == 0 and self.active_bounds == 0


def forward(ctrl, prob: OptProblem, record=False) -> Trajectory:
    return simulate_samples(prob.v0, prob.samples(ctrl), prob.K, prob.grid, prob.T, prob.e0,
                            prob.newton, prob.scheme, record=record)


def _cost_terms(traj: Trajectory, prob: OptProblem):
    de = traj.thickness.e[-1] - prob.e_opt
    diff = (traj.final - prob.v_opt)[prob.species_mask()]
    return de, diff


def cost_of(traj: Trajectory, prob: OptProblem) -> float:
    de, diff = _cost_terms(traj, prob)
    return float(de * de + prob.grid.dy * np.sum(diff * diff))


def cost(ctrl, prob: OptProblem) -> float:
    """``|e(T) - e_opt|^2 + ||v(T) - v_opt||^2`` with a midpoint-rule L2 norm."""
    return cost_of(forward(ctrl, prob), prob)


def adjoint_gradient(traj: Trajectory, prob: OptProblem, strict=False):
    """Gradient of the discrete cost from a trajectory run with ``record=True``.

    Returns ``(grad, info)``.  Where the projection clipped a negative part the
    one-sided derivative zero is used; ``strict`` turns that, or any control
    entry sitting on a bound, into :class:`NonDifferentiablePoint`.
    """
    if not traj.records:
        raise ValueError("the trajectory carries no step records; rerun with record=True")
    grid, sch = prob.grid, prob.scheme
    Dt = prob.dt
    b, M = traj.samples.shape
    ed = traj.thickness.ed
    ctrl = traj.samples.ravel()
    active = int(np.count_nonzero((ctrl <= 0.0) | (ctrl >= prob.F)))

    de, diff = _cost_terms(traj, prob)
    lam = np.zeros((b, grid.Q))
    lam[prob.species_mask()] = 2.0 * grid.dy * diff
    lam = np.ascontiguousarray(lam.T)  # cell-major

    g_phi = np.zeros((b, M))
    g_ed = np.zeros(M)
    g_e_step = np.zeros(M)  # sensitivity to the thickness at the start of step m
    K = np.ascontiguousarray(prob.K)
    clipped = 0
    for rec in reversed(traj.records):
        m = rec.m - 1
        # projection: V = P / sum(P), P = max(Vtilde, 0)
        pos = rec.Vtilde > 0.0
        clipped += int(np.count_nonzero(~pos))
        x = np.maximum(rec.Vtilde, 0.0) / rec.sums[:, None]
        gbar = (lam - np.sum(lam * x, axis=1, keepdims=True)) / rec.sums[:, None]
        gbar = np.where(pos, gbar, 0.0)
        mu = rec.lu.solve(gbar.ravel(), transpose=True).reshape(gbar.shape)
        dRde, dRded = kernels.parameter_derivatives(
            rec.Vtilde, K, rec.e, ed[m], grid.y, grid.dy, sch.variant, sch.inflow_sign
        )
        ge = -float(np.sum(mu * dRde))
        g_ed[m] -= float(np.sum(mu * dRded))
        # rec.e = e[m] + frac * Dt * ed[m]
        g_e_step[m] += ge
        g_ed[m] += rec.frac * Dt * ge
        g_phi[:, m] += sch.inflow_sign * mu[-1]
        lam = np.zeros_like(lam)
        lam[1:-1] = mu[1:-1] / rec.dt

    if strict and (clipped or active):
        raise NonDifferentiablePoint(
            f"derivative is one-sided: {clipped} clipped entries, {active} controls on a bound"
        )
    # e[m] = e0 + Dt * sum_{k<m} ed[k], so step k feeds every later start thickness
    later = np.concatenate([np.cumsum(g_e_step[::-1])[::-1][1:], [0.0]])
    g = g_phi + (g_ed + Dt * later + 2.0 * de * Dt)[None, :]
    return g.ravel(), AdjointInfo(clipped, active, len(traj.records))


def cost_and_gradient(ctrl, prob: OptProblem, strict=False):
    """Return ``(J, grad, info, trajectory)`` from one forward run and one adjoint sweep."""
    traj = forward(ctrl, prob, record=True)
    g, info = adjoint_gradient(traj, prob, strict=strict)
    return cost_of(traj, prob), g, info, traj


def gradient_adjoint(ctrl, prob: OptProblem, strict=False) -> np.ndarray:
    return cost_and_gradient(ctrl, prob, strict=strict)[1]


# ------------------------------------------------------------------ BFGS


@dataclass
class OptReport:
    J_history: list
    grad_norms: list
    steps: list
    control: np.ndarray
    grad_norm: float
    reason: str
    evaluations: int = 0

    @property
    def J(self) -> float:
        return self.J_history[-1]

    @property
    def iterations(self) -> int:
        return len(self.J_history) - 1


def projected_bfgs(fun, grad, x0, lower=0.0, upper=np.inf, eps_J=1e-5, nu_grad=1e-5,
                   max_outer=500, max_halvings=40, c1=1e-4) -> OptReport:
    """Minimize ``fun`` over the box ``[lower, upper]`` with projected BFGS.

    ``fun(x)`` returns the cost and ``grad(x)`` its gradient at the last point
    passed to ``fun`` that was accepted.  The line search backtracks along the
    projected path with quadratic interpolation (each reduction at least
    halves the step) and, once a trial satisfies the Armijo condition, tries
    the minimizer of the interpolating parabola once more.  On a quadratic
    this makes every line search exact.
    """
    def proj(v):
        return np.clip(v, lower, upper)

    x = proj(np.asarray(x0, dtype=float))
    J = fun(x)
    g = grad(x)
    nfev = 1
    H = None
    history, gnorms, steps = [J], [], []

    def pg_norm(x, g):
        return float(np.linalg.norm(proj(x - g) - x))

    reason = "max_outer"
    for it in range(max_outer + 1):
        gn = pg_norm(x, g)
        gnorms.append(gn)
        if J <= eps_J:
            reason = "cost"
            break
        if gn <= nu_grad:
            reason = "gradient"
            break
        if it == max_outer:
            break
        # free variables: not pinned on a bound by the gradient sign
        pinned = ((x <= lower) & (g > 0)) | ((x >= upper) & (g < 0))
        free = ~pinned
        gf = np.where(free, g, 0.0)
        if H is None:
            d = -gf
            lam = min(1.0, 1.0 / max(float(np.max(np.abs(gf))), 1e-300))
        else:
            d = -np.where(free, H @ gf, 0.0)
            lam = 1.0
            if float(g @ d) >= 0.0:
                H = None
                d = -gf
                lam = min(1.0, 1.0 / max(float(np.max(np.abs(gf))), 1e-300))

        best = None
        for k in range(max_halvings + 1):
            xt = proj(x + lam * d)
            Jt = fun(xt)
            nfev += 1
            slope = float(g @ (xt - x))
            if Jt <= J + c1 * slope and Jt < J:
                best = (lam, xt, Jt)
                denom = Jt - J - slope
                if denom > 0:
                    lq = 0.5 * (-slope) / denom * lam
                    if abs(lq - lam) > 1e-3 * lam and 0 < lq <= 100.0 * lam:
                        xq = proj(x + lq * d)
                        Jq = fun(xq)
                        nfev += 1
                        if Jq < Jt and Jq <= J + c1 * float(g @ (xq - x)):
                            best = (lq, xq, Jq)
                break
            denom = Jt - J - slope
            lq = 0.5 * (-slope) / denom * lam if denom > 0 else 0.5 * lam
            lam = float(np.clip(lq, 0.1 * lam, 0.5 * lam))
        if best is None:
            fun(x)  # restore the evaluator's state at the best point
            rep = OptReport(history, gnorms, steps, x.copy(), gn, "line_search", nfev)
            raise LineSearchFailure(
                f"no sufficient decrease after {max_halvings} reductions at iteration {it}",
                report=rep,
            )
        lam, xn, Jn = best
        fun(xn)  # cached unless the interpolation trial moved the evaluator
        gnew = grad(xn)
        s = xn - x
        yv = gnew - g
        sy = float(s @ yv)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(yv):
            if H is None:
                H = np.eye(x.size) * (sy / float(yv @ yv))
            rho = 1.0 / sy
            Hy = H @ yv
            H += (rho * rho * float(yv @ Hy) + rho) * np.outer(s, s) \
                - rho * (np.outer(Hy, s) + np.outer(s, Hy))
        x, g, J = xn, gnew, Jn
        history.append(J)
        steps.append(lam)
    return OptReport(history, gnorms, steps, x, gnorms[-1], reason, nfev)


class _Evaluator:
    """Caches the forward trajectory so the gradient reuses the accepted run."""

    def __init__(self, prob: OptProblem):
        self.prob = prob
        self.key = None
        self.traj = None
        self.J = None
        self.clipped_evals = 0

    def fun(self, x):
        key = x.tobytes()
        if key != self.key:
            self.traj = forward(x, self.prob, record=True)
            self.J = cost_of(self.traj, self.prob)
            self.key = key
        return self.J

    def grad(self, x):
        self.fun(x)
        g, info = adjoint_gradient(self.traj, self.prob)
        if info.clipped:
            self.clipped_evals += 1
        return g


def bfgs_minimize(prob: OptProblem, ctrl0) -> OptReport:
    """Projected BFGS on the flux control with the problem's stopping rules."""
    ev = _Evaluator(prob)
    rep = projected_bfgs(ev.fun, ev.grad, prob.project(np.asarray(ctrl0, dtype=float)),
                         0.0, prob.F, prob.eps_J, prob.nu_grad, prob.max_outer)
    if ev.clipped_evals:
        log.info("%d gradient evaluations used one-sided clipping derivatives",
                 ev.clipped_evals)
    return rep


# ------------------------------------------------------------ workflow


@dataclass
class ReconstructionSetup:
    """Everything of an :class:`OptProblem` except the targets."""

    T: float
    M: int
    grid: Grid
    e0: float
    K: np.ndarray
    v0: np.ndarray
    initial_flux: float = 1.0
    F: float = np.inf
    eps_J: float = 1e-5
    nu_grad: float = 1e-5
    max_outer: int = 500
    include_species0: bool = False
    newton: NewtonConfig = field(default_factory=NewtonConfig)
    scheme: Scheme = DEFAULT_SCHEME


@dataclass
class Reconstruction:
    report: OptReport
    problem: OptProblem
    target: Trajectory
    achieved: Trajectory
    e_opt: float
    e_star: float
    l2_errors: np.ndarray  # per species, all n+1
    J_final: float

    def compare_table(self) -> np.ndarray:
        """Rows ``(y, target_0, achieved_0, ..., target_n, achieved_n)``."""
        cols = [self.problem.grid.y]
        for i in range(self.problem.n_species):
            cols += [self.target.final[i], self.achieved.final[i]]
        return np.column_stack(cols)


def reconstruct_experiment(sim_fluxes: FluxSchedule, setup: ReconstructionSetup,
                           ctrl0=None) -> Reconstruction:
    """Simulate with ``sim_fluxes``, take its final state as target, optimize, re-simulate."""
    samples = sample_fluxes(sim_fluxes, setup.M, setup.T)
    target = simulate_samples(setup.v0, samples, setup.K, setup.grid, setup.T, setup.e0,
                              setup.newton, setup.scheme)
    prob = OptProblem(
        v_opt=target.final, e_opt=float(target.thickness.e[-1]), T=setup.T, M=setup.M,
        grid=setup.grid, e0=setup.e0, K=setup.K, v0=setup.v0, F=setup.F, eps_J=setup.eps_J,
        nu_grad=setup.nu_grad, max_outer=setup.max_outer,
        include_species0=setup.include_species0, newton=setup.newton, scheme=setup.scheme,
    )
    if ctrl0 is None:
        ctrl0 = np.full(prob.size, setup.initial_flux)
    report = bfgs_minimize(prob, ctrl0)
    achieved = forward(report.control, prob)
    l2 = np.sqrt(prob.grid.dy * np.sum((achieved.final - target.final) ** 2, axis=1))
    return Reconstruction(
        report=report, problem=prob, target=target, achieved=achieved, e_opt=prob.e_opt,
        e_star=float(achieved.thickness.e[-1]), l2_errors=l2, J_final=cost_of(achieved, prob),
    )

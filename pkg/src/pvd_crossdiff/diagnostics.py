"""Entropy, mass and decay observables of simulated trajectories.

All spatial integrals use the midpoint rule at the cell centres.  Species 0
is included explicitly in every sum; on the simplex this is the same as
using ``1 - rho`` for its fraction.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateFit
from .flux import FluxSchedule


def _xlogx(x):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(x > 0.0, x * np.log(np.where(x > 0.0, x, 1.0)), 0.0)


def constant_flux_levels(samples) -> np.ndarray | None:
    """Return the common column of a per-step flux table, or ``None`` if it varies."""
    samples = np.asarray(samples, dtype=float)
    if np.all(samples == samples[:, :1]):
        return samples[:, 0].copy()
    return None


def equilibrium(phibar) -> np.ndarray:
    """Flux-ratio composition ``phibar / sum(phibar)`` over all n+1 species."""
    phibar = np.asarray(phibar, dtype=float)
    total = phibar.sum()
    if total <= 0:
        raise ValueError("equilibrium composition needs a positive total flux")
    return phibar / total


@dataclass
class EntropySeries:
    t: np.ndarray
    E: np.ndarray
    Ebar: np.ndarray | None
    weighted: np.ndarray | None


def entropy_values(fields, dy) -> np.ndarray:
    """``int_0^1 h(v) dy`` for a stack of fields shaped ``(..., n+1, Q)``."""
    return dy * _xlogx(fields).sum(axis=(-2, -1))


def relative_entropy_values(fields, fbar, dy) -> np.ndarray:
    """``int_0^1 hbar(v) dy`` relative to the interior composition ``fbar`` (length n+1)."""
    fbar = np.asarray(fbar, dtype=float)
    logf = np.log(fbar)[:, None]
    dens = _xlogx(fields) - fields * logf
    return np.maximum(dy * dens.sum(axis=(-2, -1)), 0.0)


def entropy_series(traj, fbar=None) -> EntropySeries:
    """Entropy of every stored field, plus relative and weighted entropy.

    The relative series needs ``fbar``; when omitted it is taken from the
    flux ratios of a constant schedule, and left undefined otherwise.
    """
    dy = traj.grid.dy
    E = entropy_values(traj.fields, dy)
    if fbar is None:
        levels = constant_flux_levels(traj.samples)
        if levels is not None and levels.sum() > 0 and np.all(levels > 0):
            fbar = equilibrium(levels)
    if fbar is None:
        return EntropySeries(traj.t, E, None, None)
    Ebar = relative_entropy_values(traj.fields, fbar, dy)
    return EntropySeries(traj.t, E, Ebar, traj.thickness.e * Ebar)


@dataclass
class MonotoneReport:
    monotone: bool
    max_violation: float
    index: int | None


def check_nonincreasing(series, rel_tol=1e-8) -> MonotoneReport:
    """Check ``s[m+1] <= s[m] + rel_tol * (1 + |s[m]|)`` and report the worst excess."""
    s = np.asarray(series, dtype=float)
    excess = s[1:] - s[:-1] - rel_tol * (1.0 + np.abs(s[:-1]))
    if excess.size == 0:
        return MonotoneReport(True, 0.0, None)
    worst = int(np.argmax(excess))
    viol = float(max(excess[worst], 0.0))
    return MonotoneReport(viol == 0.0, viol, worst + 1 if viol > 0 else None)


def weighted_entropy_monotone(traj, phi: FluxSchedule, rel_tol=1e-8,
                              form="continuous") -> MonotoneReport:
    """Verify that the thickness-weighted relative entropy never increases.

    ``form="continuous"`` checks ``e_m * Ebar_m``, the sampled version of
    ``(e0 + V t) Ebar(t)``.  ``form="discrete"`` checks ``e_{m+1} * Ebar_m``,
    the weighting that the backward-Euler step satisfies exactly; the two
    agree as ``dt -> 0`` but can differ on the first steps of a coarse run.
    """
    if phi.kind != "constant":
        raise ValueError("the weighted entropy bound is only established for constant fluxes")
    series = entropy_series(traj, equilibrium(phi.beta))
    if form == "continuous":
        return check_nonincreasing(series.weighted, rel_tol)
    if form == "discrete":
        e = traj.thickness.e
        V = float(np.sum(phi.beta))
        return check_nonincreasing((e + V * traj.thickness.dt) * series.Ebar, rel_tol)
    raise ValueError(f"unknown form {form!r}")


def mean_fraction_exact(t, v0mean, phibar, V, e0):
    """Closed-form mean fraction ``(e0 * v0mean + t * phibar) / (e0 + V t)``."""
    if V <= 0:
        raise ValueError("V must be positive")
    t = np.asarray(t, dtype=float)
    return (e0 * v0mean + t * phibar) / (e0 + V * t)


def mean_fraction_observed(traj, i, m) -> float:
    return float(traj.fields[m, i].mean())


def l1_gaps(fields, ref, dy) -> np.ndarray:
    """``||v_i - ref_i||_{L1}`` per stored field and species, shape ``(..., n+1)``."""
    ref = np.asarray(ref, dtype=float)
    return dy * np.abs(fields - ref[..., None]).sum(axis=-1)


@dataclass
class AffineFit:
    slope: float
    intercept: float
    r2: float


@dataclass
class DecayReport:
    window: tuple
    gamma: AffineFit
    eta: AffineFit
    eta_species: list
    t: np.ndarray
    gamma_series: np.ndarray
    eta_series: np.ndarray
    eta_species_series: np.ndarray

    def fits(self):
        """``(name, fit)`` pairs in reporting order."""
        out = [("gamma", self.gamma), ("eta", self.eta)]
        out += [(f"eta_{i}", f) for i, f in enumerate(self.eta_species)]
        return out


def affine_fit(t, s) -> AffineFit:
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    A = np.vstack([t, np.ones_like(t)]).T
    (slope, intercept), *_ = np.linalg.lstsq(A, s, rcond=None)
    ss_res = float(np.sum((s - (slope * t + intercept)) ** 2))
    ss_tot = float(np.sum((s - s.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res == 0 else 0.0)
    return AffineFit(float(slope), float(intercept), float(min(max(r2, 0.0), 1.0)))


def _inverse(x, floor):
    with np.errstate(divide="ignore"):
        return np.where(x > floor, 1.0 / np.where(x > floor, x, 1.0), np.nan)


def decay_quantities(traj, fbar, min_samples=20, floor=1e-14) -> DecayReport:
    """Fit ``1/Ebar`` and the inverse squared L1 gaps to affine laws.

    The fit uses the second half of the horizon; samples whose denominator
    is at or below ``floor`` are masked.
    """
    fbar = np.asarray(fbar, dtype=float)
    dy = traj.grid.dy
    t = traj.t
    Ebar = relative_entropy_values(traj.fields, fbar, dy)
    gaps2 = l1_gaps(traj.fields, fbar, dy) ** 2
    gamma = _inverse(Ebar, floor)
    eta = _inverse(gaps2.sum(axis=1), floor)
    eta_i = _inverse(gaps2, floor)

    window = (0.5 * t[-1], t[-1])
    sel = t >= window[0]

    def fit(series, name):
        ok = sel & np.isfinite(series)
        if ok.sum() < min_samples:
            raise DegenerateFit(f"{name}: fewer than {min_samples} usable samples in the fit window")
        return affine_fit(t[ok], series[ok])

    return DecayReport(
        window=window,
        gamma=fit(gamma, "gamma"),
        eta=fit(eta, "eta"),
        eta_species=[fit(eta_i[:, i], f"eta_{i}") for i in range(eta_i.shape[1])],
        t=t, gamma_series=gamma, eta_series=eta, eta_species_series=eta_i,
    )


def csiszar_kullback_terms(fields, dy):
    """Both sides of ``||v_i - mean v_i||_{L1}^2 <= 2 int v_i log(v_i / mean v_i)``.

    Returns ``(lhs, rhs)`` shaped like ``fields`` without the last axis.
    """
    fields = np.asarray(fields, dtype=float)
    mean = dy * fields.sum(axis=-1)
    lhs = (dy * np.abs(fields - mean[..., None]).sum(axis=-1)) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(fields > 0, fields / np.where(mean > 0, mean, 1.0)[..., None], 1.0)
        rhs = 2.0 * dy * np.where(fields > 0, fields * np.log(ratio), 0.0).sum(axis=-1)
    return lhs, rhs


def csiszar_kullback_gap(traj) -> np.ndarray:
    """Slack ``rhs - lhs`` of the Csiszar-Kullback bound, shape ``(M+1, n+1)``."""
    lhs, rhs = csiszar_kullback_terms(traj.fields, traj.grid.dy)
    return rhs - lhs


def simplex_audit(fields) -> float:
    """Largest violation of ``v >= 0`` and ``sum v = 1`` over a stack of fields."""
    fields = np.asarray(fields, dtype=float)
    neg = float(max(-fields.min(), 0.0))
    sums = float(np.max(np.abs(fields.sum(axis=-2) - 1.0)))
    return max(neg, sums)

"""Microscopic exchange model and its comparison with the zero-flux PDE.

Sites hold one atom each and carry a species label.  A sweep makes
``2 (L - 1)`` sequential proposals; each picks a nearest-neighbour bond
uniformly and swaps its pair of species ``(a, b)`` with probability
``P[a, b]``, so every bond is proposed twice per sweep on average.  With
lattice spacing ``dx = 1/L`` and sweep duration ``dt = 2 dx**2 / a`` the
expected densities follow the cross-diffusion system with ``K = a * P``.
The ends are reflecting.

Uniforms come from a counter-based generator, so the compiled and numpy
kernels produce identical trajectories for the same seed.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ._backend import kernels
from .flux import FluxSchedule
from .solver import Grid, NewtonConfig, simulate


def check_probabilities(P) -> np.ndarray:
    P = np.array(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ValueError("exchange probabilities must be a square table")
    if not np.allclose(P, P.T, rtol=0.0, atol=1e-15):
        raise ValueError("exchange probabilities must be symmetric")
    if np.any(P < 0) or np.any(P > 1):
        raise ValueError("exchange probabilities must lie in [0, 1]")
    np.fill_diagonal(P, 0.0)
    return np.ascontiguousarray(P)


@dataclass(frozen=True)
class ScalingParams:
    """Diffusive scaling ``2 dx**2 / dt = a`` on ``L`` sites of the unit interval."""

    a: float
    L: int

    def __post_init__(self):
        if self.a <= 0 or self.L < 2:
            raise ValueError("need a > 0 and at least two sites")

    @property
    def dx(self) -> float:
        return 1.0 / self.L

    @property
    def dt(self) -> float:
        return 2.0 * self.dx ** 2 / self.a

    def kmatrix(self, P) -> np.ndarray:
        return self.a * check_probabilities(P)

    def sweeps(self, T: float) -> int:
        """Number of sweeps covering the horizon ``T`` (rounded to the nearest)."""
        return int(round(T / self.dt))


@dataclass
class LatticeState:
    sites: np.ndarray  # int64 species labels, one atom per site
    n_species: int
    seed: int
    counter: int = 0

    def copy(self) -> LatticeState:
        return LatticeState(self.sites.copy(), self.n_species, self.seed, self.counter)

    def counts(self) -> np.ndarray:
        return np.bincount(self.sites, minlength=self.n_species)


def initial_state(profile, seed, member=0) -> LatticeState:
    """Draw each site's species independently from ``profile`` of shape ``(n+1, L)``."""
    profile = np.asarray(profile, dtype=float)
    b, L = profile.shape
    ss = np.random.SeedSequence([int(seed), int(member)])
    rng = np.random.default_rng(ss)
    cdf = np.cumsum(profile, axis=0)
    cdf /= cdf[-1]
    u = rng.random(L)
    sites = np.minimum((u[None, :] >= cdf).sum(axis=0), b - 1).astype(np.int64)
    kernel_seed = int(ss.spawn(1)[0].generate_state(1, dtype=np.uint64)[0])
    return LatticeState(sites, b, kernel_seed, 0)


def mc_step(state: LatticeState, P, nsweeps: int = 1) -> LatticeState:
    """Successor of ``state`` after ``nsweeps`` sweeps; the input is not modified."""
    P = check_probabilities(P)
    if P.shape[0] != state.n_species:
        raise ValueError("probability table does not match the number of species")
    out = state.copy()
    out.counter = int(kernels.lattice_sweeps(out.sites, P, out.seed, out.counter, int(nsweeps)))
    return out


def coarse_grain(state: LatticeState, bins: int) -> np.ndarray:
    """Per-bin species fractions, shape ``(n+1, bins)``."""
    L = state.sites.size
    if bins < 1 or L % bins:
        raise ValueError(f"bins={bins} must divide the number of sites L={L}")
    onehot = np.zeros((state.n_species, L))
    onehot[state.sites, np.arange(L)] = 1.0
    return onehot.reshape(state.n_species, bins, L // bins).mean(axis=2)


def site_profile(w, L: int) -> np.ndarray:
    """Normalize closed-form profiles ``w_i`` at the site centres, shape ``(n+1, L)``."""
    x = (np.arange(L) + 0.5) / L
    W = np.array([np.broadcast_to(np.asarray(f(x), dtype=float), x.shape) for f in w])
    return W / W.sum(axis=0)


@dataclass
class LatticeComparison:
    times: np.ndarray
    lattice: np.ndarray  # (n_out+1, n+1, bins) ensemble mean
    pde: np.ndarray  # (n_out+1, n+1, bins)
    l1: np.ndarray  # (n_out+1, n+1)
    L: int
    ensemble: int
    seed: int
    sweeps: int

    @property
    def final_distance(self) -> float:
        """Largest per-species L1 distance at the final time."""
        return float(self.l1[-1].max())


def _member(profile, P, seed, member, bins, chunks):
    st = initial_state(profile, seed, member)
    out = [coarse_grain(st, bins)]
    for n in chunks:
        st = mc_step(st, P, n)
        out.append(coarse_grain(st, bins))
    return np.array(out)


def lattice_ensemble(profile, P, scaling: ScalingParams, T, ensemble, bins, n_out=10,
                     seed=0, workers=1):
    """Ensemble-mean coarse densities at ``n_out + 1`` equally spaced sweep counts.

    The horizon is rounded to a whole number of sweeps per output interval.
    """
    per = max(1, int(round(T / scaling.dt / n_out)))
    total = per * n_out
    marks = per * np.arange(n_out + 1)
    chunks = np.full(n_out, per)
    P = check_probabilities(P)

    def run(k):
        return _member(profile, P, seed, k, bins, chunks)

    acc = None
    with ThreadPoolExecutor(max_workers=max(1, int(workers))) as pool:
        # map preserves member order, so the reduction is deterministic
        for res in pool.map(run, range(ensemble)):
            acc = res if acc is None else acc + res
    return marks * scaling.dt, acc / ensemble, total


def hydrodynamic_compare(P, a, L, ensemble, T, w, bins=100, n_out=10, seed=0,
                         steps_per_output=20, newton=NewtonConfig(), workers=1):
    """Compare the lattice ensemble mean with the zero-flux PDE at ``K = a P``.

    ``w`` lists the closed-form initial profiles; each site draws its species
    from their normalized values, and the PDE starts from the bin averages of
    those site probabilities.
    """
    scaling = ScalingParams(a, L)
    profile = site_profile(w, L)
    times, lat, total = lattice_ensemble(profile, P, scaling, T, ensemble, bins, n_out,
                                         seed, workers)
    b = profile.shape[0]
    v0 = profile.reshape(b, bins, L // bins).mean(axis=2)
    K = scaling.kmatrix(P)
    grid = Grid(bins)
    if not np.any(K):
        # no exchanges at all: the macroscopic field is stationary
        pde = np.repeat(v0[None], n_out + 1, axis=0)
    else:
        zero = FluxSchedule.constant(np.zeros(b))
        Tpde = total * scaling.dt
        traj = simulate(v0, zero, K, grid, n_out * steps_per_output, Tpde, 1.0, newton)
        pde = traj.fields[::steps_per_output]
    l1 = grid.dy * np.abs(lat - pde).sum(axis=-1)
    return LatticeComparison(times, lat, pde, l1, L, ensemble, seed, total)

"""Injection flux schedules and the thickness law they induce."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class FluxSchedule:
    """Per-species nonnegative injection fluxes over ``[0, T]``.

    Three kinds are supported:

    ``constant``
        ``beta[i]`` for every time.
    ``piecewise``
        ``levels[i] = (a1, a2, a3)`` switching at ``breaks[i] = (tau1, tau2)``;
        the value is ``a1`` on ``(0, tau1]``, ``a2`` on ``(tau1, tau2]`` and
        ``a3`` afterwards.
    ``table``
        ``table[i, m-1]`` is the interval average over ``[t_{m-1}, t_m]``.
    """

    kind: str
    beta: np.ndarray | None = None
    breaks: np.ndarray | None = None
    levels: np.ndarray | None = None
    table: np.ndarray | None = None
    bound: float = np.inf
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.kind == "constant":
            vals = np.asarray(self.beta, dtype=float)
            object.__setattr__(self, "beta", vals)
        elif self.kind == "piecewise":
            levels = np.asarray(self.levels, dtype=float)
            breaks = np.asarray(self.breaks, dtype=float)
            if levels.ndim != 2 or levels.shape[1] != 3:
                raise ValueError("piecewise levels must have shape (n+1, 3)")
            if breaks.shape != (levels.shape[0], 2):
                raise ValueError("piecewise breaks must have shape (n+1, 2)")
            if np.any(breaks[:, 0] <= 0.0) or np.any(breaks[:, 1] <= breaks[:, 0]):
                raise ValueError("breakpoints must satisfy 0 < tau1 < tau2")
            object.__setattr__(self, "levels", levels)
            object.__setattr__(self, "breaks", breaks)
            vals = levels
        elif self.kind == "table":
            vals = np.asarray(self.table, dtype=float)
            if vals.ndim != 2:
                raise ValueError("a flux table must have shape (n+1, M)")
            object.__setattr__(self, "table", vals)
        else:
            raise ValueError(f"unknown flux schedule kind {self.kind!r}")
        if np.any(vals < 0.0):
            raise ValueError("fluxes must be nonnegative")
        if np.any(vals > self.bound):
            raise ValueError(f"fluxes exceed the bound F={self.bound}")

    @classmethod
    def constant(cls, beta, bound=np.inf):
        return cls("constant", beta=beta, bound=bound)

    @classmethod
    def piecewise(cls, breaks, levels, bound=np.inf):
        return cls("piecewise", breaks=breaks, levels=levels, bound=bound)

    @classmethod
    def from_table(cls, table, bound=np.inf):
        return cls("table", table=table, bound=bound)

    @property
    def n_species(self) -> int:
        if self.kind == "constant":
            return self.beta.size
        if self.kind == "piecewise":
            return self.levels.shape[0]
        return self.table.shape[0]

    def cumulative(self, t) -> np.ndarray:
        """``int_0^t phi_i(s) ds`` for every species (not defined for tables)."""
        t = float(t)
        if self.kind == "constant":
            return self.beta * t
        if self.kind == "piecewise":
            tau1, tau2 = self.breaks[:, 0], self.breaks[:, 1]
            a = self.levels
            return (
                a[:, 0] * np.minimum(t, tau1)
                + a[:, 1] * np.clip(t - tau1, 0.0, tau2 - tau1)
                + a[:, 2] * np.maximum(t - tau2, 0.0)
            )
        raise TypeError("a per-step table has no continuous-time primitive")

    def __call__(self, t) -> np.ndarray:
        """Point value of the fluxes at time ``t``."""
        if self.kind == "constant":
            return self.beta.copy()
        if self.kind == "piecewise":
            tau1, tau2 = self.breaks[:, 0], self.breaks[:, 1]
            a = self.levels
            return np.where(t <= tau1, a[:, 0], np.where(t <= tau2, a[:, 1], a[:, 2]))
        raise TypeError("evaluate a table through sample_fluxes")


def sample_fluxes(phi: FluxSchedule, M: int, T: float) -> np.ndarray:
    """Interval averages ``phi_hat[i, m-1]`` of the schedule over the ``M`` steps of ``[0, T]``."""
    if M < 1 or T <= 0:
        raise ValueError("need M >= 1 and T > 0")
    if phi.kind == "table":
        if phi.table.shape[1] != M:
            raise ValueError(f"flux table has {phi.table.shape[1]} columns, expected M={M}")
        return phi.table.copy()
    if phi.kind == "constant":
        return np.repeat(phi.beta[:, None], M, axis=1)
    dt = T / M
    prim = np.stack([phi.cumulative(m * dt) for m in range(M + 1)], axis=1)
    out = np.diff(prim, axis=1) / dt
    # integrating a constant level can leave round-off below zero
    return np.clip(out, 0.0, None)


@dataclass(frozen=True)
class ThicknessTrack:
    e0: float
    e: np.ndarray
    ed: np.ndarray
    dt: float

    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.e.size)


def thickness_track(samples, e0: float, dt: float) -> ThicknessTrack:
    """Rectangle-rule thickness ``e_m = e_{m-1} + dt * sum_i phi_hat[i, m-1]``."""
    samples = np.asarray(samples, dtype=float)
    if np.any(samples < 0.0):
        raise ValueError("flux samples must be nonnegative")
    if e0 <= 0:
        raise ValueError("initial thickness must be positive")
    ed = samples.sum(axis=0)
    e = np.empty(ed.size + 1)
    e[0] = e0
    for m in range(ed.size):
        e[m + 1] = e[m] + ed[m] * dt
    return ThicknessTrack(e0=float(e0), e=e, ed=ed, dt=float(dt))

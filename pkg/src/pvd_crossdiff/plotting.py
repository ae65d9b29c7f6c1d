"""Figures drawn from the CSV outputs of the command-line tool.

Every function reads a CSV, draws, and saves a vector image; none of them
recomputes model quantities.
"""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .csvio import columns, read_csv  # noqa: E402
from .errors import SchemaError  # noqa: E402

KINDS = ("profiles", "fluxes", "decay", "convergence", "compare")


def _save(fig, out):
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out)
    plt.close(fig)
    return out


def plot_profiles(csv_path, out, time=None):
    """Species profiles at one stored time (default: the last)."""
    header, data = read_csv(csv_path, required=("t", "y", "species_0"))
    t = data[:, header.index("t")]
    times = np.unique(t)
    pick = times[-1] if time is None else times[np.argmin(np.abs(times - time))]
    rows = t == pick
    y = data[rows, header.index("y")]
    v = columns(header, data[rows], "species_")
    fig, ax = plt.subplots(figsize=(5, 4))
    for i in range(v.shape[1]):
        ax.plot(y, v[:, i], label=str(i))
    ax.set_xlabel("y")
    ax.set_ylabel("volume fraction")
    ax.set_title(f"t = {pick:g}")
    ax.legend(title="species")
    return _save(fig, out)


def plot_fluxes(csv_path, out):
    """Per-species flux controls as step functions of time."""
    header, data = read_csv(csv_path, required=("t_start", "t_end", "phi_0"))
    t0 = data[:, header.index("t_start")]
    t1 = data[:, header.index("t_end")]
    phi = columns(header, data, "phi_")
    fig, ax = plt.subplots(figsize=(5, 4))
    edges = np.append(t0, t1[-1])
    for i in range(phi.shape[1]):
        ax.stairs(phi[:, i], edges, label=str(i))
    ax.set_xlabel("t")
    ax.set_ylabel("flux")
    ax.legend(title="species")
    return _save(fig, out)


def plot_decay(csv_path, out):
    """Per-species inverse squared L1 gaps, then gamma and eta, against time."""
    header, data = read_csv(csv_path, required=("t", "gamma", "eta", "eta_0"))
    t = data[:, header.index("t")]
    eta_i = columns(header, data, "eta_")
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    for i in range(eta_i.shape[1]):
        ax1.plot(t, eta_i[:, i], label=f"eta_{i}")
    ax1.set_xlabel("t")
    ax1.legend()
    ax2.plot(t, data[:, header.index("gamma")], label="gamma")
    ax2.plot(t, data[:, header.index("eta")], label="eta")
    ax2.set_xlabel("t")
    ax2.legend()
    return _save(fig, out)


def plot_convergence(csv_path, out):
    header, data = read_csv(csv_path, required=("iteration", "J"))
    J = data[:, header.index("J")]
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot(data[:, header.index("iteration")], J, marker=".")
    if np.all(J > 0):
        ax.set_yscale("log")
    ax.set_xlabel("iteration")
    ax.set_ylabel("J")
    return _save(fig, out)


def plot_compare(csv_path, out):
    """Target against achieved final profile, one panel per species."""
    header, data = read_csv(csv_path, required=("y", "target_0", "achieved_0"))
    y = data[:, header.index("y")]
    tgt = columns(header, data, "target_")
    ach = columns(header, data, "achieved_")
    if tgt.shape != ach.shape:
        raise SchemaError("target and achieved columns do not pair up")
    b = tgt.shape[1]
    fig, axes = plt.subplots(1, b, figsize=(3.2 * b, 3.2), squeeze=False)
    for i, ax in enumerate(axes[0]):
        ax.plot(y, tgt[:, i], label="target")
        ax.plot(y, ach[:, i], "--", label="achieved")
        ax.set_title(f"species {i}")
        ax.set_xlabel("y")
    axes[0, 0].legend()
    return _save(fig, out)


def plot(kind, csv_path, out, **kw):
    if kind not in KINDS:
        raise SchemaError(f"unknown plot kind {kind!r}; choose from {', '.join(KINDS)}")
    return globals()[f"plot_{kind}"](csv_path, out, **kw)

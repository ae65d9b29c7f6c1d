"""Command-line entry point.

Commands
--------
simulate        trajectory, thickness and Newton statistics of one run
longtime        decay series and affine fits for a constant-flux run
optimize        flux reconstruction against simulated or file targets
lattice-compare exchange-model ensemble against the zero-flux PDE
plot            draw one figure from a CSV written by the other commands

Exit codes
----------
0 success, 2 usage, 3 configuration parse error, 4 validation error,
5 solver failure, 6 optimizer failure, 7 fit failure, 8 CSV schema error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import diagnostics as dg
from .config import RunConfig, parse_config
from .csvio import format_value, read_csv, columns, write_csv
from .errors import (DegenerateCell, DegenerateFit, LineSearchFailure, NonConvergence,
                     NonDifferentiablePoint, ParseError, SchemaError, SingularJacobian,
                     ValidationError)
from .solver import discretize_initial, simulate

log = logging.getLogger("pvd_crossdiff")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_PARSE = 3
EXIT_VALIDATION = 4
EXIT_SOLVER = 5
EXIT_OPTIMIZER = 6
EXIT_FIT = 7
EXIT_SCHEMA = 8


def _outdir(cfg: RunConfig, args) -> Path:
    out = Path(args.out) if args.out else Path(cfg.directory)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _species_cols(prefix, b):
    return [f"{prefix}{i}" for i in range(b)]


def _initial_field(cfg: RunConfig):
    return discretize_initial(list(cfg.initial), cfg.grid())


def _run(cfg: RunConfig):
    return simulate(_initial_field(cfg), cfg.schedule(), cfg.kmatrix(), cfg.grid(), cfg.M,
                    cfg.T, cfg.e0, cfg.newton(), cfg.scheme())


def _write_trajectory(path, times, fields, y, precision):
    b = fields.shape[1]
    rows = []
    for t, f in zip(times, fields):
        for q in range(y.size):
            rows.append([t, y[q], *f[:, q]])
    return write_csv(path, ["t", "y", *_species_cols("species_", b)], rows, precision)


def cmd_simulate(cfg: RunConfig, args) -> int:
    out = _outdir(cfg, args)
    traj = _run(cfg)
    p = cfg.precision
    _write_trajectory(out / "trajectory.csv", traj.t, traj.fields, traj.grid.y, p)
    th = traj.thickness
    # growth rate over the step ending at t; the first row repeats the first step
    ed = np.concatenate([th.ed[:1], th.ed])
    write_csv(out / "thickness.csv", ["t", "e", "ed"], zip(traj.t, th.e, ed), p)
    write_csv(out / "newton.csv", ["step", "iters", "residual"],
              zip(range(1, cfg.M + 1), traj.newton_iters, traj.newton_residual), p)
    log.info("simulated %d steps; final thickness %s", cfg.M, format_value(th.e[-1], p))
    return EXIT_OK


def cmd_longtime(cfg: RunConfig, args) -> int:
    phi = cfg.schedule()
    if cfg.fluxes.kind != "constant":
        raise ValidationError("longtime needs a constant flux schedule")
    out = _outdir(cfg, args)
    traj = _run(cfg)
    fbar = dg.equilibrium(phi.beta)
    es = dg.entropy_series(traj, fbar)
    rep = dg.decay_quantities(traj, fbar)
    b = traj.n_species
    rows = np.column_stack([traj.t, es.Ebar, es.weighted, rep.gamma_series, rep.eta_series,
                            rep.eta_species_series])
    write_csv(out / "decay.csv",
              ["t", "Ebar", "weighted", "gamma", "eta", *_species_cols("eta_", b)],
              rows, cfg.precision)
    write_csv(out / "decayfit.csv", ["quantity", "slope", "intercept", "R2"],
              [[name, f.slope, f.intercept, f.r2] for name, f in rep.fits()], cfg.precision)
    for form in ("continuous", "discrete"):
        mono = dg.weighted_entropy_monotone(traj, phi, form=form)
        log.info("weighted entropy (%s weights) nonincreasing: %s (worst excess %.3e)",
                 form, mono.monotone, mono.max_violation)
    for name, f in rep.fits():
        log.info("%s: slope %.6g, R2 %.6f", name, f.slope, f.r2)
    return EXIT_OK


def _targets(cfg: RunConfig):
    """Return ``(v_opt, e_opt)`` from the generating run or a target CSV."""
    oc = cfg.optimize
    if oc.targets == "generate":
        traj = _run(cfg)
        return traj.final, float(traj.thickness.e[-1])
    header, data = read_csv(oc.targets, required=("y", "species_0"))
    v = columns(header, data, "species_").T
    if v.shape != (cfg.n_species, cfg.Q):
        raise SchemaError(f"target file must hold {cfg.Q} rows of {cfg.n_species} species")
    return v, float(oc.e_opt)


def cmd_optimize(cfg: RunConfig, args) -> int:
    from . import optimizer as opt

    if cfg.optimize is None:
        raise ValidationError("the configuration has no [optimize] section")
    oc = cfg.optimize
    out = _outdir(cfg, args)
    v_opt, e_opt = _targets(cfg)
    prob = opt.OptProblem(
        v_opt=v_opt, e_opt=e_opt, T=cfg.T, M=cfg.M, grid=cfg.grid(), e0=cfg.e0,
        K=cfg.kmatrix(), v0=_initial_field(cfg), F=oc.F, eps_J=oc.eps_J, nu_grad=oc.nu_grad,
        max_outer=oc.max_outer, include_species0=oc.include_species0, newton=cfg.newton(),
        scheme=cfg.scheme(),
    )
    ctrl0 = np.full(prob.size, oc.initial_flux)
    status = EXIT_OK
    try:
        rep = opt.bfgs_minimize(prob, ctrl0)
    except LineSearchFailure as exc:
        log.error("%s; writing the best iterate", exc)
        rep = exc.report
        status = EXIT_OPTIMIZER
    p = cfg.precision
    steps = [float("nan")] + list(rep.steps)
    write_csv(out / "opt_history.csv", ["iteration", "J", "grad_norm", "step"],
              zip(range(len(rep.J_history)), rep.J_history, rep.grad_norms, steps), p)
    samples = prob.samples(rep.control)
    t0 = prob.dt * np.arange(cfg.M)
    write_csv(out / "opt_control.csv",
              ["t_start", "t_end", *_species_cols("phi_", prob.n_species)],
              np.column_stack([t0, t0 + prob.dt, samples.T]), p)
    achieved = opt.forward(rep.control, prob)
    cols = [prob.grid.y]
    header = ["y"]
    for i in range(prob.n_species):
        cols += [v_opt[i], achieved.final[i]]
        header += [f"target_{i}", f"achieved_{i}"]
    write_csv(out / "final_compare.csv", header, np.column_stack(cols), p)
    e_star = float(achieved.thickness.e[-1])
    summary = [
        f"stopping reason: {rep.reason}",
        f"iterations: {rep.iterations}",
        f"J final: {format_value(rep.J, p)}",
        f"projected gradient norm: {format_value(rep.grad_norm, p)}",
        f"target thickness e_opt: {format_value(e_opt, p)}",
        f"achieved thickness: {format_value(e_star, p)}",
        f"thickness gap: {format_value(abs(e_star - e_opt), p)}",
    ]
    (out / "summary.txt").write_text("\n".join(summary) + "\n", encoding="utf-8")
    log.info("; ".join(summary))
    return status


def cmd_lattice_compare(cfg: RunConfig, args) -> int:
    from .lattice import hydrodynamic_compare

    lc = cfg.lattice
    if lc is None:
        raise ValidationError("the configuration has no [lattice] section")
    if cfg.fluxes.kind != "zero":
        raise ValidationError("the lattice comparison runs with zero fluxes")
    seed = lc.seed if args.seed is None else int(args.seed)
    out = _outdir(cfg, args)
    res = hydrodynamic_compare(np.array(lc.p), lc.a, lc.L, lc.ensemble, lc.T,
                               list(cfg.initial), bins=lc.bins, n_out=lc.n_out, seed=seed,
                               steps_per_output=lc.steps_per_output, newton=cfg.newton(),
                               workers=lc.workers)
    y = (np.arange(lc.bins) + 0.5) / lc.bins
    p = cfg.precision
    _write_trajectory(out / "lattice_density.csv", res.times, res.lattice, y, p)
    _write_trajectory(out / "pde_density.csv", res.times, res.pde, y, p)
    b = res.l1.shape[1]
    write_csv(out / "l1_distance.csv", ["t", "seed", *_species_cols("l1_", b)],
              [[t, seed, *row] for t, row in zip(res.times, res.l1)], p)
    log.info("L=%d ensemble=%d seed=%d sweeps=%d final L1 distance %.4g",
             lc.L, lc.ensemble, seed, res.sweeps, res.final_distance)
    return EXIT_OK


def cmd_plot(args) -> int:
    from .plotting import plot

    out = Path(args.out) if args.out else Path(args.input).with_suffix(f".{args.format}")
    if out.suffix == "" or out.is_dir():
        out = out / f"{args.kind}.{args.format}"
    plot(args.kind, args.input, out)
    log.info("wrote %s", out)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "longtime": cmd_longtime,
    "optimize": cmd_optimize,
    "lattice-compare": cmd_lattice_compare,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pvd-crossdiff",
                                 description="Cross-diffusion deposition simulator.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="run configuration (.cfg)")
        sp.add_argument("--out", help="output directory (overrides [output] directory)")
        sp.add_argument("--quiet", action="store_true", help="only report errors")
        if name == "lattice-compare":
            sp.add_argument("--seed", type=int, help="override the [lattice] seed")
        else:
            sp.set_defaults(seed=None)
    sp = sub.add_parser("plot")
    sp.add_argument("--input", required=True, help="CSV written by another command")
    sp.add_argument("--kind", required=True,
                    choices=("profiles", "fluxes", "decay", "convergence", "compare"))
    sp.add_argument("--out", help="image path or directory")
    sp.add_argument("--format", default="svg", choices=("svg", "pdf"))
    sp.add_argument("--quiet", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(format="%(levelname)s %(message)s", stream=sys.stderr)
    log.setLevel(logging.ERROR if args.quiet else logging.INFO)
    try:
        if args.command == "plot":
            return cmd_plot(args)
        cfg = parse_config(args.config)
        return COMMANDS[args.command](cfg, args)
    except ParseError as exc:
        log.error("%s", exc)
        return EXIT_PARSE
    except ValidationError as exc:
        log.error("invalid configuration: %s", exc)
        return EXIT_VALIDATION
    except (NonConvergence, SingularJacobian, DegenerateCell) as exc:
        log.error("solver failure: %s", exc)
        return EXIT_SOLVER
    except (LineSearchFailure, NonDifferentiablePoint) as exc:
        log.error("optimizer failure: %s", exc)
        return EXIT_OPTIMIZER
    except DegenerateFit as exc:
        log.error("fit failure: %s", exc)
        return EXIT_FIT
    except SchemaError as exc:
        log.error("%s", exc)
        return EXIT_SCHEMA


if __name__ == "__main__":
    sys.exit(main())

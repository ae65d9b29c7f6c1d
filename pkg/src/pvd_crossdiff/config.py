"""INI run configurations: parsing, validation and re-emission.

A configuration is a plain ``.cfg`` file read with :mod:`configparser`.
Tables (the ``K`` matrix, per-species levels) are written one row per line
with comma-separated entries.  Initial profiles come from a closed catalog
of named forms, e.g. ``w2 = gaussian(0.5, 0.04)``.

``dt = T / M`` and ``dy = 1 / Q`` are always derived, never configured.
"""
from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError
from .flux import FluxSchedule
from .model import check_kmatrix
from .solver import Grid, NewtonConfig, Scheme

# ---------------------------------------------------------------- profiles

PROFILE_ARITY = {
    "zero": 0,
    "constant": 1,  # c
    "polynomial": 2,  # c * y**p
    "sqrt": 1,  # c * sqrt(y)
    "gaussian": 2,  # exp(-(y - center)**2 / width)
    "one-minus-gaussian": 2,  # 1 - gaussian(center, width)
    "abs-sine": 1,  # |sin(k pi y)|
    "step": 3,  # left on y < at, right otherwise
}
_DEFAULT_ARGS = {"sqrt": (1.0,), "abs-sine": (1.0,)}


@dataclass(frozen=True)
class Profile:
    name: str
    args: tuple = ()

    def __post_init__(self):
        if self.name not in PROFILE_ARITY:
            raise ValidationError(
                f"unknown profile {self.name!r}; choose from {', '.join(PROFILE_ARITY)}"
            )
        args = tuple(float(a) for a in self.args) or _DEFAULT_ARGS.get(self.name, ())
        if len(args) != PROFILE_ARITY[self.name]:
            raise ValidationError(
                f"profile {self.name} takes {PROFILE_ARITY[self.name]} arguments, got {len(args)}"
            )
        if self.name in ("gaussian", "one-minus-gaussian") and args[1] <= 0:
            raise ValidationError("gaussian width must be positive")
        object.__setattr__(self, "args", args)

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        a = self.args
        if self.name == "zero":
            return np.zeros_like(y)
        if self.name == "constant":
            return np.full_like(y, a[0])
        if self.name == "polynomial":
            return a[0] * y ** a[1]
        if self.name == "sqrt":
            return a[0] * np.sqrt(y)
        if self.name == "gaussian":
            return np.exp(-((y - a[0]) ** 2) / a[1])
        if self.name == "one-minus-gaussian":
            return 1.0 - np.exp(-((y - a[0]) ** 2) / a[1])
        if self.name == "abs-sine":
            return np.abs(np.sin(a[0] * np.pi * y))
        return np.where(y < a[2], a[0], a[1])

    def text(self) -> str:
        if not self.args:
            return self.name
        return f"{self.name}({', '.join(_fmt(a) for a in self.args)})"


_PROFILE_RE = re.compile(r"^\s*([a-z][a-z-]*)\s*(?:\((.*)\))?\s*$")


def parse_profile(text: str) -> Profile:
    m = _PROFILE_RE.match(text)
    if not m:
        raise ValueError(f"cannot read profile {text!r}")
    name, body = m.group(1), m.group(2)
    if name not in PROFILE_ARITY:
        raise ValueError(f"unknown profile {name!r}; choose from {', '.join(PROFILE_ARITY)}")
    args = () if not body or not body.strip() else tuple(float(x) for x in body.split(","))
    return Profile(name, args)


# ---------------------------------------------------------------- sections


@dataclass(frozen=True)
class FluxConfig:
    kind: str  # constant | piecewise | zero
    beta: tuple = ()
    breaks: tuple = ()  # per species (tau1, tau2)
    levels: tuple = ()  # per species (a1, a2, a3)
    bound: float = math.inf

    def schedule(self, n_species: int) -> FluxSchedule:
        if self.kind == "zero":
            return FluxSchedule.constant(np.zeros(n_species), bound=self.bound)
        if self.kind == "constant":
            return FluxSchedule.constant(np.array(self.beta), bound=self.bound)
        return FluxSchedule.piecewise(np.array(self.breaks), np.array(self.levels),
                                      bound=self.bound)


@dataclass(frozen=True)
class OptimizeConfig:
    targets: str = "generate"  # or a CSV path with columns y, species_0..species_n
    e_opt: float | None = None
    F: float = math.inf
    eps_J: float = 1e-5
    nu_grad: float = 1e-5
    max_outer: int = 500
    initial_flux: float = 1.0
    include_species0: bool = False


@dataclass(frozen=True)
class LatticeConfig:
    p: tuple  # (n+1) x (n+1) exchange probabilities
    a: float = 2.0
    L: int = 2000
    ensemble: int = 200
    T: float = 0.002
    bins: int = 100
    n_out: int = 10
    steps_per_output: int = 20
    seed: int = 0
    workers: int = 1


@dataclass(frozen=True)
class RunConfig:
    K: tuple
    Q: int
    M: int
    T: float
    e0: float
    fluxes: FluxConfig
    initial: tuple  # Profile per species
    newton_tol: float = 1e-10
    newton_max_iter: int = 50
    stencil: str = "corrected"
    inflow_sign: float = -1.0
    optimize: OptimizeConfig | None = None
    lattice: LatticeConfig | None = None
    directory: str = "runs"
    precision: int = 17

    @property
    def n_species(self) -> int:
        return len(self.K)

    @property
    def dt(self) -> float:
        return self.T / self.M

    @property
    def dy(self) -> float:
        return 1.0 / self.Q

    def kmatrix(self) -> np.ndarray:
        return np.array(self.K, dtype=float)

    def grid(self) -> Grid:
        return Grid(self.Q)

    def newton(self) -> NewtonConfig:
        return NewtonConfig(residual_tol=self.newton_tol, max_iter=self.newton_max_iter)

    def scheme(self) -> Scheme:
        return Scheme(stencil=self.stencil, inflow_sign=self.inflow_sign)

    def schedule(self) -> FluxSchedule:
        return self.fluxes.schedule(self.n_species)

    def with_directory(self, directory) -> RunConfig:
        return replace(self, directory=str(directory))


# ---------------------------------------------------------------- parsing


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, int):
        return str(x)
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def _row(text):
    return tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())


def _table(text):
    rows = [r for r in text.strip().splitlines() if r.strip()]
    return tuple(_row(r) for r in rows)


class _Reader:
    """Typed option access that reports the offending line on failure."""

    def __init__(self, cp, lines, path):
        self.cp = cp
        self.lines = lines
        self.path = path

    def lineno(self, section, key=None):
        current = None
        for k, line in enumerate(self.lines, start=1):
            s = line.strip()
            if s.startswith("[") and s.endswith("]"):
                current = s[1:-1].strip()
                if key is None and current == section:
                    return k
                continue
            if current == section and key is not None and not line[:1].isspace():
                name = re.split(r"[=:]", s, maxsplit=1)[0].strip().lower()
                if name == key.lower():
                    return k
        return None

    def fail(self, message, section, key=None):
        raise ParseError(message, lineno=self.lineno(section, key), path=self.path)

    def has(self, section, key=None):
        if key is None:
            return self.cp.has_section(section)
        return self.cp.has_option(section, key)

    def get(self, section, key, conv, default=None, required=False):
        if not self.cp.has_section(section):
            if required:
                raise ParseError(f"missing section [{section}]", path=self.path)
            return default
        if not self.cp.has_option(section, key):
            if required:
                self.fail(f"missing option {key!r} in [{section}]", section)
            return default
        raw = self.cp.get(section, key)
        try:
            return conv(raw)
        except ValidationError:
            raise
        except (ValueError, TypeError) as exc:
            self.fail(f"[{section}] {key}: {exc}", section, key)


def _int(text):
    value = float(text)
    if not value.is_integer():
        raise ValueError(f"expected an integer, got {text!r}")
    return int(value)


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


_KNOWN = {
    "model": {"n", "k"},
    "grid": {"q", "m", "t", "e0"},
    "fluxes": {"kind", "beta", "breaks", "alpha1", "alpha2", "alpha3", "bound"},
    "initial": None,  # w0..wn
    "newton": {"tol", "max_iter"},
    "scheme": {"stencil", "inflow_sign"},
    "optimize": {f.name.lower() for f in fields(OptimizeConfig)},
    "lattice": {f.name.lower() for f in fields(LatticeConfig)},
    "output": {"directory", "precision"},
}


def parse_config_string(text: str, path=None) -> RunConfig:
    """Parse and validate configuration text; see :func:`parse_config`."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",), interpolation=None)
    try:
        cp.read_string(text, source=str(path or "<string>"))
    except configparser.MissingSectionHeaderError as exc:
        raise ParseError("text before the first [section] header", exc.lineno, path) from None
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as exc:
        raise ParseError(exc.message.split(": ", 1)[-1], exc.lineno, path) from None
    except configparser.ParsingError as exc:
        lineno, line = exc.errors[0]
        raise ParseError(f"cannot parse line {line!r}", lineno, path) from None
    rd = _Reader(cp, text.splitlines(), path)

    for section in cp.sections():
        if section not in _KNOWN:
            rd.fail(f"unknown section [{section}]", section)
        allowed = _KNOWN[section]
        for key in cp.options(section):
            if allowed is None:
                if not re.fullmatch(r"w\d+", key):
                    rd.fail(f"[{section}] expects keys w0..wn, got {key!r}", section, key)
            elif key not in allowed:
                rd.fail(f"unknown option {key!r} in [{section}]", section, key)

    K = rd.get("model", "K", _table, required=True)
    if any(len(r) != len(K) for r in K):
        rd.fail("K must be a square table", "model", "K")
    n = rd.get("model", "n", _int)
    if n is not None and n + 1 != len(K):
        rd.fail(f"n = {n} but K has {len(K)} rows", "model", "n")
    b = len(K)
    try:
        check_kmatrix(np.array(K))
    except ValueError as exc:
        raise ValidationError(str(exc)) from None

    Q = rd.get("grid", "Q", _int, required=True)
    M = rd.get("grid", "M", _int, required=True)
    T = rd.get("grid", "T", float, required=True)
    e0 = rd.get("grid", "e0", float, 1.0)
    if Q < 3:
        raise ValidationError("Q must be at least 3")
    if M < 1 or not T > 0:
        raise ValidationError("need M >= 1 and T > 0")
    if not e0 > 0:
        raise ValidationError("e0 must be positive")

    kind = rd.get("fluxes", "kind", str.strip, required=True).lower()
    bound = rd.get("fluxes", "bound", float, math.inf)
    if kind == "constant":
        beta = rd.get("fluxes", "beta", _row, required=True)
        if len(beta) != b:
            raise ValidationError(f"beta needs {b} entries")
        flux = FluxConfig("constant", beta=beta, bound=bound)
    elif kind == "piecewise":
        breaks = rd.get("fluxes", "breaks", _table, required=True)
        if len(breaks) == 1:
            breaks = breaks * b
        levels = [rd.get("fluxes", f"alpha{k}", _row, required=True) for k in (1, 2, 3)]
        if len(breaks) != b or any(len(r) != 2 for r in breaks):
            raise ValidationError(f"breaks needs one (tau1, tau2) pair or {b} rows of pairs")
        if any(len(lv) != b for lv in levels):
            raise ValidationError(f"alpha1..alpha3 need {b} entries each")
        flux = FluxConfig("piecewise", breaks=tuple(tuple(r) for r in breaks),
                          levels=tuple(zip(*levels)), bound=bound)
    elif kind == "zero":
        flux = FluxConfig("zero", bound=bound)
    else:
        rd.fail(f"unknown flux kind {kind!r} (constant, piecewise, zero)", "fluxes", "kind")
    try:
        flux.schedule(b)
    except ValueError as exc:
        raise ValidationError(str(exc)) from None

    if not rd.has("initial"):
        raise ParseError("missing section [initial]", path=path)
    initial = []
    for i in range(b):
        prof = rd.get("initial", f"w{i}", parse_profile)
        if prof is None:
            rd.fail(f"missing initial profile w{i}", "initial")
        initial.append(prof)
    extra = [k for k in cp.options("initial") if int(k[1:]) >= b]
    if extra:
        rd.fail(f"profile {extra[0]} exceeds the {b} species", "initial", extra[0])

    opt = None
    if rd.has("optimize"):
        d = {}
        for f in fields(OptimizeConfig):
            conv = {"targets": str.strip, "max_outer": _int,
                    "include_species0": _bool}.get(f.name, float)
            v = rd.get("optimize", f.name, conv)
            if v is not None:
                d[f.name] = v
        opt = OptimizeConfig(**d)
        if opt.targets != "generate" and opt.e_opt is None:
            raise ValidationError("targets read from a file need e_opt")
        if not opt.F > 0 or opt.eps_J < 0 or opt.nu_grad < 0 or opt.max_outer < 0:
            raise ValidationError("optimize needs F > 0 and nonnegative tolerances")

    lat = None
    if rd.has("lattice"):
        p = rd.get("lattice", "p", _table, required=True)
        d = {"p": p}
        for f in fields(LatticeConfig):
            if f.name == "p":
                continue
            conv = float if f.name in ("a", "T") else _int
            v = rd.get("lattice", f.name, conv)
            if v is not None:
                d[f.name] = v
        lat = LatticeConfig(**d)
        P = np.array(p)
        if P.shape != (b, b) or not np.array_equal(P, P.T) or np.any(P < 0) or np.any(P > 1):
            raise ValidationError(
                "lattice p must be a symmetric (n+1)x(n+1) table with entries in [0, 1]")
        if lat.L % lat.bins:
            raise ValidationError("lattice bins must divide L")

    stencil = rd.get("scheme", "stencil", str.strip, "corrected")
    inflow = rd.get("scheme", "inflow_sign", float, -1.0)
    try:
        Scheme(stencil=stencil, inflow_sign=inflow)
    except ValueError as exc:
        raise ValidationError(str(exc)) from None

    cfg = RunConfig(
        K=K, Q=Q, M=M, T=T, e0=e0, fluxes=flux, initial=tuple(initial),
        newton_tol=rd.get("newton", "tol", float, 1e-10),
        newton_max_iter=rd.get("newton", "max_iter", _int, 50),
        stencil=stencil, inflow_sign=inflow, optimize=opt, lattice=lat,
        directory=rd.get("output", "directory", str.strip, "runs"),
        precision=rd.get("output", "precision", _int, 17),
    )
    if not 1 <= cfg.precision <= 17:
        raise ValidationError("precision must lie in 1..17")
    try:
        cfg.newton()
    except ValueError as exc:
        raise ValidationError(str(exc)) from None
    return cfg


def parse_config(path) -> RunConfig:
    """Read a ``.cfg`` file; raises :class:`ParseError` or :class:`ValidationError`."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read configuration: {exc.strerror}", path=path) from None
    return parse_config_string(text, path)


def _emit_row(row):
    return ", ".join(_fmt(v) for v in row)


def _emit_table(rows, indent="    "):
    return "\n" + "\n".join(indent + _emit_row(r) for r in rows)


def emit_config(cfg: RunConfig) -> str:
    """Serialize a configuration; parsing the result gives back an equal config."""
    out = ["[model]", f"n = {cfg.n_species - 1}", "K =" + _emit_table(cfg.K), ""]
    out += ["[grid]", f"Q = {cfg.Q}", f"M = {cfg.M}", f"T = {_fmt(cfg.T)}",
            f"e0 = {_fmt(cfg.e0)}", ""]
    fl = cfg.fluxes
    out += ["[fluxes]", f"kind = {fl.kind}"]
    if fl.kind == "constant":
        out.append(f"beta = {_emit_row(fl.beta)}")
    elif fl.kind == "piecewise":
        out.append("breaks =" + _emit_table(fl.breaks))
        for k in range(3):
            out.append(f"alpha{k + 1} = {_emit_row([lv[k] for lv in fl.levels])}")
    if not math.isinf(fl.bound):
        out.append(f"bound = {_fmt(fl.bound)}")
    out.append("")
    out.append("[initial]")
    out += [f"w{i} = {p.text()}" for i, p in enumerate(cfg.initial)]
    out += ["", "[newton]", f"tol = {_fmt(cfg.newton_tol)}", f"max_iter = {cfg.newton_max_iter}",
            "", "[scheme]", f"stencil = {cfg.stencil}", f"inflow_sign = {_fmt(cfg.inflow_sign)}",
            ""]
    if cfg.optimize is not None:
        out.append("[optimize]")
        for f in fields(OptimizeConfig):
            v = getattr(cfg.optimize, f.name)
            if v is not None:
                out.append(f"{f.name} = {v if isinstance(v, str) else _fmt(v)}")
        out.append("")
    if cfg.lattice is not None:
        out += ["[lattice]", "p =" + _emit_table(cfg.lattice.p)]
        for f in fields(LatticeConfig):
            if f.name != "p":
                out.append(f"{f.name} = {_fmt(getattr(cfg.lattice, f.name))}")
        out.append("")
    out += ["[output]", f"directory = {cfg.directory}", f"precision = {cfg.precision}", ""]
    return "\n".join(out)

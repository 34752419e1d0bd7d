"""Scenario files: YAML in, validated frozen dataclasses out, and back.

Every key is optional except where a choice needs a companion value (a table
initial condition needs ``path``).  Unknown keys anywhere are errors, so a
typo never silently falls back to a default.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import yaml
from scipy.integrate import trapezoid

from .errors import CCBEError, ConfigurationError, InadmissibleParameters
from .grid import Grid, build_grid, default_v_min, weight_integrals
from .integrator import IntegratorConfig, Method
from .kernel_model import (
    AdmissibilityReport,
    DaughterSpec,
    EfficiencySpec,
    KernelFamily,
    KernelSpec,
    check_admissibility,
)
from .operators import TestFunction

INITIAL_KINDS = ("exponential", "pulse", "table", "zero")


@dataclass(frozen=True)
class InitialSpec:
    """Initial density: ``c exp(-v/mu)``, a pulse of ``number`` particles in
    the cell holding ``volume``, a (v, g) table read from ``path``, or zero."""

    kind: str = "exponential"
    c: float = 1.0
    mu: float = 1.0
    volume: float = 1.0
    number: float = 1.0
    path: str | None = None


@dataclass(frozen=True)
class GridSpec:
    n: float = 10.0
    cells: int = 256
    v_min: float | None = None

    def resolved_v_min(self):
        return default_v_min(self.n) if self.v_min is None else self.v_min


@dataclass(frozen=True)
class OutputSpec:
    directory: str = "ccbe-out"
    # write a density snapshot at every k-th save time (the last one always)
    snapshot_stride: int = 1


@dataclass(frozen=True)
class DiagnosticsSpec:
    balance_tol: float = 1e-8
    allow_inadmissible_efficiency: bool = False
    test_functions: tuple[str, ...] = ("one", "indicator:0.5,2.0", "min1")
    weak_placement: str = "pivot"
    lam: float = 1.0

    def family(self):
        return tuple(parse_test_function(s) for s in self.test_functions)


@dataclass(frozen=True)
class Scenario:
    kernel: KernelSpec = field(default_factory=KernelSpec)
    efficiency: EfficiencySpec = field(default_factory=EfficiencySpec)
    daughter: DaughterSpec = field(default_factory=DaughterSpec)
    initial: InitialSpec = field(default_factory=InitialSpec)
    grid: GridSpec = field(default_factory=GridSpec)
    tau: int = 1
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    output: OutputSpec = field(default_factory=OutputSpec)
    diagnostics: DiagnosticsSpec = field(default_factory=DiagnosticsSpec)
    # directory used to resolve relative table paths; not serialised
    base_dir: str = field(default=".", compare=False)

    def admissibility(self) -> AdmissibilityReport:
        return check_admissibility(self.kernel, self.efficiency, self.daughter)

    def build_grid(self) -> Grid:
        return build_grid(self.grid.n, self.grid.cells, self.grid.v_min)


def parse_test_function(text):
    """``one``, ``min1``, ``identity`` or ``indicator:a,b``."""
    kind, _, args = str(text).partition(":")
    kind = kind.strip()
    try:
        if kind == "indicator":
            a, b = (float(x) for x in args.split(","))
            return TestFunction("indicator", a, b)
        if args:
            raise ValueError(args)
        return TestFunction(kind)
    except (ValueError, CCBEError) as exc:
        raise ConfigurationError(f"malformed test function {text!r}") from exc


# -- raw mapping -> dataclasses ----------------------------------------------

_SECTIONS = {
    "kernel": ("family", "alpha", "k", "scale"),
    "daughter": ("theta",),
    "initial": tuple(f.name for f in fields(InitialSpec)),
    "grid": tuple(f.name for f in fields(GridSpec)),
    "truncation": ("tau",),
    "integrator": tuple(f.name for f in fields(IntegratorConfig)),
    "output": tuple(f.name for f in fields(OutputSpec)),
    "diagnostics": tuple(f.name for f in fields(DiagnosticsSpec)),
}
_SCALARS = ("efficiency",)


def _check_keys(raw):
    if not isinstance(raw, dict):
        raise ConfigurationError("scenario file must be a mapping of sections")
    for key, value in raw.items():
        if key in _SCALARS:
            continue
        if key not in _SECTIONS:
            raise ConfigurationError(f"unknown scenario section {key!r}")
        if value is None:
            continue
        if not isinstance(value, dict):
            raise ConfigurationError(f"section {key!r} must be a mapping")
        for sub in value:
            if sub not in _SECTIONS[key]:
                raise ConfigurationError(f"unknown key {key}.{sub}")


def _num(section, key, value, kind=float, allow_none=False):
    if value is None and allow_none:
        return None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigurationError(f"{section}.{key} must be a number, got {value!r}")
    if kind is int:
        if float(value) != int(value):
            raise ConfigurationError(f"{section}.{key} must be an integer, got {value!r}")
        return int(value)
    out = float(value)
    if not math.isfinite(out):
        raise ConfigurationError(f"{section}.{key} must be finite, got {value!r}")
    return out


def _section(raw, name):
    return raw.get(name) or {}


def scenario_from_mapping(raw, base_dir=".") -> Scenario:
    """Validate a raw mapping; parameter checks that fail raise with the report attached."""
    _check_keys(raw)
    try:
        k = _section(raw, "kernel")
        kernel = KernelSpec(
            family=KernelFamily(k.get("family", KernelFamily.SINGULAR_BOUND.value)),
            alpha=_num("kernel", "alpha", k.get("alpha", 0.25)),
            k=_num("kernel", "k", k.get("k", 1.0), allow_none=True),
            scale=_num("kernel", "scale", k.get("scale", 1.0)),
        )
        eff_raw = raw.get("efficiency", "constant:0.7")
        if isinstance(eff_raw, (int, float)) and not isinstance(eff_raw, bool):
            eff_raw = f"constant:{eff_raw}"
        efficiency = EfficiencySpec.parse(eff_raw)
        daughter = DaughterSpec(theta=_num("daughter", "theta", _section(raw, "daughter").get("theta", 0.0)))
    except ValueError as exc:
        # InadmissibleParameters is a ValueError too; keep its report
        if isinstance(exc, InadmissibleParameters):
            raise
        raise ConfigurationError(str(exc)) from exc

    i = _section(raw, "initial")
    initial = InitialSpec(
        kind=str(i.get("kind", "exponential")),
        c=_num("initial", "c", i.get("c", 1.0)),
        mu=_num("initial", "mu", i.get("mu", 1.0)),
        volume=_num("initial", "volume", i.get("volume", 1.0)),
        number=_num("initial", "number", i.get("number", 1.0)),
        path=None if i.get("path") is None else str(i["path"]),
    )
    if initial.kind not in INITIAL_KINDS:
        raise ConfigurationError(f"initial.kind must be one of {INITIAL_KINDS}, got {initial.kind!r}")
    if initial.kind == "table" and initial.path is None:
        raise ConfigurationError("initial.kind=table requires initial.path")
    if initial.c < 0 or initial.number < 0:
        raise ConfigurationError("initial amplitude must be nonnegative")
    if initial.mu <= 0 or initial.volume <= 0:
        raise ConfigurationError("initial.mu and initial.volume must be positive")

    gr = _section(raw, "grid")
    grid = GridSpec(
        n=_num("grid", "n", gr.get("n", 10.0)),
        cells=_num("grid", "cells", gr.get("cells", 256), kind=int),
        v_min=_num("grid", "v_min", gr.get("v_min"), allow_none=True),
    )
    tau = _num("truncation", "tau", _section(raw, "truncation").get("tau", 1), kind=int)
    if tau not in (0, 1):
        raise ConfigurationError(f"truncation.tau must be 0 or 1, got {tau}")

    it = _section(raw, "integrator")
    defaults = IntegratorConfig()
    try:
        method = Method(it.get("method", defaults.method.value))
    except ValueError as exc:
        raise ConfigurationError(f"unknown integrator.method {it.get('method')!r}") from exc
    integrator = IntegratorConfig(
        method=method,
        dt_init=_num("integrator", "dt_init", it.get("dt_init"), allow_none=True),
        rel_tol=_num("integrator", "rel_tol", it.get("rel_tol", defaults.rel_tol)),
        abs_tol=_num("integrator", "abs_tol", it.get("abs_tol", defaults.abs_tol)),
        t_end=_num("integrator", "t_end", it.get("t_end", defaults.t_end)),
        save_every=_num("integrator", "save_every", it.get("save_every", defaults.save_every)),
        max_steps=_num("integrator", "max_steps", it.get("max_steps", defaults.max_steps), kind=int),
    )

    o = _section(raw, "output")
    output = OutputSpec(
        directory=str(o.get("directory", OutputSpec.directory)),
        snapshot_stride=_num("output", "snapshot_stride", o.get("snapshot_stride", 1), kind=int),
    )
    if output.snapshot_stride < 1:
        raise ConfigurationError("output.snapshot_stride must be >= 1")

    d = _section(raw, "diagnostics")
    tf = d.get("test_functions", list(DiagnosticsSpec.test_functions))
    if not isinstance(tf, (list, tuple)) or not tf:
        raise ConfigurationError("diagnostics.test_functions must be a non-empty list")
    allow = d.get("allow_inadmissible_efficiency", False)
    if not isinstance(allow, bool):
        raise ConfigurationError("diagnostics.allow_inadmissible_efficiency must be true or false")
    diagnostics = DiagnosticsSpec(
        balance_tol=_num("diagnostics", "balance_tol", d.get("balance_tol", 1e-8)),
        allow_inadmissible_efficiency=allow,
        test_functions=tuple(str(s) for s in tf),
        weak_placement=str(d.get("weak_placement", "pivot")),
        lam=_num("diagnostics", "lam", d.get("lam", 1.0)),
    )
    diagnostics.family()
    if diagnostics.weak_placement not in ("pivot", "exact"):
        raise ConfigurationError("diagnostics.weak_placement must be 'pivot' or 'exact'")

    sc = Scenario(
        kernel=kernel,
        efficiency=efficiency,
        daughter=daughter,
        initial=initial,
        grid=grid,
        tau=tau,
        integrator=integrator,
        output=output,
        diagnostics=diagnostics,
        base_dir=str(base_dir),
    )
    validate(sc)
    return sc


def validate(sc: Scenario):
    """Admissibility and grid checks that need the assembled scenario."""
    report = sc.admissibility()
    gate = report.passes
    if sc.diagnostics.allow_inadmissible_efficiency:
        gate = report.passes_A1 and report.passes_A3
    if not gate:
        raise InadmissibleParameters("inadmissible parameters: " + "; ".join(report.reasons), report)
    try:
        grid = sc.build_grid()
    except CCBEError as exc:
        raise ConfigurationError(str(exc)) from exc
    note = initial_truncation(sc, grid)
    if not (math.isfinite(note["M1_grid"]) and math.isfinite(note["M_-2alpha_grid"])):
        report.passes_A4 = False
        raise InadmissibleParameters("initial data not in L1 with weights v**-2alpha and v", report)


# -- overrides and text round-trip -------------------------------------------


def apply_overrides(raw, overrides):
    """Apply ``section.key=value`` strings; values are parsed as YAML scalars."""
    raw = dict(raw or {})
    for item in overrides or ():
        key, sep, value = str(item).partition("=")
        if not sep or not key.strip():
            raise ConfigurationError(f"override must look like section.key=value, got {item!r}")
        parts = key.strip().split(".")
        try:
            parsed = yaml.safe_load(value)
        except yaml.YAMLError as exc:
            raise ConfigurationError(f"cannot parse override value {value!r}") from exc
        if len(parts) == 1:
            raw[parts[0]] = parsed
        elif len(parts) == 2:
            section = dict(raw.get(parts[0]) or {})
            section[parts[1]] = parsed
            raw[parts[0]] = section
        else:
            raise ConfigurationError(f"override key nests too deep: {key!r}")
    return raw


def parse_scenario_text(text, overrides=(), base_dir="."):
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"malformed scenario file: {exc}") from exc
    raw = {} if raw is None else raw
    if not isinstance(raw, dict):
        raise ConfigurationError("scenario file must be a mapping of sections")
    return scenario_from_mapping(apply_overrides(raw, overrides), base_dir=base_dir)


def parse_scenario(path, overrides=()) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read scenario file {path}: {exc}") from exc
    return parse_scenario_text(text, overrides, base_dir=path.parent)


def scenario_to_mapping(sc: Scenario):
    return {
        "kernel": {
            "family": sc.kernel.family.value,
            "alpha": sc.kernel.alpha,
            "k": sc.kernel.k,
            "scale": sc.kernel.scale,
        },
        "efficiency": sc.efficiency.format(),
        "daughter": {"theta": sc.daughter.theta},
        "initial": asdict(sc.initial),
        "grid": asdict(sc.grid),
        "truncation": {"tau": sc.tau},
        "integrator": {**asdict(sc.integrator), "method": sc.integrator.method.value},
        "output": asdict(sc.output),
        "diagnostics": {**asdict(sc.diagnostics), "test_functions": list(sc.diagnostics.test_functions)},
    }


def emit_scenario(sc: Scenario) -> str:
    return yaml.safe_dump(scenario_to_mapping(sc), sort_keys=False)


def with_overrides(sc: Scenario, **sections):
    """Copy of ``sc`` with whole sections replaced, re-validated."""
    out = replace(sc, **sections)
    validate(out)
    return out


# -- initial data --------------------------------------------------------------


def _read_table(sc: Scenario):
    path = Path(sc.initial.path)
    if not path.is_absolute():
        path = Path(sc.base_dir) / path
    try:
        with path.open(newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
    except OSError as exc:
        raise ConfigurationError(f"cannot read initial table {path}: {exc}") from exc
    try:
        data = np.array([[float(x) for x in r[:2]] for r in rows if _is_numeric(r[0])])
    except (ValueError, IndexError) as exc:
        raise ConfigurationError(f"initial table {path} needs two numeric columns v,g") from exc
    if data.ndim != 2 or data.shape[0] < 2:
        raise ConfigurationError(f"initial table {path} needs at least two rows")
    v, g = data[:, 0], data[:, 1]
    if np.any(np.diff(v) <= 0) or np.any(g < 0) or v[0] < 0:
        raise ConfigurationError(f"initial table {path} needs increasing v >= 0 and g >= 0")
    return v, g


def _is_numeric(s):
    try:
        float(s)
    except ValueError:
        return False
    return True


def initial_density(sc: Scenario, grid: Grid):
    """Cell values of the initial density, truncated to the mesh (0 outside (v_min, n))."""
    ini = sc.initial
    lo, hi = grid.edges[:-1], grid.edges[1:]
    if ini.kind == "zero":
        return np.zeros(grid.cells)
    if ini.kind == "exponential":
        # exact cell average of c exp(-v/mu)
        return ini.c * ini.mu * (np.exp(-lo / ini.mu) - np.exp(-hi / ini.mu)) / grid.widths
    if ini.kind == "pulse":
        g = np.zeros(grid.cells)
        if grid.v_min <= ini.volume < grid.n:
            i = min(int(np.searchsorted(grid.edges, ini.volume, side="right")) - 1, grid.cells - 1)
            g[i] = ini.number / grid.widths[i]
        return g
    v, table = _read_table(sc)
    return np.interp(grid.reps, v, table, left=0.0, right=0.0)


def initial_truncation(sc: Scenario, grid: Grid):
    """What the mesh keeps of the initial data and what falls below v_min or above n."""
    g = initial_density(sc, grid)
    alpha = sc.kernel.alpha
    note = {
        "M1_grid": float(np.dot(g, weight_integrals(grid, 1.0))),
        "M_-2alpha_grid": float(np.dot(g, weight_integrals(grid, -2.0 * alpha))),
        "number_below_v_min": 0.0,
        "mass_below_v_min": 0.0,
        "mass_above_n": 0.0,
    }
    ini = sc.initial
    if ini.kind == "exponential":
        c, mu, a = ini.c, ini.mu, grid.v_min
        note["number_below_v_min"] = c * mu * -math.expm1(-a / mu)
        note["mass_below_v_min"] = c * mu * (mu - (mu + a) * math.exp(-a / mu))
        note["mass_above_n"] = c * mu * (mu + grid.n) * math.exp(-grid.n / mu)
    elif ini.kind == "pulse":
        if ini.volume < grid.v_min:
            note["number_below_v_min"] = ini.number
            note["mass_below_v_min"] = ini.number * ini.volume
        elif ini.volume >= grid.n:
            note["mass_above_n"] = ini.number * ini.volume
    elif ini.kind == "table":
        v, table = _read_table(sc)
        below = np.linspace(v[0], min(grid.v_min, v[-1]), 257) if v[0] < grid.v_min else None
        above = np.linspace(max(grid.n, v[0]), v[-1], 257) if v[-1] > grid.n else None
        # trapezoid on the linear interpolant, fine enough for a report
        if below is not None:
            yb = np.interp(below, v, table)
            note["number_below_v_min"] = float(trapezoid(yb, below))
            note["mass_below_v_min"] = float(trapezoid(below * yb, below))
        if above is not None:
            note["mass_above_n"] = float(trapezoid(above * np.interp(above, v, table), above))
    return note


__all__ = [
    "DiagnosticsSpec",
    "GridSpec",
    "InitialSpec",
    "OutputSpec",
    "Scenario",
    "apply_overrides",
    "emit_scenario",
    "initial_density",
    "initial_truncation",
    "parse_scenario",
    "parse_scenario_text",
    "parse_test_function",
    "scenario_from_mapping",
    "validate",
    "with_overrides",
]

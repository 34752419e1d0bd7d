"""Batch execution of one scenario and of a truncation-size convergence study."""

from __future__ import annotations

import csv
import json
import logging
import math
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .diagnostics import (
    convergence_metric,
    convex_moment,
    equicontinuity_ratios,
    gronwall_bounds,
    loss_integral,
    moment_series,
    observed_bound_sup,
    weak_residual,
    weighted_norm,
)
from .errors import ConfigurationError, IntegrationFailure
from .grid import TruncationConfig, default_v_min, weight_integrals
from .integrator import Trajectory, integrate
from .operators import State, TestFunction, build_tables
from .scenario import GridSpec, Scenario, emit_scenario, initial_density, initial_truncation

logger = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = "CCBE_OUTPUT_ROOT"

EXIT_OK = 0
EXIT_INVARIANT = 1
EXIT_CONFIG = 2
EXIT_INTEGRATION = 3

FLOAT_FORMAT = "%.17g"


def fmt(x):
    """17 significant digits: every double survives a text round trip."""
    return FLOAT_FORMAT % x


def resolve_output_dir(directory):
    path = Path(directory)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not path.is_absolute():
        path = Path(root) / path
    return path


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(x) if isinstance(x, float) else x for x in r])


def _json_safe(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else str(obj)
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return _json_safe(obj.item())
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    return obj


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_json_safe(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


@dataclass
class RunResult:
    exit_code: int
    directory: Path | None
    trajectory: Trajectory | None = None
    violations: list[str] = field(default_factory=list)
    report: dict = field(default_factory=dict)


def prepare(sc: Scenario):
    """Grid, kernel tables and initial state for ``sc``."""
    grid = sc.build_grid()
    strict = not sc.diagnostics.allow_inadmissible_efficiency
    tables = build_tables(grid, TruncationConfig(grid.n, sc.tau), sc.kernel, sc.efficiency, sc.daughter, strict=strict)
    return grid, tables, State(g=initial_density(sc, grid))


def simulate(sc: Scenario):
    """Prepare and integrate; no files written."""
    grid, tables, initial = prepare(sc)
    return grid, tables, initial, integrate(initial, sc.integrator, tables)


def _snapshot_name(t):
    return f"density_{t:.6f}.csv"


def write_grid(path, grid):
    rows = [(i, float(a), float(b), float(x), float(w)) for i, (a, b, x, w) in
            enumerate(zip(grid.edges[:-1], grid.edges[1:], grid.reps, grid.widths))]
    write_csv(path, ["cell", "v_lo", "v_hi", "rep", "width"], rows)


def write_density(path, state, grid):
    rows = [(float(a), float(b), float(x), float(g)) for a, b, x, g in
            zip(grid.edges[:-1], grid.edges[1:], grid.reps, state.g)]
    write_csv(path, ["v_lo", "v_hi", "rep", "g"], rows)


def read_density(path):
    """Cell values ``g`` from a density snapshot."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return np.array([float(r["g"]) for r in rows])


def _diagnose(sc, grid, tables, traj):
    """Derived reports plus the list of hard-invariant violations."""
    states = traj.states
    alpha = sc.kernel.alpha
    series = moment_series(states, grid, alpha)
    violations = []

    negative = [s.t for s in states if np.any(s.g < 0)]
    if negative:
        violations.append(f"negative density at t={negative[0]:.6g}")
    worst_balance = max(series.column("balance_residual"))
    if worst_balance > sc.diagnostics.balance_tol:
        violations.append(f"mass balance residual {worst_balance:.3g} exceeds {sc.diagnostics.balance_tol:.3g}")

    g0 = states[0]
    n1 = float(np.dot(g0.g, weight_integrals(grid, 1.0)))
    bounds = gronwall_bounds(
        sc.kernel,
        sc.daughter,
        alpha,
        N1_in=n1,
        norm_in=weighted_norm(g0, grid, alpha),
        T=sc.integrator.t_end,
        lam=sc.diagnostics.lam,
        upsilon1=convex_moment(g0, grid),
    )
    bounds.observed_sup = observed_bound_sup(states, grid, alpha)
    if not bounds.satisfied:
        violations.append(f"weighted moment {bounds.observed_sup:.6g} exceeds bound {bounds.B_T:.6g}")

    report = {"bounds": bounds.as_dict()}
    convex_sup = max(convex_moment(s, grid) for s in states)
    report["convex_moment"] = {"sup": convex_sup, "G_T": bounds.G_T, "satisfied": convex_sup <= bounds.G_T}

    family = sc.diagnostics.family()
    if len(states) >= 2 and bounds.Theta > 0:
        ratio = equicontinuity_ratios(traj, grid, alpha, bounds.Theta, sc.diagnostics.lam, family)
        report["equicontinuity"] = {"worst_ratio": ratio, "satisfied": ratio <= 1.0}
    if len(states) >= 3:
        weak = {}
        for h in family + (TestFunction("identity"),):
            rel, lhs, rhs = weak_residual(traj, tables, h, sc.diagnostics.weak_placement)
            weak[h.label] = {"relative": rel, "lhs": lhs, "rhs": rhs}
        report["weak_residual"] = {"placement": sc.diagnostics.weak_placement, "by_test_function": weak}
    if sc.tau == 0:
        audit = loss_integral(traj, grid, sc.kernel, grid.n)
        lost = states[-1].lost_mass
        rel = abs(audit[-1] - lost) / lost if lost > 0 else abs(audit[-1])
        report["loss_audit"] = {"lost_mass": lost, "requadratured": float(audit[-1]), "relative": rel}
    return series, report, violations


def run(sc: Scenario, out_dir=None) -> RunResult:
    """Integrate ``sc`` and write every artefact; the exit code follows the CLI contract."""
    out = resolve_output_dir(out_dir if out_dir is not None else sc.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    (out / "scenario.yaml").write_text(emit_scenario(sc))

    grid = sc.build_grid()
    adm = sc.admissibility().as_dict()
    adm["initial_truncation"] = initial_truncation(sc, grid)
    write_json(out / "admissibility.json", adm)
    write_grid(out / "grid.csv", grid)

    grid, tables, initial = prepare(sc)
    exit_code = EXIT_OK
    failure = None
    try:
        traj = integrate(initial, sc.integrator, tables)
    except IntegrationFailure as exc:
        failure = str(exc)
        exit_code = EXIT_INTEGRATION
        traj = exc.trajectory
        if traj is None:
            write_json(out / "summary.json", {"exit_code": exit_code, "failure": failure})
            return RunResult(exit_code, out, None, [failure])

    series, report, violations = _diagnose(sc, grid, tables, traj)
    write_csv(out / "moments.csv", series.columns, [[r[c] for c in series.columns] for r in series.rows])
    stride = sc.output.snapshot_stride
    for k, state in enumerate(traj.states):
        if k % stride == 0 or k == len(traj.states) - 1:
            write_density(out / _snapshot_name(state.t), state, grid)
    write_json(out / "bounds.json", report)

    if violations and exit_code == EXIT_OK:
        exit_code = EXIT_INVARIANT
    summary = {"exit_code": exit_code, "violations": violations, "saved_states": len(traj.states)}
    if failure:
        summary["failure"] = failure
    write_json(out / "summary.json", summary)
    for v in violations:
        logger.warning("invariant violated: %s", v)
    return RunResult(exit_code, out, traj, violations, report)


# -- convergence study ---------------------------------------------------------


def scaled_grid(base: GridSpec, n):
    """Grid for truncation size ``n`` keeping the base geometric ratio."""
    v0 = base.resolved_v_min()
    v_min = default_v_min(n) if base.v_min is None else base.v_min
    if not 0 < v_min < n:
        raise ConfigurationError(f"v_min={v_min} does not fit below n={n}")
    cells = max(8, round(base.cells * math.log(n / v_min) / math.log(base.n / v0)))
    return GridSpec(n=float(n), cells=int(cells), v_min=base.v_min)


@dataclass
class ConvergenceResult:
    pairs: list[dict]
    cross: list[dict]
    exit_code: int = EXIT_OK


def convergence_study(base: Scenario, n_list, out_dir=None) -> ConvergenceResult:
    """Run ``base`` at each n with both truncations and compare consecutive sizes."""
    n_list = [float(n) for n in n_list]
    if len(n_list) < 3:
        raise ConfigurationError("convergence study needs at least three truncation sizes")
    if any(b < a for a, b in zip(n_list, n_list[1:])):
        raise ConfigurationError("truncation sizes must be non-decreasing")
    runs = {}
    for n in dict.fromkeys(n_list):
        for tau in (0, 1):
            sc = replace(base, grid=scaled_grid(base.grid, n), tau=tau)
            grid, _, _, traj = simulate(sc)
            runs[(n, tau)] = (grid, traj)
            logger.info("converge: n=%g tau=%d cells=%d done", n, tau, grid.cells)

    alpha = base.kernel.alpha
    family = base.diagnostics.family()
    pairs = []
    for a, b in zip(n_list, n_list[1:]):
        for tau in (0, 1):
            ga, ta = runs[(a, tau)]
            gb, tb = runs[(b, tau)]
            pairs.append({"n_a": a, "n_b": b, "tau": tau,
                          "metric": convergence_metric(ta, tb, ga, gb, alpha, family)})
    cross = []
    for n in dict.fromkeys(n_list):
        g0, t0 = runs[(n, 0)]
        _, t1 = runs[(n, 1)]
        cross.append({"n": n, "cross_distance": convergence_metric(t0, t1, g0, g0, alpha, family),
                      "lost_mass_tau0": t0.states[-1].lost_mass})

    if out_dir is not None:
        out = resolve_output_dir(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "convergence.csv", ["kind", "n_a", "n_b", "tau", "value"],
                  [["pair", p["n_a"], p["n_b"], p["tau"], p["metric"]] for p in pairs]
                  + [["cross", c["n"], c["n"], "0-1", c["cross_distance"]] for c in cross])
    return ConvergenceResult(pairs=pairs, cross=cross)

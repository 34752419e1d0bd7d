"""Moments, a-priori bounds, weak-form residuals and truncation-convergence metrics."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DomainError
from .grid import Grid, power_integrals, weight_integrals
from .kernel_model import DaughterSpec, KernelSpec, compute_eta, eval_phi
from .operators import KernelTables, State, TestFunction, discrete_mass, weak_form_rhs

# exponent of the fixed superlinear weight v**1.5 used for the tail-moment check
CONVEX_EXPONENT = 1.5

DEFAULT_FAMILY = (
    TestFunction("one"),
    TestFunction("indicator", 0.5, 2.0),
    TestFunction("min1"),
)


def moment_orders(alpha):
    return (-2.0 * alpha, -alpha, 0.0, 1.0, 2.0)


def moments(state: State, grid: Grid, alpha):
    """One row of moments; M_p uses exact cell integrals of v**p.

    ``mass`` is the scheme's own mass (particles at the representatives); it
    is the quantity the balance identity is exact for.
    """
    row = {"t": state.t}
    for p in moment_orders(alpha):
        row[_mname(p, alpha)] = float(np.dot(state.g, weight_integrals(grid, p)))
    row["mass"] = discrete_mass(state.g, grid)
    row["lost_mass"] = state.lost_mass
    row["subgrid_mass"] = state.subgrid_mass
    row["subgrid_number"] = state.subgrid_number
    return row


def _mname(p, alpha):
    if p == -2.0 * alpha:
        return "M_-2alpha"
    if p == -alpha:
        return "M_-alpha"
    return f"M_{int(p)}"


@dataclass
class MomentSeries:
    columns: list[str]
    rows: list[dict]

    def column(self, name):
        return np.array([r[name] for r in self.rows])


def moment_series(states, grid: Grid, alpha):
    rows = [moments(s, grid, alpha) for s in states]
    m0 = rows[0]["mass"]
    for r in rows:
        total = r["mass"] + r["lost_mass"] + r["subgrid_mass"]
        r["balance_residual"] = abs(total - m0) / m0 if m0 > 0 else abs(total)
    cols = list(rows[0].keys())
    return MomentSeries(columns=cols, rows=rows)


# -- a-priori bounds ---------------------------------------------------------


@dataclass
class BoundReport:
    a: float
    b: float
    B1_T: float
    B_T: float
    G_T: float
    Theta: float
    T: float
    lam: float
    observed_sup: float = float("nan")

    @property
    def satisfied(self):
        return bool(self.observed_sup <= self.B_T)

    def as_dict(self):
        d = asdict(self)
        d["satisfied"] = self.satisfied
        return d


def _safe_exp(x):
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


def gronwall_bounds(
    kernel: KernelSpec,
    daughter: DaughterSpec,
    alpha,
    N1_in,
    norm_in,
    T,
    lam=1.0,
    upsilon1=0.0,
):
    """Explicit constants bounding the weighted moment, the v**1.5 moment and time increments."""
    k = kernel.k
    eta = compute_eta(daughter, alpha)
    a = 4.0 * k * N1_in * (1.0 + eta)
    b = 2.0 * k * N1_in**2 * (2.0 + eta)
    growth = _safe_exp(a * T)
    if a > 0:
        B1 = growth * norm_in + (b / a) * (growth - 1.0)
    else:
        B1 = norm_in + b * T
    B = B1 + N1_in
    th = daughter.theta
    theta_const = 0.5 * k * (3.0 * (1.0 + lam) + 13.0 * (th + 2.0) / (th + 1.0 - alpha)) * B**2
    gamma1_at_1 = 1.0
    G = (upsilon1 + 48.0 * k * gamma1_at_1 * B**2 * T) * _safe_exp(40.0 * k * B * T)
    return BoundReport(a=a, b=b, B1_T=B1, B_T=B, G_T=G, Theta=theta_const, T=T, lam=lam)


def weighted_norm(state: State, grid: Grid, alpha):
    """Integral of (v**-2alpha + v) g over the mesh."""
    w = weight_integrals(grid, -2.0 * alpha) + weight_integrals(grid, 1.0)
    return float(np.dot(state.g, w))


def observed_bound_sup(states, grid: Grid, alpha):
    return max(weighted_norm(s, grid, alpha) for s in states)


def convex_moment(state: State, grid: Grid):
    """Integral of v**1.5 g, a superlinear convex weight vanishing with its slope at 0."""
    return float(np.dot(state.g, weight_integrals(grid, CONVEX_EXPONENT)))


# -- weak formulation --------------------------------------------------------


def weak_residual(traj, tables: KernelTables, h: TestFunction, placement="pivot"):
    """Relative mismatch of the truncated weak identity over the trajectory.

    The left side counts particles where the scheme keeps them (at the
    representatives, plus the sub-grid bucket) for ``placement="pivot"`` and
    uses exact cell integrals of h for ``placement="exact"``.  Returns
    (relative residual, lhs, rhs).
    """
    states = traj.states if hasattr(traj, "states") else traj
    if len(states) < 3:
        raise DomainError("weak residual needs at least three saved states")
    grid = tables.grid
    first, last = states[0], states[-1]
    if placement == "exact":
        hw = h.cell_integrals(grid.edges)
    else:
        hw = h(grid.reps) * grid.widths
    lhs = float(np.dot(last.g - first.g, hw))
    lhs += h.bucket_value(last.subgrid_number, last.subgrid_mass, grid.v_min)
    lhs -= h.bucket_value(first.subgrid_number, first.subgrid_mass, grid.v_min)
    rhs_val = weak_form_rhs(states, tables, h, placement)
    n1 = float(np.dot(first.g, weight_integrals(grid, 1.0)))
    scale = max(abs(lhs), abs(rhs_val), n1)
    if scale == 0.0:
        return 0.0, lhs, rhs_val
    return abs(lhs - rhs_val) / scale, lhs, rhs_val


# -- cross-grid comparison ---------------------------------------------------


def project(g_a, grid_a: Grid, grid_b: Grid):
    """Mass-preserving projection of a piecewise-constant density onto another mesh.

    Mass (exact integral of v g) is redistributed by overlap; the part of
    ``grid_a`` outside ``grid_b`` is dropped.
    """
    ea, eb = grid_a.edges, grid_b.edges
    if np.array_equal(ea, eb):
        return np.array(g_a, dtype=float, copy=True)
    cuts = np.union1d(ea, eb)
    lo, hi = cuts[:-1], cuts[1:]
    mid = 0.5 * (lo + hi)
    ia = np.searchsorted(ea, mid, side="right") - 1
    ib = np.searchsorted(eb, mid, side="right") - 1
    ok = (ia >= 0) & (ia < grid_a.cells) & (ib >= 0) & (ib < grid_b.cells)
    piece_mass = np.asarray(g_a)[ia[ok]] * power_integrals(lo[ok], hi[ok], 1.0)
    mass_b = np.bincount(ib[ok], weights=piece_mass, minlength=grid_b.cells)
    return mass_b / weight_integrals(grid_b, 1.0)


def _same_times(ta, tb):
    return ta.shape == tb.shape and np.allclose(ta, tb, rtol=0, atol=1e-12 * max(1.0, float(np.max(np.abs(ta)))))


def convergence_metric(traj_a, traj_b, grid_a: Grid, grid_b: Grid, alpha, family=DEFAULT_FAMILY):
    """sup over save times and test functions of |int (v**-alpha + v)(g_a - g_b) h dv| on ``grid_b``."""
    ta = np.array([s.t for s in traj_a.states])
    tb = np.array([s.t for s in traj_b.states])
    if not _same_times(ta, tb):
        raise DomainError("trajectories do not share save times")
    weights = [h.cell_integrals(grid_b.edges, -alpha) + h.cell_integrals(grid_b.edges, 1.0) for h in family]
    worst = 0.0
    for sa, sb in zip(traj_a.states, traj_b.states):
        diff = project(sa.g, grid_a, grid_b) - sb.g
        for w in weights:
            worst = max(worst, abs(float(np.dot(diff, w))))
    return worst


# -- time equicontinuity -----------------------------------------------------


def equicontinuity_ratios(traj, grid: Grid, alpha, theta_const, lam=1.0, family=DEFAULT_FAMILY):
    """Worst ratio |int_0^lam v**-alpha h (g(t)-g(s))| / (Theta (t - s)) over save-time pairs."""
    states = traj.states if hasattr(traj, "states") else traj
    # clipping the edges at lam zeroes every cell above it
    clipped = np.minimum(grid.edges, lam)
    weights = [h.cell_integrals(clipped, -alpha) for h in family]
    worst = 0.0
    for i, s in enumerate(states):
        for t in states[i + 1 :]:
            dt = t.t - s.t
            if dt <= 0:
                continue
            diff = t.g - s.g
            for w in weights:
                worst = max(worst, abs(float(np.dot(diff, w))) / (theta_const * dt))
    return worst


# -- non-conservative loss audit ---------------------------------------------


def loss_rate(state: State, grid: Grid, kernel: KernelSpec, n, efficiency=None):
    """Mass flux past n: sum over ordered pairs with v + v' >= n of v phi N N.

    Recomputed from the kernel directly (not from precomputed tables).  With
    ``efficiency`` given, each pair is weighted by its coalescence efficiency.
    """
    xi = grid.reps
    N = np.asarray(state.g) * grid.widths
    active = (xi > 1.0 / n) & (xi < n)
    x = xi[active]
    Na = N[active]
    V, Vp = np.meshgrid(x, x, indexing="ij")
    phi = eval_phi(kernel, V, Vp) * ((V + Vp) >= n)
    if efficiency is not None:
        phi = phi * efficiency.coalescence(V, Vp)
    return float(np.einsum("i,ij,i,j->", x, phi, Na, Na))


def loss_integral(traj, grid: Grid, kernel: KernelSpec, n, efficiency=None):
    """Trapezoid time integral of ``loss_rate`` at every save time."""
    states = traj.states if hasattr(traj, "states") else traj
    t = np.array([s.t for s in states])
    q = np.array([loss_rate(s, grid, kernel, n, efficiency) for s in states])
    out = np.zeros_like(t)
    if t.size > 1:
        out[1:] = np.cumsum(0.5 * (q[1:] + q[:-1]) * np.diff(t))
    return out

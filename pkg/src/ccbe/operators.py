"""Sectional right-hand side of the truncated coagulation / collisional-breakage system.

Particles in cell ``c`` sit at the representative volume ``reps[c]``.  Below
the mesh there is one extra inert pivot at ``v_min`` (the sub-grid bucket),
which tracks number and mass separately.  Every collision event is
redistributed onto neighbouring pivots with the lever rule, so each event
conserves both particle number and particle mass exactly.  The one exception
is a coagulation product landing above the last representative: it keeps its
mass and rounds its number.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
from scipy.integrate import trapezoid

from .errors import ContractViolation, DomainError, InadmissibleParameters
from .grid import Grid, TruncationConfig
from .kernel_model import (
    DaughterSpec,
    EfficiencySpec,
    KernelSpec,
    check_admissibility,
    eval_phi,
)
from . import _rhs_py

try:
    if os.environ.get("CCBE_PURE_PYTHON", "").lower() in {"1", "true", "yes", "on"}:
        raise ImportError("compiled kernel disabled by CCBE_PURE_PYTHON")
    from . import _rhs_core as _backend

    BACKEND = "cython"
except ImportError:
    _backend = _rhs_py
    BACKEND = "python"


@dataclass(frozen=True)
class State:
    """Piecewise-constant density ``g`` at time ``t`` plus the loss/sub-grid ledgers."""

    g: np.ndarray
    t: float = 0.0
    lost_mass: float = 0.0
    subgrid_mass: float = 0.0
    subgrid_number: float = 0.0

    def with_time(self, t):
        return replace(self, t=t)


class Rates(NamedTuple):
    dg: np.ndarray
    dlost: float
    dsubgrid: float
    dsubgrid_number: float


@dataclass(frozen=True, eq=False)
class KernelTables:
    """Pairwise rates and redistribution stencils, immutable after ``build_tables``.

    The dense ``I x I`` matrices describe every pair; the flat ``pi, pj, ...``
    arrays list only interacting pairs with ``i <= j`` and drive the kernels.
    Pivot indices in ``c_lo``/``c_hi``/``b_m`` are *extended*: 0 is the
    sub-grid bucket and ``c + 1`` is cell ``c``.
    """

    grid: Grid
    trunc: TruncationConfig
    kernel: KernelSpec
    eff: EfficiencySpec
    daughter: DaughterSpec
    phi_eff: np.ndarray
    e_coag: np.ndarray
    e_break: np.ndarray
    pivots: np.ndarray
    # flat pair arrays
    pi: np.ndarray
    pj: np.ndarray
    pair_rate: np.ndarray
    psum: np.ndarray
    over: np.ndarray
    e_coag_pair: np.ndarray
    c_lo: np.ndarray
    c_hi: np.ndarray
    c_nlo: np.ndarray
    c_nhi: np.ndarray
    b_m: np.ndarray
    b_ilo: np.ndarray
    b_ihi: np.ndarray
    b_w: np.ndarray
    b_plo: np.ndarray
    b_phi: np.ndarray
    # per-interval lever shares of a full interval, per unit s^-(1+theta)
    full_lo: np.ndarray
    full_hi: np.ndarray
    bucket_number_coef: float
    bucket_mass_coef: float
    extras: dict = field(default_factory=dict)

    def coag_target(self, i, j):
        """[(extended pivot, count)] receiving the merged particle of pair (i, j)."""
        k = self._pair_index(i, j)
        if k is None or self.over[k]:
            return []
        out = [(int(self.c_lo[k]), float(self.c_nlo[k]))]
        if self.c_nhi[k] != 0.0:
            out.append((int(self.c_hi[k]), float(self.c_nhi[k])))
        return out

    def daughter_counts(self, i, j):
        """Expanded breakage stencil of pair (i, j): (counts per extended pivot, bucket mass).

        Counts include the bucket (index 0).  The second value is the daughter
        mass carried by volumes below ``v_min`` (a subset of bucket content).
        """
        k = self._pair_index(i, j)
        counts = np.zeros(self.grid.cells + 1)
        if k is None or self.over[k]:
            return counts, 0.0
        m = int(self.b_m[k])
        w = self.b_w[k]
        counts[:m] += self.full_lo[:m] * w
        counts[1 : m + 1] += self.full_hi[:m] * w
        counts[self.b_ilo[k]] += self.b_plo[k]
        counts[self.b_ihi[k]] += self.b_phi[k]
        counts[0] += self.bucket_number_coef * w
        return counts, self.bucket_mass_coef * w

    def _pair_index(self, i, j):
        i, j = min(i, j), max(i, j)
        hit = np.flatnonzero((self.pi == i) & (self.pj == j))
        return int(hit[0]) if hit.size else None


def _lever_integrals(theta, lo, hi, a, b):
    """Lever-rule daughter counts on [a, b] inside the pivot interval [lo, hi].

    Returns the shares sent to ``lo`` and ``hi`` per unit s^-(1+theta).
    """
    c0 = (theta + 2.0) / (theta + 1.0)
    j0 = c0 * (b ** (theta + 1.0) - a ** (theta + 1.0))
    j1 = b ** (theta + 2.0) - a ** (theta + 2.0)
    h = hi - lo
    return (hi * j0 - j1) / h, (j1 - lo * j0) / h


def build_tables(
    grid: Grid,
    trunc: TruncationConfig,
    kernel: KernelSpec,
    eff: EfficiencySpec,
    daughter: DaughterSpec,
    strict=True,
) -> KernelTables:
    """Precompute truncated pair rates and the number- and mass-exact redistribution.

    With ``strict=False`` an efficiency that fails only the local lower bound
    on E is accepted (pure-breakage diagnostics need E = 0); every other
    assumption is still enforced.
    """
    report = check_admissibility(kernel, eff, daughter)
    ok = report.passes if strict else (report.passes_A1 and report.passes_A3)
    if not ok:
        raise InadmissibleParameters("; ".join(report.reasons), report)
    if trunc.n != grid.n:
        raise DomainError(f"grid spans [.., {grid.n}] but truncation size is {trunc.n}")

    xi = grid.reps
    cells = xi.size
    th = daughter.theta
    n = trunc.n

    V, Vp = np.meshgrid(xi, xi, indexing="ij")
    S = V + Vp
    inside = (xi > 1.0 / n) & (xi < n)
    phi = eval_phi(kernel, V, Vp) * np.outer(inside, inside)
    if trunc.tau == 1:
        phi = phi * (S < n)
    e_coag = eff.coalescence(V, Vp)
    e_break = 1.0 - e_coag

    pivots = np.concatenate(([grid.v_min], xi))

    iu, ju = np.triu_indices(cells)
    keep = phi[iu, ju] > 0
    pi = iu[keep].astype(np.int64)
    pj = ju[keep].astype(np.int64)
    psum = S[pi, pj]
    pair_rate = phi[pi, pj] * np.where(pi == pj, 0.5, 1.0)
    over = psum >= n
    e_pair = e_coag[pi, pj]

    # coagulation: merged particle split between the bracketing pivots
    m = np.searchsorted(pivots, psum, side="right") - 1
    top = m >= cells
    mc = np.minimum(m, cells - 1)
    lo_x = pivots[mc]
    hi_x = pivots[mc + 1]
    c_nlo = np.where(top, 0.0, (hi_x - psum) / (hi_x - lo_x))
    c_nhi = np.where(top, 0.0, (psum - lo_x) / (hi_x - lo_x))
    c_lo = np.where(top, cells, mc).astype(np.int64)
    c_hi = np.where(top, cells, mc + 1).astype(np.int64)
    c_nlo = np.where(top, psum / pivots[cells], c_nlo)
    exact = pivots[np.minimum(m, cells)] == psum
    c_nlo = np.where(exact & ~top, 1.0, c_nlo)
    c_nhi = np.where(exact & ~top, 0.0, c_nhi)

    # breakage: full pivot intervals below the parent sum, then the partial one;
    # above the last representative the lever is extrapolated from the last
    # two pivots so number and mass stay exact (net count per event stays >= 0)
    full_lo, full_hi = _lever_integrals(th, pivots[:-1], pivots[1:], pivots[:-1], pivots[1:])
    b_m = m.astype(np.int64)
    b_w = psum ** -(1.0 + th)
    part_lo, part_hi = _lever_integrals(th, lo_x, hi_x, np.where(top, hi_x, lo_x), np.where(top, psum, np.minimum(psum, hi_x)))
    b_ilo = np.where(top, cells - 1, m).astype(np.int64)
    b_ihi = np.where(top, cells, m + 1).astype(np.int64)
    b_plo = part_lo * b_w
    b_phi = part_hi * b_w

    v0 = grid.v_min
    tables = KernelTables(
        grid=grid,
        trunc=trunc,
        kernel=kernel,
        eff=eff,
        daughter=daughter,
        phi_eff=phi,
        e_coag=e_coag,
        e_break=e_break,
        pivots=pivots,
        pi=pi,
        pj=pj,
        pair_rate=np.ascontiguousarray(pair_rate),
        psum=np.ascontiguousarray(psum),
        over=np.ascontiguousarray(over),
        e_coag_pair=np.ascontiguousarray(e_pair),
        c_lo=c_lo,
        c_hi=c_hi,
        c_nlo=np.ascontiguousarray(c_nlo),
        c_nhi=np.ascontiguousarray(c_nhi),
        b_m=b_m,
        b_ilo=b_ilo,
        b_ihi=b_ihi,
        b_w=np.ascontiguousarray(b_w),
        b_plo=np.ascontiguousarray(b_plo),
        b_phi=np.ascontiguousarray(b_phi),
        full_lo=np.ascontiguousarray(full_lo),
        full_hi=np.ascontiguousarray(full_hi),
        bucket_number_coef=(th + 2.0) / (th + 1.0) * v0 ** (th + 1.0),
        bucket_mass_coef=v0 ** (th + 2.0),
        extras={"admissibility": report},
    )
    for name in ("phi_eff", "e_coag", "e_break", "pivots"):
        getattr(tables, name).setflags(write=False)
    return tables


def rhs(state: State, tables: KernelTables, backend=None) -> Rates:
    """Time derivative of the density and of the lost / sub-grid ledgers."""
    g = np.ascontiguousarray(state.g, dtype=float)
    if np.any(g < 0):
        raise ContractViolation(f"negative density at cells {np.flatnonzero(g < 0).tolist()}")
    kern = (backend or _backend).rhs_kernel
    widths = tables.grid.widths
    dN, lost, wtot = kern(g * widths, tables)
    v0 = tables.grid.v_min
    d_bucket_n = dN[0] + tables.bucket_number_coef * wtot
    d_bucket_m = v0 * dN[0] + tables.bucket_mass_coef * wtot
    return Rates(dN[1:] / widths, lost, d_bucket_m, d_bucket_n)


def discrete_mass(g, grid: Grid):
    """Mass carried by the mesh with particles at the representatives."""
    return float(np.dot(grid.reps * grid.widths, g))


# -- test functions for the weak formulation ---------------------------------


@dataclass(frozen=True)
class TestFunction:
    """Bounded test function with closed-form integrals.

    kinds: ``one`` (h = 1), ``indicator`` (h = 1 on the open interval (a, b)),
    ``min1`` (h = min(v, 1)), ``identity`` (h = v, unbounded; mass identity only).
    """

    __test__ = False  # not a pytest class

    kind: str
    a: float = 0.0
    b: float = 0.0

    KINDS = ("one", "indicator", "min1", "identity")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise DomainError(
                f"unsupported test function {self.kind!r}; supported: {', '.join(self.KINDS)}"
            )
        if self.kind == "indicator" and not (0.0 <= self.a < self.b):
            raise DomainError(f"indicator needs 0 <= a < b, got ({self.a}, {self.b})")

    @property
    def label(self):
        if self.kind == "indicator":
            return f"indicator({self.a!r},{self.b!r})"
        return self.kind

    @property
    def sup_norm(self):
        return np.inf if self.kind == "identity" else 1.0

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        if self.kind == "one":
            return np.ones_like(v)
        if self.kind == "indicator":
            return ((v > self.a) & (v < self.b)).astype(float)
        if self.kind == "min1":
            return np.minimum(v, 1.0)
        return v.copy()

    def cell_integrals(self, edges, p=0.0):
        """Exact integrals of v**p * h(v) over consecutive cells of ``edges``."""
        from .grid import power_integrals

        lo, hi = np.asarray(edges[:-1], float), np.asarray(edges[1:], float)
        if self.kind == "one":
            return power_integrals(lo, hi, p)
        if self.kind == "identity":
            return power_integrals(lo, hi, p + 1)
        if self.kind == "indicator":
            a = np.clip(self.a, lo, hi)
            b = np.clip(self.b, lo, hi)
            return power_integrals(a, b, p)
        mid = np.clip(1.0, lo, hi)
        return power_integrals(lo, mid, p + 1) + power_integrals(mid, hi, p)

    def daughter_integral(self, daughter: DaughterSpec, s):
        """Integral of h(v) P(v | s) over (0, s)."""
        th = daughter.theta
        s = np.asarray(s, dtype=float)
        c0 = (th + 2.0) / (th + 1.0)
        if self.kind == "one":
            return np.full(s.shape, c0)
        if self.kind == "identity":
            return s.copy()
        if self.kind == "indicator":
            lo = np.minimum(self.a, s)
            hi = np.minimum(self.b, s)
            return c0 * (hi ** (th + 1.0) - lo ** (th + 1.0)) / s ** (th + 1.0)
        big = s > 1.0
        sb = np.where(big, s, 1.0)
        tail = (1.0 + c0 * (sb ** (th + 1.0) - 1.0)) / sb ** (th + 1.0)
        return np.where(big, tail, s)

    def bucket_value(self, number, mass, v_min):
        """Integral of h against the sub-grid bucket content (volumes below the mesh)."""
        if self.kind == "one":
            return number
        if self.kind == "identity":
            return mass
        if self.kind == "min1":
            if v_min > 1.0:
                raise DomainError("bucket straddles the kink of min(v, 1)")
            return mass
        if self.a >= v_min or self.b <= 0.0:
            return 0.0
        if self.a <= 0.0 and self.b >= v_min:
            return number
        raise DomainError(f"indicator {self.label} splits the sub-grid bucket (0, {v_min})")


def weak_form_integrand(state: State, tables: KernelTables, h: TestFunction, placement="pivot"):
    """Instantaneous right side of the truncated weak formulation at one state.

    ``placement="exact"`` evaluates h at the merged volume and integrates h
    against the daughter density in closed form.  ``placement="pivot"``
    evaluates h where the scheme actually puts the products, which is the
    weak formulation for the piecewise-linear interpolant of h on the pivots;
    the sectional scheme satisfies that identity up to time quadrature.
    """
    if placement not in ("exact", "pivot"):
        raise DomainError(f"placement must be 'exact' or 'pivot', got {placement!r}")
    g = np.asarray(state.g, dtype=float)
    grid = tables.grid
    N = g * grid.widths
    pi, pj = tables.pi, tables.pj
    R = tables.pair_rate * N[pi] * N[pj]
    hv = h(grid.reps)
    hsum = hv[pi] + hv[pj]
    inside = ~tables.over
    if placement == "exact":
        s = tables.psum
        born_coag = h(s)
        born_break = h.daughter_integral(tables.daughter, s)
    else:
        hp = h(tables.pivots)
        born_coag = tables.c_nlo * hp[tables.c_lo] + tables.c_nhi * hp[tables.c_hi]
        full = tables.full_lo * hp[:-1] + tables.full_hi * hp[1:]
        prefix = np.concatenate(([0.0], np.cumsum(full)))
        w = tables.b_w
        born_break = (
            prefix[tables.b_m] * w
            + tables.b_plo * hp[tables.b_ilo]
            + tables.b_phi * hp[tables.b_ihi]
            + h.bucket_value(tables.bucket_number_coef * w, tables.bucket_mass_coef * w, grid.v_min)
        )
    h_tilde = np.where(inside, born_coag, 0.0) - hsum
    ph = np.where(inside, born_break, 0.0) - hsum
    e = tables.e_coag_pair
    return float(np.dot(R, e * h_tilde + (1.0 - e) * ph))


def weak_form_rhs(states, tables: KernelTables, h: TestFunction, placement="pivot"):
    """Trapezoid time integral of the weak-form right side over saved states."""
    if len(states) < 2:
        raise DomainError("weak-form right side needs at least two saved states")
    t = np.array([st.t for st in states])
    q = np.array([weak_form_integrand(st, tables, h, placement) for st in states])
    return float(trapezoid(q, t))

"""Geometric volume mesh on [v_min, n] and exact cell integrals of power weights."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DomainError

MIN_CELLS = 8

# Sentinels returned by ``locate`` for volumes outside [v_min, n).
BELOW = -1
ABOVE = -2


def default_v_min(n):
    return min(1e-4, 1.0 / (2.0 * n))


@dataclass(frozen=True, eq=False)
class Grid:
    """Truncated mesh; ``edges`` has one more entry than ``reps`` and ``widths``."""

    edges: np.ndarray
    reps: np.ndarray
    widths: np.ndarray
    n: float
    v_min: float
    ratio: float

    @property
    def cells(self):
        return self.reps.size

    def __eq__(self, other):
        return isinstance(other, Grid) and np.array_equal(self.edges, other.edges)

    __hash__ = None


@dataclass(frozen=True)
class TruncationConfig:
    n: float
    tau: int = 1

    def __post_init__(self):
        if self.tau not in (0, 1):
            raise ConfigurationError(f"tau must be 0 or 1, got {self.tau}")
        if not self.n > 0:
            raise ConfigurationError(f"truncation size must be positive, got {self.n}")

    @property
    def cutoff_low(self):
        return 1.0 / self.n


def build_grid(n, cells, v_min=None):
    """Geometric mesh with ratio (n / v_min)**(1/cells) and geometric-mean representatives."""
    if v_min is None:
        v_min = default_v_min(n)
    if cells < MIN_CELLS:
        raise ConfigurationError(f"need at least {MIN_CELLS} cells, got {cells}")
    if not (0.0 < v_min < n):
        raise ConfigurationError(f"need 0 < v_min < n, got v_min={v_min}, n={n}")
    cells = int(cells)
    ratio = (n / v_min) ** (1.0 / cells)
    edges = v_min * ratio ** np.arange(cells + 1, dtype=float)
    # pin the endpoints so they are exact rather than accumulated powers
    edges[0] = v_min
    edges[-1] = n
    reps = np.sqrt(edges[:-1] * edges[1:])
    widths = np.diff(edges)
    for arr in (edges, reps, widths):
        arr.setflags(write=False)
    return Grid(edges=edges, reps=reps, widths=widths, n=float(n), v_min=float(v_min), ratio=ratio)


def locate(grid: Grid, v):
    """Index of the cell [x_{i-1/2}, x_{i+1/2}) holding v, or BELOW / ABOVE."""
    if v < grid.v_min:
        return BELOW
    if v >= grid.n:
        return ABOVE
    return int(np.searchsorted(grid.edges, v, side="right")) - 1


def power_integrals(lo, hi, p):
    """Elementwise integral of v**p over [lo, hi] (p != -1)."""
    if p == -1:
        raise DomainError("weight v**-1 is not supported (logarithmic cell integral)")
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if p == 0:
        return hi - lo
    q = p + 1.0
    return (hi**q - lo**q) / q


def weight_integrals(grid: Grid, p):
    """Vector of exact cell integrals of v**p."""
    return power_integrals(grid.edges[:-1], grid.edges[1:], p)


def cell_weight_integral(grid: Grid, i, p):
    return float(power_integrals(grid.edges[i], grid.edges[i + 1], p))

"""Explicit time stepping with positivity enforced by step rejection.

Both schemes are explicit Runge-Kutta methods, so they preserve the linear
mass invariant of the right-hand side to round-off; negative densities are
never clipped (clipping would inject mass), the step is retried instead.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, IntegrationFailure
from .operators import KernelTables, State, rhs

logger = logging.getLogger(__name__)

HALVINGS = 20


class Method(str, enum.Enum):
    RK4_FIXED = "rk4"
    RK23_ADAPTIVE = "rk23"


@dataclass(frozen=True)
class IntegratorConfig:
    method: Method = Method.RK23_ADAPTIVE
    dt_init: float | None = None
    rel_tol: float = 1e-7
    abs_tol: float = 1e-12
    t_end: float = 1.0
    save_every: float = 0.05
    max_steps: int = 200_000

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        if self.t_end < 0:
            raise ConfigurationError(f"t_end must be >= 0, got {self.t_end}")
        if self.dt_init is not None and self.dt_init <= 0:
            raise ConfigurationError(f"dt_init must be positive, got {self.dt_init}")
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ConfigurationError("tolerances must be positive")
        if self.save_every <= 0 or (self.t_end > 0 and self.save_every > self.t_end):
            raise ConfigurationError(
                f"need 0 < save_every <= t_end, got save_every={self.save_every}, t_end={self.t_end}"
            )

    def save_times(self):
        if self.t_end == 0:
            return np.array([0.0])
        k = int(math.floor(self.t_end / self.save_every + 1e-9))
        times = [i * self.save_every for i in range(k + 1)]
        if self.t_end - times[-1] > 1e-12 * self.t_end:
            times.append(self.t_end)
        else:
            times[-1] = self.t_end
        return np.array(times)


@dataclass
class StepStats:
    accepted: int = 0
    rejected_error: int = 0
    rejected_negative: int = 0
    min_dt: float = math.inf
    rhs_evals: int = 0


@dataclass
class Trajectory:
    states: list[State]
    stats: StepStats = field(default_factory=StepStats)

    @property
    def times(self):
        return np.array([s.t for s in self.states])

    def __len__(self):
        return len(self.states)

    def __getitem__(self, k):
        return self.states[k]


def _pack(state: State):
    return np.concatenate((state.g, [state.lost_mass, state.subgrid_mass, state.subgrid_number]))


def _unpack(y, t):
    return State(g=y[:-3].copy(), t=t, lost_mass=float(y[-3]), subgrid_mass=float(y[-2]), subgrid_number=float(y[-1]))


def _deriv(y, tables, stats):
    stats.rhs_evals += 1
    r = rhs(State(g=y[:-3]), tables)
    return np.concatenate((r.dg, [r.dlost, r.dsubgrid, r.dsubgrid_number]))


def default_dt(state: State, tables: KernelTables):
    """A tenth of the fastest initial depletion time, 1 / max_i sum_j phi_ij N_j."""
    N = state.g * tables.grid.widths
    depletion = float(np.max(tables.phi_eff @ N)) if N.size else 0.0
    return 0.1 / depletion if depletion > 0 else 0.1


def _rk4(y, dt, tables, stats):
    k1 = _deriv(y, tables, stats)
    k2 = _deriv(np.maximum(y + 0.5 * dt * k1, 0.0), tables, stats)
    k3 = _deriv(np.maximum(y + 0.5 * dt * k2, 0.0), tables, stats)
    k4 = _deriv(np.maximum(y + dt * k3, 0.0), tables, stats)
    return y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _valid(y):
    return bool(np.all(y[:-3] >= 0.0) and np.all(np.isfinite(y)))


def step(state: State, dt, tables: KernelTables, dt_min=None, stats=None):
    """Advance by exactly ``dt`` with classical RK4, halving on negative densities."""
    if dt <= 0:
        raise ConfigurationError(f"dt must be positive, got {dt}")
    stats = stats if stats is not None else StepStats()
    dt_min = dt * 2.0**-HALVINGS if dt_min is None else dt_min
    y = _pack(state)
    t = state.t
    # explicit stack of pending sub-intervals keeps the halving iterative
    pending = [dt]
    while pending:
        h = pending.pop()
        y_new = _rk4(y, h, tables, stats)
        if _valid(y_new):
            y = y_new
            t += h
            stats.accepted += 1
            stats.min_dt = min(stats.min_dt, h)
            continue
        stats.rejected_negative += 1
        if h / 2.0 < dt_min:
            raise IntegrationFailure(
                f"step size fell below {dt_min:g} at t={t:.6g} while keeping densities nonnegative",
                state=_unpack(y, t),
            )
        pending.extend([h / 2.0, h / 2.0])
    return _unpack(y, state.t + dt)


# Bogacki-Shampine 3(2) tableau
_A21 = 0.5
_A32 = 0.75
_B = (2.0 / 9.0, 1.0 / 3.0, 4.0 / 9.0)
_E = (-5.0 / 72.0, 1.0 / 12.0, 1.0 / 9.0, -1.0 / 8.0)


def _rk23_attempt(y, k1, h, tables, stats):
    k2 = _deriv(np.maximum(y + h * _A21 * k1, 0.0), tables, stats)
    k3 = _deriv(np.maximum(y + h * _A32 * k2, 0.0), tables, stats)
    y_new = y + h * (_B[0] * k1 + _B[1] * k2 + _B[2] * k3)
    k4 = _deriv(np.maximum(y_new, 0.0), tables, stats)
    err = h * (_E[0] * k1 + _E[1] * k2 + _E[2] * k3 + _E[3] * k4)
    return y_new, k4, err


def integrate(initial: State, cfg: IntegratorConfig, tables: KernelTables):
    """Integrate to ``cfg.t_end`` and return the states at the save times."""
    if np.any(initial.g < 0):
        raise ConfigurationError("initial density must be nonnegative")
    stats = StepStats()
    save = cfg.save_times()
    traj = Trajectory(states=[initial.with_time(0.0)], stats=stats)
    if cfg.t_end == 0:
        return traj

    dt0 = cfg.dt_init if cfg.dt_init is not None else default_dt(initial, tables)
    dt_min = dt0 * 2.0**-HALVINGS
    y = _pack(initial)
    t = 0.0
    h = dt0
    steps = 0
    k1 = None
    for target in save[1:]:
        while target - t > 1e-14 * max(1.0, target):
            if steps >= cfg.max_steps:
                raise IntegrationFailure(
                    f"max_steps={cfg.max_steps} exceeded at t={t:.6g}",
                    state=_unpack(y, t),
                    trajectory=traj,
                )
            steps += 1
            h_try = min(h, target - t)
            if cfg.method is Method.RK4_FIXED:
                nxt = step(_unpack(y, t), h_try, tables, dt_min=dt_min, stats=stats)
                y, t = _pack(nxt), t + h_try
                continue

            if k1 is None:
                k1 = _deriv(y, tables, stats)
            y_new, k4, err = _rk23_attempt(y, k1, h_try, tables, stats)
            scale = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(y), np.abs(y_new))
            enorm = float(np.sqrt(np.mean((err / scale) ** 2)))
            if not _valid(y_new):
                stats.rejected_negative += 1
                h = h_try / 2.0
            elif enorm > 1.0:
                stats.rejected_error += 1
                h = h_try * max(0.2, 0.9 * enorm ** (-1.0 / 3.0))
            else:
                y, k1 = y_new, k4
                t = target if target - (t + h_try) <= 1e-14 * max(1.0, target) else t + h_try
                stats.accepted += 1
                stats.min_dt = min(stats.min_dt, h_try)
                grow = 5.0 if enorm == 0 else min(5.0, 0.9 * enorm ** (-1.0 / 3.0))
                # a step truncated to hit a save time says nothing about the next h
                h = max(h, h_try * grow) if h_try < h else h_try * grow
                continue
            if h < dt_min:
                raise IntegrationFailure(
                    f"step size underflow (h={h:g}) at t={t:.6g}",
                    state=_unpack(y, t),
                    trajectory=traj,
                )
        t = float(target)
        traj.states.append(_unpack(y, t))
    logger.debug("integration finished: %s", stats)
    return traj

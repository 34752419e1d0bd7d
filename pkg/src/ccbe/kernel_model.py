"""Collision kernel, coalescence efficiency and power-law daughter distribution.

All closed forms here are specific to the power-law daughter density

    P(v | v', v'') = (theta + 2) v**theta / s**(1 + theta),   s = v' + v'',

supported on (0, s), and to kernels bounded by the singular envelope
k (1 + v + v') / (v + v')**alpha.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, InadmissibleParameters

# Lattice used to certify pointwise conditions that cannot be checked exhaustively.
LATTICE_POINTS = 64
LATTICE_LOW = 1e-6
A2_LATTICE_HIGH = 1.0
A1_LATTICE_HIGH = 1e3


class KernelFamily(str, enum.Enum):
    SINGULAR_BOUND = "singular-bound"
    CONSTANT = "constant"
    SUM = "sum"
    PRODUCT = "product"


@dataclass(frozen=True)
class KernelSpec:
    """Collision kernel.

    ``k`` is the envelope constant of the growth condition.  For the
    singular-bound family the kernel *is* the envelope; for the other
    families ``scale`` multiplies the family shape and ``k`` defaults to the
    smallest envelope constant that dominates it (constant family only).
    """

    family: KernelFamily = KernelFamily.SINGULAR_BOUND
    alpha: float = 0.25
    k: float | None = 1.0
    scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "family", KernelFamily(self.family))
        if not self.alpha > 0:
            raise InadmissibleParameters(f"alpha must be positive, got {self.alpha}")
        if self.scale <= 0:
            raise InadmissibleParameters(f"kernel scale must be positive, got {self.scale}")
        if self.k is None:
            if self.family is KernelFamily.CONSTANT:
                object.__setattr__(self, "k", implied_envelope_constant(self.scale, self.alpha))
            else:
                raise InadmissibleParameters(
                    f"envelope constant k is required for family {self.family.value}"
                )
        if self.k <= 0:
            raise InadmissibleParameters(f"k must be positive, got {self.k}")


def envelope_minimum(alpha):
    """min over s > 0 of (1 + s) / s**alpha, attained at s = alpha / (1 - alpha)."""
    s = alpha / (1.0 - alpha)
    return (1.0 + s) / s**alpha


def implied_envelope_constant(k0, alpha):
    """Smallest k with k0 <= k (1 + s) / s**alpha for every s > 0."""
    return k0 / envelope_minimum(alpha)


@dataclass(frozen=True)
class EfficiencySpec:
    """Coalescence efficiency E; the breakage efficiency is 1 - E.

    ``kind`` is ``"constant"`` (E = value) or ``"step-local"`` (E = inner on
    (0,1)^2 and outer elsewhere).
    """

    kind: str = "constant"
    value: float = 0.7
    inner: float = 1.0
    outer: float = 1.0

    def __post_init__(self):
        if self.kind not in ("constant", "step-local"):
            raise InadmissibleParameters(f"unknown efficiency kind {self.kind!r}")
        for name in ("value", "inner", "outer"):
            x = getattr(self, name)
            if not (0.0 <= x <= 1.0):
                raise InadmissibleParameters(f"efficiency {name}={x} not in [0, 1]")

    @classmethod
    def parse(cls, text):
        """Build from ``"constant:<E>"`` or ``"step-local:<inner>,<outer>"``."""
        kind, _, args = str(text).partition(":")
        kind = kind.strip()
        try:
            if kind == "constant":
                return cls(kind="constant", value=float(args))
            if kind == "step-local":
                inner, outer = (float(a) for a in args.split(","))
                return cls(kind="step-local", inner=inner, outer=outer)
        except ValueError as exc:
            raise InadmissibleParameters(f"malformed efficiency {text!r}") from exc
        raise InadmissibleParameters(f"unknown efficiency {text!r}")

    def format(self):
        if self.kind == "constant":
            return f"constant:{self.value!r}"
        return f"step-local:{self.inner!r},{self.outer!r}"

    def coalescence(self, v, vp):
        v = np.asarray(v, dtype=float)
        vp = np.asarray(vp, dtype=float)
        if self.kind == "constant":
            return np.full(np.broadcast(v, vp).shape, self.value)
        inside = (v < 1.0) & (vp < 1.0)
        return np.where(inside, self.inner, self.outer)

    def breakage(self, v, vp):
        return 1.0 - self.coalescence(v, vp)

    def infimum_local(self):
        """Exact infimum of E over (0,1)^2 when it is known in closed form."""
        return self.value if self.kind == "constant" else self.inner


@dataclass(frozen=True)
class DaughterSpec:
    theta: float = 0.0

    @property
    def total_number(self):
        """Number of fragments per breakage event, (theta + 2) / (theta + 1)."""
        if self.theta <= -1.0:
            return math.inf
        return (self.theta + 2.0) / (self.theta + 1.0)


@dataclass
class AdmissibilityReport:
    eta_2alpha: float
    t_n: float
    e_threshold: float
    passes_A1: bool
    passes_A2: bool
    passes_A3: bool
    passes_A4: bool = True
    a1_worst_ratio: float = float("nan")
    a2_worst_margin: float = float("nan")
    implied_k: float = float("nan")
    reasons: list[str] = field(default_factory=list)

    @property
    def passes(self):
        return self.passes_A1 and self.passes_A2 and self.passes_A3 and self.passes_A4

    def as_dict(self):
        d = dict(self.__dict__)
        d["passes"] = self.passes
        return d


def eval_phi(spec: KernelSpec, v, vp):
    """Collision rate phi(v, v'); broadcasts over numpy arrays."""
    v = np.asarray(v, dtype=float)
    vp = np.asarray(vp, dtype=float)
    if np.any(v <= 0) or np.any(vp <= 0):
        raise DomainError("collision kernel is defined for positive volumes only")
    s = v + vp
    fam = spec.family
    if fam is KernelFamily.SINGULAR_BOUND:
        out = spec.k * (1.0 + s) / s**spec.alpha
    elif fam is KernelFamily.CONSTANT:
        out = np.full(s.shape, spec.scale)
    elif fam is KernelFamily.SUM:
        out = spec.scale * s
    else:
        out = spec.scale * (v * vp)
    return out if out.ndim else float(out)


def eval_P(spec: DaughterSpec, v, s):
    """Daughter density (theta+2) v^theta / s^(1+theta) on (0, s), zero for v >= s."""
    v = np.asarray(v, dtype=float)
    s = np.asarray(s, dtype=float)
    if np.any(s <= 0):
        raise DomainError("parent-sum volume must be positive")
    th = spec.theta
    with np.errstate(divide="ignore"):
        dens = (th + 2.0) * np.power(np.where(v > 0, v, 1.0), th) / s ** (1.0 + th)
    out = np.where((v > 0) & (v < s), dens, 0.0)
    return out if out.ndim else float(out)


def p_moment(spec: DaughterSpec, p, s):
    """Integral of v^p P(v|s) over (0, s)."""
    th = spec.theta
    if th + p + 1.0 <= 0:
        raise DomainError(f"moment p={p} of the daughter density diverges at 0")
    if np.any(np.asarray(s) <= 0):
        raise DomainError("parent-sum volume must be positive")
    out = (th + 2.0) / (th + p + 1.0) * np.asarray(s, dtype=float) ** p
    return out if out.ndim else float(out)


def p_cell_mass(spec: DaughterSpec, a, b, s):
    """Daughter mass carried by volumes in [a, b]: (b^(th+2) - a^(th+2)) / s^(1+th)."""
    if not (0.0 <= a < b <= s):
        raise DomainError(f"need 0 <= a < b <= s, got a={a}, b={b}, s={s}")
    th = spec.theta
    return (b ** (th + 2.0) - a ** (th + 2.0)) / s ** (1.0 + th)


def p_cell_number(spec: DaughterSpec, a, b, s):
    """Daughter count carried by volumes in [a, b]."""
    if not (0.0 <= a < b <= s):
        raise DomainError(f"need 0 <= a < b <= s, got a={a}, b={b}, s={s}")
    th = spec.theta
    return (th + 2.0) / (th + 1.0) * (b ** (th + 1.0) - a ** (th + 1.0)) / s ** (1.0 + th)


def compute_eta(spec: DaughterSpec, alpha):
    """eta(2 alpha) = (theta + 2) / (theta + 1 - 2 alpha), the weighted-moment constant."""
    th = spec.theta
    if 2.0 * alpha - th >= 1.0:
        raise InadmissibleParameters(
            f"2*alpha - theta = {2 * alpha - th} must be < 1"
        )
    eta = (th + 2.0) / (th + 1.0 - 2.0 * alpha)
    if not eta > 2.0:
        raise InadmissibleParameters(f"eta(2 alpha) = {eta} must exceed 2")
    return eta


def a2_threshold(eta):
    """Lower bound on E over (0,1)^2: (eta - 2) / (eta - 1)."""
    return (eta - 2.0) / (eta - 1.0)


def _lattice(high):
    axis = np.geomspace(LATTICE_LOW, high, LATTICE_POINTS)
    return np.meshgrid(axis, axis, indexing="ij")


def check_admissibility(kernel: KernelSpec, eff: EfficiencySpec, daughter: DaughterSpec):
    """Certify the kernel, efficiency and daughter assumptions; never raises."""
    reasons = []
    alpha, th = kernel.alpha, daughter.theta

    # growth envelope
    a1 = 0.0 < alpha < 0.5
    if not a1:
        reasons.append(f"A1: alpha={alpha} outside the open interval (0, 1/2)")
    worst_ratio = 1.0
    if kernel.family is KernelFamily.SINGULAR_BOUND:
        implied = kernel.k
    elif kernel.family is KernelFamily.CONSTANT:
        implied = implied_envelope_constant(kernel.scale, alpha)
        worst_ratio = implied / kernel.k
    else:
        v, vp = _lattice(A1_LATTICE_HIGH)
        s = v + vp
        ratio = eval_phi(kernel, v, vp) * s**alpha / (1.0 + s)
        implied = float(ratio.max())
        worst_ratio = implied / kernel.k
        # these families outgrow (1+s)/s^alpha for large s, whatever k is
        a1 = False
        reasons.append(
            f"A1: {kernel.family.value} kernel grows faster than k(1+s)/s^alpha as s -> infinity"
        )
    if worst_ratio > 1.0 + 1e-12:
        a1 = False
        reasons.append(f"A1: kernel exceeds envelope by factor {worst_ratio:.6g} (needs k >= {implied:.6g})")

    # daughter distribution
    a3 = -1.0 < th <= 0.0
    if not a3:
        reasons.append(f"A3: theta={th} outside the half-open interval (-1, 0]")
    try:
        eta = compute_eta(daughter, alpha)
    except InadmissibleParameters as exc:
        a3 = False
        eta = (th + 2.0) / (th + 1.0 - 2.0 * alpha) if th + 1.0 - 2.0 * alpha > 0 else math.inf
        reasons.append(f"A3: {exc}")
    t_n = daughter.total_number

    # local coalescence efficiency
    if eta > 2.0 and math.isfinite(eta):
        thr = a2_threshold(eta)
    else:
        thr = float("nan")
    if eff.kind == "constant":
        e_min = eff.value
    else:
        v, vp = _lattice(A2_LATTICE_HIGH)
        # lattice is inside (0,1)^2 apart from the closed upper corner
        inside = (v < 1.0) & (vp < 1.0)
        e_min = float(eff.coalescence(v, vp)[inside].min())
    margin = e_min - thr if math.isfinite(thr) else float("nan")
    a2 = bool(math.isfinite(thr) and margin >= 0.0)
    if not a2:
        if math.isfinite(thr):
            reasons.append(f"A2: min E on (0,1)^2 = {e_min:.6g} below threshold {thr:.6g}")
        else:
            reasons.append("A2: no efficiency threshold exists without eta(2 alpha) > 2")

    return AdmissibilityReport(
        eta_2alpha=eta,
        t_n=t_n,
        e_threshold=thr,
        passes_A1=bool(a1),
        passes_A2=a2,
        passes_A3=a3,
        a1_worst_ratio=float(worst_ratio),
        a2_worst_margin=float(margin),
        implied_k=float(implied),
        reasons=reasons,
    )

"""
Analytic storage capacity, uncorrelated and correlated.

Uncorrelated patterns: alpha_c(kappa) = 1 / f_gar(kappa). The value is exact
for kappa >= 0; for kappa < 0 only the upper bound is rigorous.

Correlated patterns (entries +1 w.p. (1+m_a)/2) replace f_gar by

    f_cor(kappa) = min_v  (1+m_a)/2 f_gar(a_minus) + (1-m_a)/2 f_gar(a_plus)
    a_minus = (kappa - v m_a)/s,  a_plus = (kappa + v m_a)/s,  s = sqrt(1 - m_a^2)

The objective is convex in v (f_gar'' = 2 Phi > 0 composed with an affine
map), so a coarse scan followed by golden-section search is reliable. The
capacity is exact when kappa_adj = a_minus(v_opt) >= 0.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .gaussian import f_gar, f_gar_derivative

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class Exactness(str, enum.Enum):
    EXACT = "Exact"
    UPPER_BOUND_ONLY = "UpperBoundOnly"


class BracketNotMinimizing(RuntimeError):
    pass


class NoSignChange(RuntimeError):
    pass


@dataclass(frozen=True)
class CorrelationParams:
    m_a: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.m_a < 1.0):
            raise ValueError(f"m_a must satisfy 0 <= m_a < 1, got {self.m_a}")

    @property
    def scale(self) -> float:
        return math.sqrt(1.0 - self.m_a * self.m_a)


@dataclass(frozen=True)
class CapacityResult:
    kappa: float
    f_value: float
    alpha_c: float
    exactness: Exactness
    v_opt: float | None = None
    kappa_adj: float | None = None


@dataclass(frozen=True)
class ScalarMinimizeSpec:
    bracket_lo: float = -50.0
    bracket_hi: float = 50.0
    tol: float = 1e-10
    max_iters: int = 200
    coarse_points: int = 401

    def __post_init__(self):
        if not self.bracket_lo < self.bracket_hi:
            raise ValueError("bracket_lo must be below bracket_hi")
        if not self.tol > 0:
            raise ValueError("tol must be positive")


def alpha_c_uncorrelated(kappa: float) -> CapacityResult:
    f = f_gar(kappa)
    exactness = Exactness.EXACT if kappa >= 0 else Exactness.UPPER_BOUND_ONLY
    return CapacityResult(kappa=kappa, f_value=f, alpha_c=1.0 / f, exactness=exactness)


def f_gar_cor_objective(kappa: float, v: float, params: CorrelationParams) -> float:
    m, s = params.m_a, params.scale
    a_minus = (kappa - v * m) / s
    a_plus = (kappa + v * m) / s
    return 0.5 * (1.0 + m) * f_gar(a_minus) + 0.5 * (1.0 - m) * f_gar(a_plus)


def _objective_slope(kappa: float, v: float, params: CorrelationParams) -> float:
    m, s = params.m_a, params.scale
    a_minus = (kappa - v * m) / s
    a_plus = (kappa + v * m) / s
    return 0.5 * m / s * ((1.0 - m) * f_gar_derivative(a_plus) - (1.0 + m) * f_gar_derivative(a_minus))


def _polish(kappa, params, lo, hi, max_iters=200):
    """Bisection on the sign of the (increasing) v-derivative inside [lo, hi].

    Function-value comparisons cannot place a minimizer closer than about
    sqrt(machine eps); the derivative's sign can.
    """
    if _objective_slope(kappa, lo, params) > 0 or _objective_slope(kappa, hi, params) < 0:
        return None
    for _ in range(max_iters):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if _objective_slope(kappa, mid, params) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _golden_section(fun, lo: float, hi: float, tol: float, max_iters: int) -> float:
    c = hi - _GOLDEN * (hi - lo)
    d = lo + _GOLDEN * (hi - lo)
    fc, fd = fun(c), fun(d)
    for _ in range(max_iters):
        if hi - lo <= tol:
            break
        if fc <= fd:
            hi, d, fd = d, c, fc
            c = hi - _GOLDEN * (hi - lo)
            fc = fun(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + _GOLDEN * (hi - lo)
            fd = fun(d)
    return 0.5 * (lo + hi)


def f_gar_cor(
    kappa: float,
    params: CorrelationParams,
    spec: ScalarMinimizeSpec | None = None,
) -> tuple[float, float]:
    """Minimize the correlated objective over v. Returns ``(f_value, v_opt)``.

    A coarse scan of the bracket locates the basin (and would expose any
    second local minimum); golden-section search then refines inside the
    neighbouring scan cells, and a bisection on the sign of the closed-form
    derivative pins v_opt down to rounding. At m_a = 0 the objective is flat in v and
    v_opt is 0 by convention.
    """
    spec = spec or ScalarMinimizeSpec()
    if params.m_a == 0.0:
        return f_gar(kappa), 0.0

    def objective(v):
        return f_gar_cor_objective(kappa, v, params)

    n = spec.coarse_points
    step = (spec.bracket_hi - spec.bracket_lo) / (n - 1)
    grid = [spec.bracket_lo + i * step for i in range(n)]
    values = [objective(v) for v in grid]
    best = min(range(n), key=values.__getitem__)
    interior_min = min(values[1:-1])
    if values[0] < interior_min or values[-1] < interior_min:
        raise BracketNotMinimizing(
            f"objective minimum escapes [{spec.bracket_lo}, {spec.bracket_hi}]"
        )
    local_minima = [
        i for i in range(1, n - 1) if values[i] < values[i - 1] and values[i] < values[i + 1]
    ]
    if len(local_minima) > 1:
        # not expected for a convex objective; refine every basin and keep the best
        candidates = local_minima
    else:
        candidates = [best]

    v_opt, f_opt = None, math.inf
    for i in candidates:
        lo = grid[max(i - 1, 0)]
        hi = grid[min(i + 1, n - 1)]
        v = _golden_section(objective, lo, hi, spec.tol, spec.max_iters)
        refined = _polish(kappa, params, lo, hi)
        if refined is not None and objective(refined) <= objective(v):
            v = refined
        fv = objective(v)
        if fv < f_opt:
            v_opt, f_opt = v, fv
    return f_opt, v_opt


def kappa_adj(
    kappa: float,
    params: CorrelationParams,
    spec: ScalarMinimizeSpec | None = None,
) -> float:
    """Correlation-adjusted margin (kappa - v_opt m_a) / sqrt(1 - m_a^2)."""
    _, v_opt = f_gar_cor(kappa, params, spec)
    return (kappa - v_opt * params.m_a) / params.scale


def kappa_critical(
    params: CorrelationParams,
    tol: float = 1e-8,
    lo: float = -5.0,
    hi: float = 5.0,
    max_doublings: int = 6,
) -> float:
    """Root of kappa -> kappa_adj(kappa) by bisection.

    The search interval is doubled (about its centre) until kappa_adj changes
    sign. Returns the midpoint of the final bracket once |kappa_adj| <= tol.
    """
    if not 0.0 < params.m_a < 1.0:
        raise ValueError("kappa_critical needs 0 < m_a < 1")
    f_lo, f_hi = kappa_adj(lo, params), kappa_adj(hi, params)
    for _ in range(max_doublings):
        if f_lo <= 0.0 <= f_hi or f_hi <= 0.0 <= f_lo:
            break
        centre, half = 0.5 * (lo + hi), hi - lo
        lo, hi = centre - half, centre + half
        f_lo, f_hi = kappa_adj(lo, params), kappa_adj(hi, params)
    else:
        raise NoSignChange(f"kappa_adj keeps one sign on [{lo}, {hi}]")
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f_mid = kappa_adj(mid, params)
        if abs(f_mid) <= tol and hi - lo <= tol:
            return mid
        if (f_mid < 0.0) == (f_lo < 0.0):
            lo, f_lo = mid, f_mid
        else:
            hi, f_hi = mid, f_mid
        if hi - lo < 1e-15 * max(1.0, abs(mid)):
            break
    mid = 0.5 * (lo + hi)
    return mid


def alpha_c_correlated(
    kappa: float,
    params: CorrelationParams,
    spec: ScalarMinimizeSpec | None = None,
) -> CapacityResult:
    f, v_opt = f_gar_cor(kappa, params, spec)
    adj = (kappa - v_opt * params.m_a) / params.scale
    exact = kappa >= v_opt * params.m_a
    return CapacityResult(
        kappa=kappa,
        f_value=f,
        alpha_c=1.0 / f,
        exactness=Exactness.EXACT if exact else Exactness.UPPER_BOUND_ONLY,
        v_opt=v_opt,
        kappa_adj=adj,
    )

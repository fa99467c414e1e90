"""Airy spectral machinery for the half-line Dirichlet problem.

The transverse eigenproblem (-d^2/dx^2 + x) w = omega w on (0, infinity) with
w(0) = 0 is solved by w(x) = Ai(x - omega_k) at the negated Airy zeros
omega_k.  Everything downstream (eigenfunction normalization, reflection
resummation, packet phases) runs through the rotated solutions

    A_pm(z) = exp(-+ i pi/3) Ai(exp(-+ i pi/3) z),   Ai(-z) = A_+(z) + A_-(z),

and the spectral phase

    L(omega) = pi + i log(A_-(omega)/A_+(omega)) = pi + 2 arg A_+(omega),

which is real analytic, strictly increasing, satisfies L(0) = pi/3 and
L(omega_k) = 2 pi k, and converts eigenmode sums into sums over reflections
via the resummation identity

    sum_{N in Z} int exp(-i N L(w)) f(w) dw = 2 pi sum_{k>=1} f(omega_k)/L'(omega_k).

Evaluation notes.  On the real line A_+(w) = (Ai(-w) - i Bi(-w))/2 exactly;
this is cheaper and better conditioned than rotating the argument into the
complex plane, so it is the production path, with the rotated-argument
definition kept for cross-checks.  L' has the closed form
2/(pi (Ai^2 + Bi^2)(-w)) by the Wronskian, which at a zero reduces to
2 pi Ai'(-omega_k)^2.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import special

from .errors import (
    BranchUnwrapError,
    NonConvergenceError,
    PhaseUnresolvableError,
    UnconvergedTailWarning,
)

__all__ = [
    "AI_ARG_FLOOR",
    "AiryZeroTable",
    "BumpSpec",
    "PhaseLConfig",
    "PoissonCheck",
    "a_minus",
    "a_plus",
    "a_plus_rotated",
    "ai",
    "ai_prime",
    "airy_zeros",
    "b_remainder",
    "b_series_fit",
    "get_zero_table",
    "phase_L",
    "phase_L_prime",
    "phase_L_prime_at_zero",
    "poisson_sum_check",
    "standard_bump",
]

# Below this argument the period of Ai's oscillation is ~ |x|^{-1/2} ~ 1e-3
# times machine epsilon relative to |x|: amplitude computable, phase not.
AI_ARG_FLOOR = -1.0e6

# |w| beyond which A_pm growth/oscillation loses relative accuracy in the
# real-line formula; callers are warned once per process.
_APM_ACCURACY_EDGE = 1.0e3

_ROT = complex(math.cos(math.pi / 3.0), -math.sin(math.pi / 3.0))


def _guard(x):
    x = np.asarray(x, dtype=float)
    if np.any(x < AI_ARG_FLOOR):
        raise PhaseUnresolvableError(
            f"Airy argument below {AI_ARG_FLOOR:g}: oscillation phase is not "
            "resolvable in double precision"
        )
    return x


def _maybe_scalar(out, x):
    if np.ndim(x) == 0:
        return out[()]
    return out


def ai(x):
    """Ai(x), vectorized; raises PhaseUnresolvableError for x < -1e6."""
    xa = _guard(x)
    return _maybe_scalar(special.airy(xa)[0], x)


def ai_prime(x):
    """Ai'(x), vectorized; same domain guard as ai()."""
    xa = _guard(x)
    return _maybe_scalar(special.airy(xa)[1], x)


def a_plus(omega):
    """A_+(w) for real w via the identity (Ai(-w) - i Bi(-w))/2."""
    w = np.asarray(omega, dtype=float)
    if np.any(np.abs(w) > _APM_ACCURACY_EDGE):
        warnings.warn(
            "A_pm evaluation beyond |w| = 1e3: relative accuracy degrades",
            stacklevel=2,
        )
    aiv, _, biv, _ = special.airy(-w)
    return _maybe_scalar(0.5 * (aiv - 1j * biv), omega)


def a_minus(omega):
    """A_-(w) = conj(A_+(w)) for real w."""
    return np.conj(a_plus(omega))


def a_plus_rotated(omega):
    """A_+ by its rotated-argument definition (complex Airy); cross-check path."""
    z = _ROT * np.asarray(omega, dtype=complex)
    return _maybe_scalar(_ROT * special.airy(z)[0], omega)


# ---------------------------------------------------------------------------
# phase function L
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PhaseLConfig:
    """Evaluation policy for the spectral phase.

    series_cutoff: terms retained when fitting the asymptotic remainder
        series (diagnostics only, see b_series_fit).
    switch_point: w at or above which the asymptotic reference
        (4/3) w^{3/2} + pi/2 selects the branch winding directly; below it
        the winding is tracked continuously along a grid from w = 0.
    """

    series_cutoff: int = 4
    switch_point: float = 1.0

    def __post_init__(self):
        if self.switch_point < 1.0:
            raise ValueError("switch_point must be >= 1 (asymptotic branch "
                             "reference is only trusted from w = 1 on)")
        if self.series_cutoff < 1:
            raise ValueError("series_cutoff must be a positive integer")


DEFAULT_PHASE_CFG = PhaseLConfig()


def _principal_L(w):
    """pi + 2 arg A_+(w), in (-pi, 3 pi]."""
    aiv, _, biv, _ = special.airy(-w)
    return np.pi + 2.0 * np.arctan2(-biv, aiv)


@lru_cache(maxsize=16)
def _tracked_grid(switch_point):
    """Continuously unwrapped L on [0, switch_point], step <= 0.02."""
    n = max(8, int(math.ceil(switch_point / 0.02)) + 1)
    grid = np.linspace(0.0, switch_point, n)
    theta = np.unwrap(_principal_L(grid))
    # anchor: L(0) = pi/3 exactly
    theta += (np.pi / 3.0) - theta[0]
    if np.any(np.diff(theta) <= 0.0):
        raise BranchUnwrapError("non-monotone phase samples while tracking "
                                "the branch of L on a step-0.02 grid")
    return grid, theta


def phase_L(omega, cfg: PhaseLConfig = DEFAULT_PHASE_CFG):
    """Continuous branch of L(w) with L(0) = pi/3 and L -> 0 as w -> -inf.

    w <= 0: L = 2 atan(Ai(-w)/Bi(-w)), an exact rearrangement that is
    positive and cancellation-free deep in the tunneling region.
    0 < w < switch_point: principal value plus a winding count tracked
    continuously from w = 0.  w >= switch_point: winding selected by the
    asymptotic reference (4/3) w^{3/2} + pi/2 (remainder ~0.15 at w = 1,
    far below the pi safety margin).
    """
    w = np.asarray(omega, dtype=float)
    out = np.empty(w.shape, dtype=float)

    neg = w <= 0.0
    if np.any(neg):
        aiv, _, biv, _ = special.airy(-w[neg])
        out[neg] = 2.0 * np.arctan(aiv / biv)

    mid = (~neg) & (w < cfg.switch_point)
    if np.any(mid):
        grid, theta = _tracked_grid(cfg.switch_point)
        pv = _principal_L(w[mid])
        near = np.interp(w[mid], grid, theta)
        out[mid] = pv + 2.0 * np.pi * np.round((near - pv) / (2.0 * np.pi))

    hi = w >= cfg.switch_point
    if np.any(hi):
        pv = _principal_L(w[hi])
        ref = (4.0 / 3.0) * w[hi] ** 1.5 + np.pi / 2.0
        out[hi] = pv + 2.0 * np.pi * np.round((ref - pv) / (2.0 * np.pi))

    return _maybe_scalar(out, omega)


def phase_L_prime(omega):
    """L'(w) = 2/(pi (Ai^2 + Bi^2)(-w)), by the Wronskian Ai Bi' - Ai' Bi = 1/pi."""
    w = np.asarray(omega, dtype=float)
    aiv, _, biv, _ = special.airy(-w)
    return _maybe_scalar(2.0 / (np.pi * (aiv * aiv + biv * biv)), omega)


def phase_L_prime_at_zero(k, table: "AiryZeroTable | None" = None):
    """L'(omega_k) = 2 pi Ai'(-omega_k)^2 from the tabulated zeros."""
    if table is None:
        table = get_zero_table(int(np.max(k)))
    kk = np.asarray(k, dtype=int)
    if np.any(kk < 1) or np.any(kk > len(table.omega)):
        raise IndexError("zero index outside the computed table")
    return _maybe_scalar(table.lprime[kk - 1], k)


# ---------------------------------------------------------------------------
# zero table
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AiryZeroTable:
    """Negated Airy zeros omega_k (Ai(-omega_k) = 0) with L'(omega_k).

    Arrays are index-aligned: omega[j] and lprime[j] belong to k = j + 1.
    Immutable after construction; safe to share across threads.
    """

    omega: np.ndarray
    lprime: np.ndarray

    def __post_init__(self):
        self.omega.setflags(write=False)
        self.lprime.setflags(write=False)

    def __len__(self):
        return len(self.omega)

    @property
    def entries(self):
        """Records (k, omega_k, lprime_k), 1-based."""
        return [(j + 1, float(self.omega[j]), float(self.lprime[j]))
                for j in range(len(self.omega))]


def airy_zeros(count, *, tol=1e-13, max_iter=50):
    """First `count` zeros by asymptotic guess + safeguarded vectorized Newton.

    Guess omega_k ~ (3 pi (4k - 1)/8)^{2/3} is within ~2e-2 at k = 1 and
    improves like k^{-2}; Newton with a +-0.5 step clamp converges in a
    handful of iterations.  The per-zero convergence target is
    max(tol, position-ulp floor): one ulp of w_k moves Ai(-w_k) by about
    eps * w_k * |Ai'(-w_k)|, which passes 1e-12 near k ~ 5e3, so a flat
    1e-13 residual is unattainable in doubles for large tables.  The best
    iterate per element is kept, so the returned residuals sit on that
    floor.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    k = np.arange(1, count + 1, dtype=float)
    w = (3.0 * np.pi * (4.0 * k - 1.0) / 8.0) ** (2.0 / 3.0)
    eps = np.finfo(float).eps
    best_w = w.copy()
    best_f = np.full(count, np.inf)
    for _ in range(max_iter):
        f, fp, _, _ = special.airy(-w)
        af = np.abs(f)
        improved = af < best_f
        best_f = np.where(improved, af, best_f)
        best_w = np.where(improved, w, best_w)
        floor = np.maximum(tol, 8.0 * eps * w * np.maximum(np.abs(fp), 1.0))
        if np.all(best_f <= floor):
            break
        # d/dw Ai(-w) = -Ai'(-w); Newton step is +Ai(-w)/Ai'(-w)
        w = w + np.clip(f / fp, -0.5, 0.5)
    else:
        raise NonConvergenceError(
            f"Airy zero polish: worst residual {np.max(best_f):.2e} after "
            f"{max_iter} iterations"
        )
    w = best_w
    if np.any(np.diff(w) <= 0.0):
        raise NonConvergenceError("zero table lost strict ordering")
    _, aip, _, _ = special.airy(-w)
    return AiryZeroTable(omega=w, lprime=2.0 * np.pi * aip * aip)


@lru_cache(maxsize=8)
def _cached_table(count):
    return airy_zeros(count)


def get_zero_table(min_count):
    """Memoized zero table with at least min_count entries (rounded up to a
    power of two, floor 64, so repeat callers share one build)."""
    n = 64
    while n < min_count:
        n *= 2
    return _cached_table(n)


# ---------------------------------------------------------------------------
# asymptotic remainder B
# ---------------------------------------------------------------------------

def b_remainder(u, n_terms=1):
    """B(u) = (4/3) u + pi/2 - L(u^{2/3}) for u >= 1, evaluated directly.

    The asymptotic series sum_k b_k u^{-k} is never used to produce the
    value; its leading coefficients are recoverable by b_series_fit for
    diagnostics (n_terms is accepted for signature compatibility with that
    fit and does not change the returned value).
    """
    del n_terms
    ua = np.asarray(u, dtype=float)
    if np.any(ua < 1.0):
        raise ValueError("b_remainder domain is u >= 1")
    out = (4.0 / 3.0) * ua + np.pi / 2.0 - phase_L(ua ** (2.0 / 3.0))
    return _maybe_scalar(out, u)


def b_series_fit(n_terms=1, u_lo=1e2, u_hi=1e4, n_samples=200):
    """Least-squares coefficients (b_1, ..., b_n) of B(u) ~ sum b_j u^{-j}.

    Fit of u*B(u) against [1, 1/u, ...] on a log-spaced grid; diagnostics
    only.  Empirically b_1 ~ 5/24.
    """
    u = np.geomspace(u_lo, u_hi, n_samples)
    y = u * b_remainder(u)
    cols = [u ** (1 - j) for j in range(1, n_terms + 1)]
    design = np.stack(cols, axis=1)
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    return coef


# ---------------------------------------------------------------------------
# Poisson-style resummation check
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BumpSpec:
    """Compactly supported C-infinity bump exp(-1/(1-v^2)) on |v| < 1 with
    v = 2 (w - center)/width; amplitude scales the whole profile."""

    center: float
    width: float
    amplitude: float = 1.0

    def support(self):
        return (self.center - 0.5 * self.width, self.center + 0.5 * self.width)

    def __call__(self, w):
        v = 2.0 * (np.asarray(w, dtype=float) - self.center) / self.width
        out = np.zeros(v.shape, dtype=float)
        inside = np.abs(v) < 1.0
        out[inside] = np.exp(-1.0 / (1.0 - v[inside] ** 2))
        return self.amplitude * _maybe_scalar(out, w)


def standard_bump(amplitude=1.0):
    """Width-0.5 bump centered at the first zero: the reference test profile."""
    table = get_zero_table(1)
    return BumpSpec(center=float(table.omega[0]), width=0.5,
                    amplitude=amplitude)


@dataclass(frozen=True)
class PoissonCheck:
    lhs: complex
    rhs: float
    gap: float
    tail: float
    quad_err: float
    n_max: int
    k_max: int


def poisson_sum_check(test_fn, n_max, k_max, *, target_tol=1e-6,
                      nodes=None) -> PoissonCheck:
    """Both sides of the resummation identity for a bump profile.

    lhs = sum_{|N| <= n_max} int exp(-i N L(w)) f(w) dw on the bump support
    (shared Gauss-Legendre grid, all N at once; node count doubled once for
    the quadrature error estimate), rhs = 2 pi sum_{k <= k_max}
    f(omega_k)/L'(omega_k).  Warns when the largest |N| shell still
    contributes more than 0.1 * target_tol * max(|rhs|, 1).
    """
    lo, hi = test_fn.support()
    table = get_zero_table(k_max)
    wk = table.omega[:k_max]
    rhs = float(2.0 * np.pi * np.sum(test_fn(wk) / table.lprime[:k_max]))

    if nodes is None:
        # resolve n_max oscillations of exp(-i N L) across the support
        span = phase_L(hi) - phase_L(lo)
        nodes = int(max(512, 4 * n_max * span / np.pi))

    def n_sum(n_nodes):
        xg, wg = leggauss(n_nodes)
        wgrid = 0.5 * (lo + hi) + 0.5 * (hi - lo) * xg
        weights = 0.5 * (hi - lo) * wg
        fw = test_fn(wgrid) * weights
        lw = phase_L(wgrid)
        ns = np.arange(-n_max, n_max + 1)
        shells = np.exp(-1j * np.outer(ns, lw)) @ fw
        return complex(shells.sum()), float(np.max(np.abs(shells[[0, -1]])))

    lhs, tail = n_sum(nodes)
    lhs2, _ = n_sum(2 * nodes)
    quad_err = abs(lhs2 - lhs)
    lhs = lhs2

    if tail > 0.1 * target_tol * max(abs(rhs), 1.0):
        warnings.warn(
            f"resummation tail: |N| = {n_max} shell contributes {tail:.2e}",
            UnconvergedTailWarning, stacklevel=2,
        )
    return PoissonCheck(lhs=lhs, rhs=rhs, gap=abs(lhs - rhs), tail=tail,
                        quad_err=quad_err, n_max=n_max, k_max=k_max)

"""Geometry of the model convex domain and its transverse eigenpairs.

The model operator on the half-space {x > 0} is

    D = d^2/dx^2 + sum_j d^2/dy_j^2 + x q(dy),

with q a positive definite quadratic form in the tangential frequencies.
After a tangential Fourier transform the transverse problem at frequency
theta is Sturm-Liouville on (0, infinity):

    (-d^2/dx^2 + |theta|^2 + x q(theta)) e = lambda e,   e(0) = 0,

solved by shifted-rescaled Airy functions at the negated Airy zeros:

    lambda_k(theta) = |theta|^2 + omega_k q(theta)^{2/3},
    e_k(x, theta)   = sqrt(2 pi) q(theta)^{1/6} / sqrt(L'(omega_k))
                      * Ai(x q(theta)^{1/3} - omega_k),

an orthonormal basis of L^2(R_+) for each theta.  This module also fixes
the concrete smooth cutoff profiles used by every evaluator and the dyadic
ladder of transverse-energy scales.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial.legendre import leggauss

from . import airy
from .errors import ConfigError

__all__ = [
    "CutoffFamily",
    "ModelParams",
    "QuadraticForm",
    "cutoff_eval",
    "delta_expansion_residual",
    "dyadic_scales",
    "eigenfunction",
    "eigenvalue",
    "geometry_from_json",
    "geometry_to_json",
    "q_eval",
    "smoothstep",
]


# ---------------------------------------------------------------------------
# quadratic form
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuadraticForm:
    """Positive definite q(theta) = sum q_jk theta_j theta_k on R^{d-1}.

    m0/M0 are the extreme values of q^{1/2} on the unit sphere, i.e. the
    square roots of the extreme eigenvalues of the coefficient matrix.
    """

    coeffs: np.ndarray
    m0: float = field(init=False)
    M0: float = field(init=False)

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.coeffs, dtype=float))
        if c.shape[0] != c.shape[1]:
            raise ValueError("coefficient matrix must be square")
        if not np.allclose(c, c.T, atol=1e-14):
            raise ValueError("coefficient matrix must be symmetric")
        eig = np.linalg.eigvalsh(c)
        if eig[0] <= 0:
            raise ValueError("form must be positive definite")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "m0", float(math.sqrt(eig[0])))
        object.__setattr__(self, "M0", float(math.sqrt(eig[-1])))

    @property
    def dim(self):
        return self.coeffs.shape[0]

    @classmethod
    def unit(cls, d=2):
        """The disk approximation q(theta) = |theta|^2 in dimension d."""
        return cls(np.eye(d - 1))

    @classmethod
    def diagonal(cls, entries):
        return cls(np.diag(np.asarray(entries, dtype=float)))

    def _theta(self, theta):
        th = np.asarray(theta, dtype=float)
        if self.dim == 1 and (th.ndim == 0 or th.shape[-1] != 1):
            th = th[..., np.newaxis]
        if th.shape[-1] != self.dim:
            raise ValueError(
                f"theta has {th.shape[-1]} components, form expects {self.dim}"
            )
        return th

    def q(self, theta):
        th = self._theta(theta)
        return np.einsum("...j,jk,...k->...", th, self.coeffs, th)

    def grad_q(self, theta):
        """Gradient 2 q theta, same leading shape as theta."""
        th = self._theta(theta)
        return 2.0 * np.einsum("jk,...k->...j", self.coeffs, th)


def q_eval(form: QuadraticForm, theta):
    """q(theta); theta may be scalar when the form is one-dimensional."""
    return form.q(theta)


# ---------------------------------------------------------------------------
# cutoff profiles
# ---------------------------------------------------------------------------

def smoothstep(t):
    """C-infinity monotone step: 0 for t <= 0, 1 for t >= 1, built from the
    exp(-1/t) mollifier as f(t)/(f(t) + f(1-t))."""
    t = np.asarray(t, dtype=float)
    out = np.where(t >= 1.0, 1.0, 0.0)
    mid = (t > 0.0) & (t < 1.0)
    if np.any(mid):
        tm = t[mid]
        a = np.exp(-1.0 / tm)
        b = np.exp(-1.0 / (1.0 - tm))
        out = out.astype(float)
        out[mid] = a / (a + b)
    if np.ndim(t) == 0:
        return out[()]
    return out


def _standard_psi(u):
    """Plateau bump: support [1/2, 3/2], identically 1 on [3/4, 5/4]."""
    u = np.asarray(u, dtype=float)
    return smoothstep(4.0 * (u - 0.5)) * smoothstep(4.0 * (1.5 - u))


def _standard_phi(u):
    """Even plateau: support [-1, 1], identically 1 on [-1/2, 1/2]."""
    u = np.asarray(u, dtype=float)
    return smoothstep(2.0 * (1.0 - np.abs(u)))


@dataclass(frozen=True)
class CutoffFamily:
    """The smooth profiles entering every truncation.

    psi, psi1: bumps supported in [1/2, 3/2] (frequency-shell truncations);
    phi: even plateau supported in [-1, 1], 1 on [-1/2, 1/2];
    psi2(u) = phi(u) - phi(2u), supported in [1/4, 1], the dyadic rung
    profile (sums of scaled copies telescope exactly).
    """

    psi: Callable = _standard_psi
    psi1: Callable = _standard_psi
    phi: Callable = _standard_phi

    def psi2(self, u):
        u = np.asarray(u, dtype=float)
        return self.phi(u) - self.phi(2.0 * u)


DEFAULT_CUTOFFS = CutoffFamily()


def cutoff_eval(family: CutoffFamily, which, u, scale=1.0):
    """Evaluate a family profile at u/scale."""
    if scale <= 0:
        raise ValueError("scale must be positive")
    u = np.asarray(u, dtype=float) / scale
    try:
        profile = {"psi": family.psi, "psi1": family.psi1,
                   "phi": family.phi, "psi2": family.psi2}[which]
    except KeyError:
        raise ValueError(f"unknown profile {which!r}") from None
    return profile(u)


def dyadic_scales(gamma_min, eps0):
    """Rung scales (2 gamma_min, 4 gamma_min, ..., eps0_eff) and the snapped
    top scale eps0_eff = 2^J gamma_min, J = round(log2(eps0/gamma_min)).

    Snapping makes the telescoping identity
        phi(u/eps0_eff) = phi(u/gamma_min) + sum_j psi2(u/gamma_j)
    exact; without it the top rung would be clipped and the identity broken.
    """
    if not 0.0 < gamma_min:
        raise ValueError("gamma_min must be positive")
    if eps0 < gamma_min:
        raise ValueError("eps0 below gamma_min leaves no admissible scales")
    # snap downward (never above the stated truncation level); the 1e-9
    # nudge keeps exact powers of two from flooring one rung short
    J = max(0, math.floor(math.log2(eps0 / gamma_min) + 1e-9))
    eps0_eff = gamma_min * 2.0 ** J
    scales = gamma_min * 2.0 ** np.arange(1, J + 1)
    return scales, eps0_eff


# ---------------------------------------------------------------------------
# parameter bundle
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelParams:
    """Semiclassical parameter h, source height a, truncation level eps0."""

    h: float
    a: float
    eps0: float = 0.3
    d: int = 2
    cutoffs: CutoffFamily = DEFAULT_CUTOFFS

    def __post_init__(self):
        if not 0.0 < self.h < 1.0:
            raise ValueError("h must lie in (0, 1)")
        if not 0.0 <= self.a <= self.eps0:
            raise ValueError("a must lie in [0, eps0]")
        if not 0.0 < self.eps0 < 1.0:
            raise ValueError("eps0 must lie in (0, 1)")
        if self.d < 2:
            raise ValueError("d must be >= 2")

    @property
    def gamma_min(self):
        """Bottom transverse scale sup(a, h^{2/3})."""
        return max(self.a, self.h ** (2.0 / 3.0))

    def validate_against(self, form: QuadraticForm):
        if not self.eps0 < form.m0 / 2.0:
            raise ValueError(
                f"eps0 = {self.eps0} must be below m0/2 = {form.m0 / 2.0}"
            )

    def ladder(self):
        """(rung scales, snapped eps0) for this parameter set."""
        return dyadic_scales(self.gamma_min, self.eps0)


# ---------------------------------------------------------------------------
# eigenpairs
# ---------------------------------------------------------------------------

def eigenvalue(params: ModelParams, form: QuadraticForm, k, theta):
    """lambda_k(theta) = |theta|^2 + omega_k q(theta)^{2/3}."""
    del params
    th = form._theta(theta)
    table = airy.get_zero_table(int(np.max(k)))
    wk = table.omega[np.asarray(k) - 1]
    norm2 = np.sum(th * th, axis=-1)
    return norm2 + wk * form.q(th) ** (2.0 / 3.0)


def eigenfunction(params: ModelParams, form: QuadraticForm, k, x, theta):
    """Normalized Dirichlet eigenfunction
    sqrt(2 pi) q^{1/6} / sqrt(L'(omega_k)) * Ai(x q^{1/3} - omega_k).

    x broadcasts against the leading shape of theta; callers wanting an
    (n_x, n_theta) array pass x with shape (n_x, 1).
    """
    del params
    table = airy.get_zero_table(int(np.max(k)))
    wk = table.omega[np.asarray(k) - 1]
    lp = table.lprime[np.asarray(k) - 1]
    q = form.q(theta)
    x = np.asarray(x, dtype=float)
    amp = math.sqrt(2.0 * np.pi) * q ** (1.0 / 6.0) / np.sqrt(lp)
    return amp * airy.ai(x * q ** (1.0 / 3.0) - wk)


def delta_expansion_residual(params: ModelParams, form: QuadraticForm,
                             theta, f, K, n_nodes=None):
    """L^2 distance between a profile f on (0, infinity) and its projection
    onto the first K eigenfunctions, by Gauss-Legendre quadrature up to the
    K-th turning point + 15 (the basis tail beyond is exponentially small)."""
    q13 = form.q(theta) ** (1.0 / 3.0)
    table = airy.get_zero_table(K)
    x_hi = (table.omega[K - 1] + 15.0) / q13
    if n_nodes is None:
        n_nodes = max(800, 16 * K)
    xg, wg = leggauss(n_nodes)
    xs = 0.5 * x_hi * (xg + 1.0)
    ws = 0.5 * x_hi * wg
    basis = eigenfunction(params, form, np.arange(1, K + 1), xs[:, None], theta)
    fv = f(xs)
    coef = basis.T @ (ws * fv)
    recon = basis @ coef
    return float(np.sqrt(np.sum(ws * (fv - recon) ** 2)))


# ---------------------------------------------------------------------------
# geometry serialization
# ---------------------------------------------------------------------------

def geometry_to_json(form: QuadraticForm, eps0, d=None):
    """JSON fragment {"d": ..., "q": [[...]], "eps0": ...}."""
    return {"d": int(d if d is not None else form.dim + 1),
            "q": form.coeffs.tolist(),
            "eps0": float(eps0)}


def geometry_from_json(obj, path="geometry"):
    """Parse and validate a geometry fragment; returns (form, eps0, d)."""
    if not isinstance(obj, dict):
        raise ConfigError(path, "expected an object")
    for key in ("d", "q", "eps0"):
        if key not in obj:
            raise ConfigError(f"{path}.{key}", "missing required field")
    unknown = set(obj) - {"d", "q", "eps0"}
    if unknown:
        raise ConfigError(f"{path}.{sorted(unknown)[0]}", "unknown field")
    d = obj["d"]
    if not isinstance(d, int) or d < 2:
        raise ConfigError(f"{path}.d", "must be an integer >= 2")
    try:
        form = QuadraticForm(np.asarray(obj["q"], dtype=float))
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{path}.q", str(exc)) from None
    if form.dim != d - 1:
        raise ConfigError(f"{path}.q", f"matrix must be {d-1}x{d-1} for d={d}")
    eps0 = obj["eps0"]
    if not isinstance(eps0, (int, float)) or not 0.0 < eps0 < 1.0:
        raise ConfigError(f"{path}.eps0", "must lie in (0, 1)")
    if not eps0 < form.m0 / 2.0:
        raise ConfigError(f"{path}.eps0", f"must be below m0/2 = {form.m0/2.0}")
    return form, float(eps0), d

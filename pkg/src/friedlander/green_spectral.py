"""Green function evaluation by boundary-adapted mode summation.

The propagator kernel restricted to a frequency shell is assembled as a sum
over transverse Airy modes integrated against the tangential frequency:

    G(t, x, y) = (2 pi h)^{-(d-1)} sum_k int e^{i(<y,eta> + t lam_k(eta))/h}
                 psi1(sqrt(lam_k(eta))) w(mode scale) e_k(x) e_k(a) d eta,

with lam_k(eta) = |eta|^2 + h^{2/3} omega_k q(eta)^{2/3} and the product of
eigenfunctions expanded through the Airy factors.  The mode weight w is a
dyadic rung profile psi2, a low-mode plateau phi, or the full truncation
phi at the snapped top scale; rung sums plus the low block telescope exactly
to the full truncation when evaluated on a shared frequency grid.

Quadrature is deterministic: node counts come from a phase-variation budget
computed for the largest admissible mode window, so every entry point sees
the same grid and discrete telescoping holds to rounding.  Error estimates
are node-doubling differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from . import airy
from .errors import ConfigError
from .model import ModelParams, QuadraticForm, cutoff_eval
from .oscquad import composite_gl, nodes_for_variation

__all__ = [
    "GreenField",
    "ModeWindow",
    "g_band_spectral",
    "g_gamma_spectral",
    "g_low_spectral",
    "g_total_spectral",
    "ladder_blocks",
    "mode_window",
    "propagator_factors",
]

# envelope for which the node budgets below were sized
_H_LO, _H_HI = 0.005, 0.5
# tangential integration domain: the shell cutoff psi(|eta|) vanishes
# outside [1/2, 3/2]; small margins keep the support edge interior
_ETA_LO, _ETA_HI = 0.45, 1.55
_NODES_PER_RAD = 3.0
_NODE_FLOOR = 512
_NODE_BUDGET = 600_000


def _check_desk(params: ModelParams):
    if not (_H_LO <= params.h <= _H_HI):
        raise ConfigError(
            "h", f"{params.h} outside the supported envelope "
            f"[{_H_LO}, {_H_HI}]")


def _annulus_q13(form: QuadraticForm):
    """Range of q^{1/3} over the effective tangential annulus."""
    lo = (form.m0 ** 2 * _ETA_LO ** 2) ** (1.0 / 3.0)
    hi = (form.M0 ** 2 * _ETA_HI ** 2) ** (1.0 / 3.0)
    return lo, hi


@dataclass(frozen=True)
class ModeWindow:
    """Inclusive index range [k_lo, k_hi] of transverse modes that can meet
    a given weight profile at scale gamma; empty when k_hi < k_lo."""

    gamma: float
    k_lo: int
    k_hi: int

    @property
    def is_empty(self):
        return self.k_hi < self.k_lo

    @property
    def count(self):
        return max(0, self.k_hi - self.k_lo + 1)

    @property
    def ks(self):
        if self.is_empty:
            return np.empty(0, dtype=int)
        return np.arange(self.k_lo, self.k_hi + 1)


def _window_from_bounds(gamma, w_lo, w_hi):
    """Window of k with omega_k in [w_lo, w_hi] (w_lo may be 0)."""
    # grow the table until it strictly covers w_hi
    count = 64
    table = airy.get_zero_table(count)
    while table.omega[-1] < w_hi:
        count *= 2
        table = airy.get_zero_table(count)
    k_lo = int(np.searchsorted(table.omega, w_lo, side="left")) + 1
    k_hi = int(np.searchsorted(table.omega, w_hi, side="right"))
    return ModeWindow(gamma=float(gamma), k_lo=k_lo, k_hi=k_hi)


def mode_window(params: ModelParams, form: QuadraticForm, gamma,
                pad=0) -> ModeWindow:
    """Mode indices whose scaled parameter h^{2/3} omega_k / (gamma q^{1/3})
    can enter the rung profile support [1/4, 1] somewhere on the tangential
    annulus, widened by a factor 2 each way.  `pad` adds that many extra
    indices on each side (weights there vanish identically; used by the
    window-stability checks)."""
    params.validate_against(form)
    _, eps0_eff = params.ladder()
    if gamma > eps0_eff * (1.0 + 1e-12):
        raise ConfigError(
            "gamma", f"{gamma} exceeds the snapped truncation level "
            f"{eps0_eff}")
    if gamma <= 0:
        raise ConfigError("gamma", "must be positive")
    q13_lo, q13_hi = _annulus_q13(form)
    h23 = params.h ** (2.0 / 3.0)
    win = _window_from_bounds(gamma, gamma * q13_lo / 8.0 / h23,
                              2.0 * gamma * q13_hi / h23)
    if pad:
        return ModeWindow(gamma=win.gamma, k_lo=max(1, win.k_lo - pad),
                          k_hi=win.k_hi + pad)
    return win


def _low_window(params: ModelParams, form: QuadraticForm, scale, pad=0):
    """Modes reachable by the plateau profile phi at the given scale
    (support u <= 1, widened by 2)."""
    _, q13_hi = _annulus_q13(form)
    h23 = params.h ** (2.0 / 3.0)
    win = _window_from_bounds(scale, 0.0, 2.0 * scale * q13_hi / h23)
    if pad:
        return ModeWindow(gamma=win.gamma, k_lo=1, k_hi=win.k_hi + pad)
    return win


def ladder_blocks(params: ModelParams):
    """The exact partition of the truncation weight phi(u / eps0):

        phi(u/gamma_min) + sum_j psi2(u/gamma_j) + [phi(u/eps0) -
        phi(u/eps0_eff)],

    as (kind, scale) entries with kind in {"phi", "psi2", "band"}.  The
    trailing band is present only when eps0 is not a dyadic multiple of
    gamma_min; without it the snapped ladder would silently truncate below
    the declared level and can lose entire modes near the edge."""
    scales, eps0_eff = params.ladder()
    blocks = [("phi", params.gamma_min)]
    blocks += [("psi2", float(g)) for g in scales]
    if params.eps0 > eps0_eff * (1.0 + 1e-12):
        blocks.append(("band", (eps0_eff, params.eps0)))
    return blocks


def block_mode_mass(params: ModelParams, form: QuadraticForm, kind, scale,
                    n_eta=512):
    """Sup over modes and frequencies of a block's composite weight
    psi(|eta|) psi1(sqrt(lambda_k)) P(h^{2/3} omega_k / q^{1/3}).

    Zero means the block's window holds no modes the profile can see; such
    blocks contribute no field in either representation."""
    win = _window_for(params, form, kind, scale)
    if win.is_empty:
        return 0.0
    eta = np.linspace(_ETA_LO, _ETA_HI, n_eta)
    q13 = (form.m0 ** 2 * eta ** 2) ** (1.0 / 3.0)
    q13_hi = (form.M0 ** 2 * eta ** 2) ** (1.0 / 3.0)
    h23 = params.h ** (2.0 / 3.0)
    shell = cutoff_eval(params.cutoffs, "psi", eta)
    table = airy.get_zero_table(win.k_hi)
    best = 0.0
    for k in win.ks:
        wk = table.omega[k - 1]
        for q3 in (q13, q13_hi):
            lam = eta * eta + h23 * wk * q3 * q3
            w = shell * cutoff_eval(params.cutoffs, "psi1", np.sqrt(lam))
            w = w * _mode_weight(params, kind, scale, h23 * wk / q3)
            best = max(best, float(np.max(np.abs(w))))
    return best


# ---------------------------------------------------------------------------
# field container
# ---------------------------------------------------------------------------

@dataclass
class GreenField:
    """Sampled kernel values on an (x, y) probe grid at one time.

    values[i, j] corresponds to xs[i], ys[j]; err_est is a single
    node-doubling estimate for the whole field (max abs difference), and
    meta records the window and quadrature actually used.
    """

    t: float
    xs: np.ndarray
    ys: np.ndarray
    values: np.ndarray
    err_est: float
    meta: dict = field(default_factory=dict)

    @property
    def sup(self):
        return float(np.max(np.abs(self.values)))

    def argmax(self):
        i, j = np.unravel_index(int(np.argmax(np.abs(self.values))),
                                self.values.shape)
        return i, j


def _coerce_ys(ys, d):
    ys = np.atleast_1d(np.asarray(ys, dtype=float))
    if d == 2:
        if ys.ndim == 2 and ys.shape[1] == 1:
            ys = ys[:, 0]
        if ys.ndim != 1:
            raise ConfigError("ys", "expected a 1-d array of tangential "
                              "offsets for d = 2")
        return ys
    if ys.ndim != 2 or ys.shape[1] != d - 1:
        raise ConfigError("ys", f"expected shape (n, {d - 1}) for d = {d}")
    return ys


def _phase_budget(params, form, t, ys, w_hi):
    """Total phase variation bound over the eta domain: transport + kernel
    oscillation + two Airy factors each winding by at most (2/3) omega^{3/2}
    plus the variation of the turning-point rescaling."""
    h = params.h
    _, q13_hi = _annulus_q13(form)
    lam_hi = _ETA_HI ** 2 + params.h ** (2.0 / 3.0) * w_hi * q13_hi ** 2
    y_max = float(np.max(np.abs(ys))) if np.size(ys) else 0.0
    var = (abs(t) * lam_hi + 2.0 * y_max * _ETA_HI) / h
    var += 3.0 * max(w_hi, 1.0) ** 1.5
    return var


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------

def _mode_weight(params, kind, scale, u):
    """Mode-scale weight at u = h^{2/3} omega_k / q^{1/3}(eta): rung
    profile, plateau, or a plateau difference for the top band."""
    if kind == "band":
        lo, hi = scale
        return (cutoff_eval(params.cutoffs, "phi", u, hi)
                - cutoff_eval(params.cutoffs, "phi", u, lo))
    which = "psi2" if kind == "psi2" else "phi"
    return cutoff_eval(params.cutoffs, which, u, scale)


def _window_for(params, form, kind, scale, pad=0):
    if kind == "psi2":
        return mode_window(params, form, scale, pad)
    if kind == "band":
        return _low_window(params, form, scale[1], pad)
    return _low_window(params, form, scale, pad)


def _assemble_1d(params, form, kind, scale, t, xs, ys, n_eta, pad=0):
    """d = 2 field on a given eta node count; returns values[nx, ny]."""
    h = params.h
    h23 = h ** (2.0 / 3.0)
    win = _window_for(params, form, kind, scale, pad)
    nx, ny = len(xs), len(ys)
    vals = np.zeros((nx, ny), dtype=complex)
    if win.is_empty:
        return vals, win
    half = n_eta // 2
    e_neg, w_neg = composite_gl(-_ETA_HI, -_ETA_LO, half)
    e_pos, w_pos = composite_gl(_ETA_LO, _ETA_HI, half)
    eta = np.concatenate([e_neg, e_pos])
    wq = np.concatenate([w_neg, w_pos])
    q = form.q(eta)
    q13 = q ** (1.0 / 3.0)
    shell = cutoff_eval(params.cutoffs, "psi", np.abs(eta))
    table = airy.get_zero_table(win.k_hi)
    e_y = np.exp(1j * np.outer(eta, ys) / h)
    t_x = np.multiply.outer(np.asarray(xs, dtype=float), q13) / h23
    t_a = params.a * q13 / h23
    for k in win.ks:
        wk = table.omega[k - 1]
        lam = eta * eta + h23 * wk * q13 * q13
        sym = shell * cutoff_eval(params.cutoffs, "psi1", np.sqrt(lam))
        sym = sym * _mode_weight(params, kind, scale, h23 * wk / q13)
        if not np.any(sym):
            continue
        amp = (2.0 * np.pi * q13 / h23 / table.lprime[k - 1]) * sym * wq
        row = amp * airy.ai(t_a - wk) * np.exp(1j * t * lam / h)
        vals += (airy.ai(t_x - wk) * row) @ e_y
    vals *= 1.0 / (2.0 * np.pi * h)
    return vals, win


def _assemble_radial(params, form, kind, scale, t, xs, ys, n_eta, pad=0):
    """d = 3 field for an isotropic form, via the Hankel transform
    int e^{i<y,eta>/h} F(|eta|) d eta = 2 pi int J0(|y| r / h) F(r) r dr."""
    c = form.coeffs[0, 0]
    if not np.allclose(form.coeffs, c * np.eye(form.dim), atol=1e-12):
        raise ConfigError(
            "q", "d = 3 evaluation requires an isotropic form")
    h = params.h
    h23 = h ** (2.0 / 3.0)
    win = _window_for(params, form, kind, scale, pad)
    nx, ny = len(xs), len(ys)
    vals = np.zeros((nx, ny), dtype=complex)
    if win.is_empty:
        return vals, win
    r, wq = composite_gl(_ETA_LO, _ETA_HI, n_eta)
    q = c * r * r
    q13 = q ** (1.0 / 3.0)
    shell = cutoff_eval(params.cutoffs, "psi", r)
    table = airy.get_zero_table(win.k_hi)
    y_abs = np.linalg.norm(ys, axis=1)
    e_y = special.j0(np.outer(r, y_abs) / h)
    t_x = np.multiply.outer(np.asarray(xs, dtype=float), q13) / h23
    t_a = params.a * q13 / h23
    for k in win.ks:
        wk = table.omega[k - 1]
        lam = r * r + h23 * wk * q13 * q13
        sym = shell * cutoff_eval(params.cutoffs, "psi1", np.sqrt(lam))
        sym = sym * _mode_weight(params, kind, scale, h23 * wk / q13)
        if not np.any(sym):
            continue
        amp = (2.0 * np.pi * q13 / h23 / table.lprime[k - 1]) * sym * wq * r
        row = amp * airy.ai(t_a - wk) * np.exp(1j * t * lam / h)
        vals += (airy.ai(t_x - wk) * row) @ e_y
    vals *= 2.0 * np.pi / (2.0 * np.pi * h) ** 2
    return vals, win


def _evaluate(params, form, kind, scale, t, xs, ys, nodes_scale=1, pad=0):
    _check_desk(params)
    params.validate_against(form)
    if params.d not in (2, 3):
        raise ConfigError("d", "spectral evaluation supports d = 2 and the "
                          "isotropic d = 3 reduction")
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    ys = _coerce_ys(ys, params.d)
    if np.any(xs < 0):
        raise ConfigError("xs", "normal coordinates must be >= 0")
    # budget from the full truncation window so every entry point shares
    # one grid and rung sums telescope discretely
    full = _low_window(params, form, params.eps0)
    w_hi = airy.get_zero_table(max(full.k_hi, 1)).omega[max(full.k_hi, 1) - 1]
    var = _phase_budget(params, form, t, ys, w_hi)
    n = nodes_for_variation(var, nodes_per_rad=_NODES_PER_RAD,
                            floor=_NODE_FLOOR, budget=_NODE_BUDGET)
    n *= nodes_scale
    assemble = _assemble_1d if params.d == 2 else _assemble_radial
    coarse, _ = assemble(params, form, kind, scale, t, xs, ys, n, pad)
    fine, win = assemble(params, form, kind, scale, t, xs, ys, 2 * n, pad)
    err = float(np.max(np.abs(fine - coarse)))
    scale_rec = (tuple(map(float, scale)) if isinstance(scale, tuple)
                 else float(scale))
    meta = {"kind": kind, "scale": scale_rec, "k_lo": win.k_lo,
            "k_hi": win.k_hi, "n_eta": 2 * n, "phase_variation": var}
    return GreenField(t=float(t), xs=xs, ys=ys, values=fine, err_est=err,
                      meta=meta)


def g_gamma_spectral(params: ModelParams, form: QuadraticForm, gamma, t,
                     xs, ys, *, nodes_scale=1, pad=0) -> GreenField:
    """Single dyadic rung: mode weight psi2 at transverse scale gamma."""
    mode_window(params, form, gamma)  # validates gamma against the ladder
    return _evaluate(params, form, "psi2", gamma, t, xs, ys, nodes_scale, pad)


def g_low_spectral(params: ModelParams, form: QuadraticForm, scale, t,
                   xs, ys, *, nodes_scale=1, pad=0) -> GreenField:
    """Low block: plateau weight phi at the given scale (no reflections
    resolved; the gamma_min block of the ladder)."""
    return _evaluate(params, form, "phi", scale, t, xs, ys, nodes_scale, pad)


def g_band_spectral(params: ModelParams, form: QuadraticForm, scale_lo,
                    scale_hi, t, xs, ys, *, nodes_scale=1,
                    pad=0) -> GreenField:
    """Difference of plateau truncations phi(u/scale_hi) - phi(u/scale_lo):
    the non-dyadic remainder between the snapped ladder top and the declared
    truncation level."""
    if not 0.0 < scale_lo < scale_hi:
        raise ConfigError("scale", "band requires 0 < scale_lo < scale_hi")
    return _evaluate(params, form, "band", (scale_lo, scale_hi), t, xs, ys,
                     nodes_scale, pad)


def g_total_spectral(params: ModelParams, form: QuadraticForm, t, xs, ys, *,
                     nodes_scale=1, pad=0) -> GreenField:
    """Full truncated kernel in one pass: plateau weight at the declared
    truncation level.  Equals the sum of all ladder_blocks fields."""
    return _evaluate(params, form, "phi", params.eps0, t, xs, ys,
                     nodes_scale, pad)


def propagator_factors(params: ModelParams, form: QuadraticForm, t, k, eta):
    """Per-(k, eta) evolution factor e^{i t lam_k(eta) / h}; exposing it
    keeps the unit-modulus property directly checkable."""
    h23 = params.h ** (2.0 / 3.0)
    eta = np.asarray(eta, dtype=float)
    q = form.q(eta)
    table = airy.get_zero_table(int(np.max(k)))
    wk = table.omega[np.asarray(k) - 1]
    if params.d == 2:
        norm2 = eta * eta
    else:
        norm2 = np.sum(eta * eta, axis=-1)
    lam = norm2 + h23 * wk * q ** (2.0 / 3.0)
    return np.exp(1j * t * lam / params.h)

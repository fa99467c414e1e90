"""Mode-sum Green function evaluators: windows, assembly, invariants."""

import numpy as np
import pytest
from scipy import special

from friedlander import airy
from friedlander.errors import ConfigError, UnresolvedOscillationError
from friedlander.green_spectral import (
    GreenField,
    ModeWindow,
    g_band_spectral,
    g_gamma_spectral,
    g_low_spectral,
    g_total_spectral,
    ladder_blocks,
    mode_window,
    propagator_factors,
)
from friedlander.model import (
    DEFAULT_CUTOFFS,
    ModelParams,
    QuadraticForm,
    cutoff_eval,
)
from friedlander.oscquad import (
    composite_gl,
    nodes_for_variation,
    osc_integral_1d,
    phase_variation,
)

UNIT = QuadraticForm.unit(2)


# ---------------------------------------------------------------------------
# quadrature helpers
# ---------------------------------------------------------------------------

def test_composite_gl_integrates_oscillatory_bump():
    # int_0^1 sin(50 x) dx = (1 - cos 50)/50, checked to near rounding
    xs, ws = composite_gl(0.0, 1.0, 600)
    got = np.sum(ws * np.sin(50.0 * xs))
    want = (1.0 - np.cos(50.0)) / 50.0
    assert abs(got - want) < 1e-13


def test_composite_gl_weights_sum_to_length():
    xs, ws = composite_gl(-2.0, 3.0, 257)
    assert abs(np.sum(ws) - 5.0) < 1e-12
    assert xs[0] > -2.0 and xs[-1] < 3.0


def test_phase_variation_linear_phase():
    var = phase_variation(lambda x: 40.0 * x, 0.0, 2.0)
    assert abs(var - 80.0) < 1e-9


def test_node_budget_enforced():
    with pytest.raises(UnresolvedOscillationError):
        nodes_for_variation(1e9, budget=1000)


def test_osc_integral_matches_closed_form():
    # int_0^1 e^{i 30 x} dx
    val, err, n = osc_integral_1d(lambda x: np.ones_like(x),
                                  lambda x: 30.0 * x, 0.0, 1.0)
    want = (np.exp(30j) - 1.0) / 30j
    assert abs(val - want) < 1e-12
    assert err < 1e-10
    assert n >= 512


# ---------------------------------------------------------------------------
# mode windows
# ---------------------------------------------------------------------------

def test_window_at_gallery_scale_contains_first_mode():
    p = ModelParams(h=0.05, a=0.05)
    win = mode_window(p, UNIT, p.h ** (2.0 / 3.0))
    assert win.k_lo <= 1 <= win.k_hi


def test_window_empty_for_tiny_scale():
    p = ModelParams(h=0.05, a=0.05)
    win = mode_window(p, UNIT, 0.03)
    assert win.is_empty
    assert win.count == 0
    assert win.ks.size == 0


def test_window_scale_above_truncation_rejected():
    p = ModelParams(h=0.05, a=0.05)
    with pytest.raises(ConfigError, match="gamma"):
        mode_window(p, UNIT, 0.5)


def test_window_nonpositive_scale_rejected():
    p = ModelParams(h=0.05, a=0.05)
    with pytest.raises(ConfigError, match="gamma"):
        mode_window(p, UNIT, 0.0)


def test_window_pad_extends_and_clamps():
    p = ModelParams(h=0.02, a=0.02)
    base = mode_window(p, UNIT, 0.15)
    padded = mode_window(p, UNIT, 0.15, pad=2)
    assert padded.k_lo == max(1, base.k_lo - 2)
    assert padded.k_hi == base.k_hi + 2


def test_window_grows_with_gamma():
    p = ModelParams(h=0.005, a=0.005)
    k_hi = [mode_window(p, UNIT, g).k_hi for g in (0.05, 0.1, 0.2)]
    assert k_hi[0] < k_hi[1] < k_hi[2]


def test_window_covers_every_contributing_mode():
    # brute scan: any k with nonvanishing shell * rung weight lies inside
    p = ModelParams(h=0.02, a=0.02)
    gamma = 0.15
    win = mode_window(p, UNIT, gamma)
    eta = np.linspace(0.45, 1.55, 2000)
    q13 = UNIT.q(eta) ** (1.0 / 3.0)
    h23 = p.h ** (2.0 / 3.0)
    table = airy.get_zero_table(win.k_hi + 8)
    for k in range(1, win.k_hi + 6):
        wk = table.omega[k - 1]
        lam = eta * eta + h23 * wk * q13 * q13
        w = (cutoff_eval(DEFAULT_CUTOFFS, "psi", eta)
             * cutoff_eval(DEFAULT_CUTOFFS, "psi1", np.sqrt(lam))
             * cutoff_eval(DEFAULT_CUTOFFS, "psi2", h23 * wk / q13, gamma))
        if np.max(np.abs(w)) > 0:
            assert win.k_lo <= k <= win.k_hi


# ---------------------------------------------------------------------------
# field assembly against an independent oracle
# ---------------------------------------------------------------------------

def _oracle_total_2d(params, form, t, x, y, n=400_001):
    """Trapezoid evaluation of the full truncated mode sum, written directly
    from the kernel formula (independent of the module's quadrature)."""
    h = params.h
    h23 = h ** (2.0 / 3.0)
    eta = np.linspace(-1.6, 1.6, n)
    q13 = np.abs(form.q(eta)) ** (1.0 / 3.0)
    table = airy.get_zero_table(64)
    val = 0.0
    for k in range(1, 9):
        wk = table.omega[k - 1]
        lam = eta * eta + h23 * wk * q13 * q13
        w = (cutoff_eval(params.cutoffs, "psi", np.abs(eta))
             * cutoff_eval(params.cutoffs, "psi1", np.sqrt(lam))
             * cutoff_eval(params.cutoffs, "phi",
                           h23 * wk / np.maximum(q13, 1e-300), params.eps0))
        integ = (w * 2.0 * np.pi * q13 / h23 / table.lprime[k - 1]
                 * airy.ai(x * q13 / h23 - wk) * airy.ai(params.a * q13 / h23 - wk)
                 * np.exp(1j * (y * eta + t * lam) / h))
        val += np.trapezoid(integ, eta)
    return val / (2.0 * np.pi * h)


def test_total_field_matches_independent_oracle():
    p = ModelParams(h=0.05, a=0.25)
    t, x, y = 0.3, 0.2, 0.15
    want = _oracle_total_2d(p, UNIT, t, x, y)
    got = g_total_spectral(p, UNIT, t, [x], [y]).values[0, 0]
    assert abs(got - want) / abs(want) < 1e-9


def test_field_at_origin_time_is_positive_on_diagonal():
    # t = 0, x = a, y = 0: every summand is a nonnegative weight times a
    # squared Airy amplitude
    p = ModelParams(h=0.05, a=0.25)
    v = g_total_spectral(p, UNIT, 0.0, [p.a], [0.0]).values[0, 0]
    assert v.real > 0
    assert abs(v.imag) < 1e-12 * v.real


def test_small_time_limit_matches_frozen_snapshot():
    p = ModelParams(h=0.02, a=0.15)
    xs = np.linspace(0.02, 0.3, 15)
    ys = np.linspace(-0.12, 0.12, 13)
    f0 = g_total_spectral(p, UNIT, 0.0, xs, ys)
    f1 = g_total_spectral(p, UNIT, 1e-6, xs, ys)
    gap = np.max(np.abs(f1.values - f0.values)) / f0.sup
    assert gap < 1e-3


def test_small_time_field_peaks_at_source():
    # needs a mode-rich window to localize, hence the envelope floor
    p = ModelParams(h=0.005, a=0.15)
    xs = np.linspace(0.01, 0.3, 30)
    ys = np.linspace(-0.08, 0.08, 17)
    f = g_total_spectral(p, UNIT, 1e-6, xs, ys)
    i, j = f.argmax()
    assert abs(xs[i] - p.a) < 1e-12
    assert abs(ys[j]) < 1e-12


def test_propagator_factors_unimodular():
    p = ModelParams(h=0.05, a=0.2)
    eta = np.linspace(0.5, 1.5, 64)
    for t in (0.0, 0.37, 5.0):
        fac = propagator_factors(p, UNIT, t, 3, eta)
        assert np.max(np.abs(np.abs(fac) - 1.0)) < 1e-10


def test_symmetry_in_source_and_observation_height():
    # same ladder on both sides: keep both heights below h^{2/3}
    h = 0.04
    rng = np.random.default_rng(7)
    for _ in range(10):
        x1, x2 = rng.uniform(0.02, 0.11, size=2)
        y = rng.uniform(-0.4, 0.4)
        t = rng.uniform(0.1, 0.6)
        va = g_total_spectral(ModelParams(h=h, a=x1), UNIT, t, [x2], [y])
        vb = g_total_spectral(ModelParams(h=h, a=x2), UNIT, t, [x1], [y])
        num = abs(va.values[0, 0] - vb.values[0, 0])
        assert num / max(abs(va.values[0, 0]), 1e-300) < 1e-10


@pytest.mark.parametrize("h,a", [(0.05, 0.25), (0.02, 0.15)])
def test_ladder_blocks_telescope_to_total(h, a):
    p = ModelParams(h=h, a=a)
    t = 0.6
    xs = np.linspace(0.05, 0.45, 5)
    ys = np.linspace(-0.5, 0.5, 5)
    total = g_total_spectral(p, UNIT, t, xs, ys)
    acc = np.zeros_like(total.values)
    for kind, sc in ladder_blocks(p):
        if kind == "phi":
            acc += g_low_spectral(p, UNIT, sc, t, xs, ys).values
        elif kind == "psi2":
            acc += g_gamma_spectral(p, UNIT, sc, t, xs, ys).values
        else:
            acc += g_band_spectral(p, UNIT, sc[0], sc[1], t, xs, ys).values
    assert np.max(np.abs(acc - total.values)) <= 1e-12 * total.sup


def test_ladder_block_weights_partition_pointwise():
    # per (k, eta) node the block weights sum to the full truncation weight
    p = ModelParams(h=0.05, a=0.25)
    u = np.linspace(0.0, 0.45, 1000)
    total = cutoff_eval(p.cutoffs, "phi", u, p.eps0)
    acc = np.zeros_like(u)
    for kind, sc in ladder_blocks(p):
        if kind == "phi":
            acc += cutoff_eval(p.cutoffs, "phi", u, sc)
        elif kind == "psi2":
            acc += cutoff_eval(p.cutoffs, "psi2", u, sc)
        else:
            acc += (cutoff_eval(p.cutoffs, "phi", u, sc[1])
                    - cutoff_eval(p.cutoffs, "phi", u, sc[0]))
    assert np.max(np.abs(acc - total)) < 1e-12


def test_window_padding_leaves_field_unchanged():
    p = ModelParams(h=0.05, a=0.25)
    xs = [0.1, 0.3]
    ys = [-0.2, 0.2]
    base = g_total_spectral(p, UNIT, 0.45, xs, ys)
    wide = g_total_spectral(p, UNIT, 0.45, xs, ys, pad=2)
    assert (np.max(np.abs(base.values - wide.values))
            < 1e-10 * max(base.sup, 1e-300))


def test_refined_grid_stays_within_error_estimate():
    p = ModelParams(h=0.05, a=0.25)
    xs, ys = [0.2], [0.3]
    base = g_total_spectral(p, UNIT, 0.5, xs, ys)
    fine = g_total_spectral(p, UNIT, 0.5, xs, ys, nodes_scale=2)
    diff = np.max(np.abs(fine.values - base.values))
    assert diff <= max(base.err_est, 1e-14 * base.sup)


def test_error_estimate_is_small_at_benign_parameters():
    p = ModelParams(h=0.05, a=0.25)
    f = g_total_spectral(p, UNIT, 0.4, [0.2], [0.1])
    assert f.err_est < 1e-8 * max(f.sup, 1e-300)


# ---------------------------------------------------------------------------
# gallery-scale behavior
# ---------------------------------------------------------------------------

def test_gallery_block_bound_constant_stable():
    # source hugging the boundary: the rung holding the first mode decays
    # like h^{-d} (h/t)^{(d-1)/2} h^{1/3} in sup norm, with a stable constant
    h = 0.02
    p = ModelParams(h=h, a=h ** (2.0 / 3.0) / 2.0)
    gamma = 4.0 * h ** (2.0 / 3.0)
    consts = []
    for t in (0.2, 0.4, 0.8):
        ys = np.linspace(-4.0 * t, 4.0 * t, 81)
        f = g_gamma_spectral(p, UNIT, gamma, t, [p.a], ys)
        consts.append(f.sup / (h ** -2 * (h / t) ** 0.5 * h ** (1.0 / 3.0)))
    assert max(consts) / min(consts) < 2.0


def test_gallery_bottom_scale_block_is_empty():
    # the first Airy zero sits above the h^{2/3} rung for the unit form, so
    # the literal bottom block vanishes and trivially satisfies its bound
    h = 0.02
    p = ModelParams(h=h, a=h ** (2.0 / 3.0) / 2.0)
    ys = np.linspace(-1.0, 1.0, 21)
    f = g_low_spectral(p, UNIT, p.gamma_min, 0.4, [p.a], ys)
    assert f.sup == 0.0


def test_gallery_source_mass_sits_in_upper_blocks():
    # with a = h the kernel is carried by the rungs that reach omega_1,
    # not by the bottom block
    p = ModelParams(h=0.05, a=0.05)
    ys = np.linspace(-1.6, 1.6, 41)
    total = g_total_spectral(p, UNIT, 0.4, [p.a], ys)
    bottom = g_low_spectral(p, UNIT, p.gamma_min, 0.4, [p.a], ys)
    assert total.sup > 0
    assert bottom.sup <= 1e-10 * total.sup


# ---------------------------------------------------------------------------
# d = 3 radial reduction
# ---------------------------------------------------------------------------

def _oracle_total_3d(params, form, t, x, y_vec, n_r=4000, n_th=512):
    """Polar tensor quadrature of the 2-d tangential integral; independent
    of the Bessel reduction."""
    h = params.h
    h23 = h ** (2.0 / 3.0)
    xg, wg = np.polynomial.legendre.leggauss(100)
    edges = np.linspace(0.45, 1.55, n_r // 100 + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * (edges[1] - edges[0])
    r = (mid[:, None] + half * xg[None, :]).ravel()
    wr = np.tile(half * wg, len(mid))
    th = np.linspace(0.0, 2.0 * np.pi, n_th + 1)[:-1]
    dth = th[1] - th[0]
    q13 = (r * r) ** (1.0 / 3.0)
    table = airy.get_zero_table(64)
    base = np.zeros_like(r, dtype=complex)
    for k in range(1, 6):
        wk = table.omega[k - 1]
        lam = r * r + h23 * wk * q13 * q13
        w = (cutoff_eval(params.cutoffs, "psi", r)
             * cutoff_eval(params.cutoffs, "psi1", np.sqrt(lam))
             * cutoff_eval(params.cutoffs, "phi", h23 * wk / q13, params.eps0))
        base += (w * 2.0 * np.pi * q13 / h23 / table.lprime[k - 1]
                 * airy.ai(x * q13 / h23 - wk)
                 * airy.ai(params.a * q13 / h23 - wk)
                 * np.exp(1j * t * lam / h))
    val = 0.0
    for theta in th:
        e1, e2 = r * np.cos(theta), r * np.sin(theta)
        val += np.sum(wr * base * r
                      * np.exp(1j * (y_vec[0] * e1 + y_vec[1] * e2) / h)) * dth
    return val / (2.0 * np.pi * h) ** 2


def test_radial_reduction_matches_polar_oracle():
    form3 = QuadraticForm.unit(3)
    p = ModelParams(h=0.05, a=0.08, d=3)
    ys = np.array([[0.15, 0.0], [0.1, 0.1]])
    got = g_total_spectral(p, form3, 0.25, [0.1], ys).values[0]
    for m, y_vec in enumerate(ys):
        want = _oracle_total_3d(p, form3, 0.25, 0.1, y_vec)
        assert abs(got[m] - want) / abs(want) < 1e-6


def test_radial_reduction_depends_only_on_offset_length():
    form3 = QuadraticForm.unit(3)
    p = ModelParams(h=0.05, a=0.08, d=3)
    ys = np.array([[0.2, 0.0], [0.0, 0.2], [0.2 / np.sqrt(2), 0.2 / np.sqrt(2)]])
    got = g_total_spectral(p, form3, 0.3, [0.1], ys).values[0]
    assert abs(got[0] - got[1]) < 1e-12 * abs(got[0])
    assert abs(got[0] - got[2]) < 1e-12 * abs(got[0])


def test_anisotropic_cross_section_rejected_in_three_dimensions():
    form3 = QuadraticForm.diagonal([1.0, 2.0])
    p = ModelParams(h=0.05, a=0.08, d=3)
    with pytest.raises(ConfigError, match="q"):
        g_total_spectral(p, form3, 0.3, [0.1], np.array([[0.1, 0.1]]))


# ---------------------------------------------------------------------------
# validation and container behavior
# ---------------------------------------------------------------------------

def test_resolution_envelope_enforced():
    with pytest.raises(ConfigError, match="h"):
        g_total_spectral(ModelParams(h=0.004, a=0.05), UNIT, 0.3, [0.1], [0.1])


def test_negative_height_rejected():
    p = ModelParams(h=0.05, a=0.2)
    with pytest.raises(ConfigError, match="xs"):
        g_total_spectral(p, UNIT, 0.3, [-0.1], [0.1])


def test_bad_offset_shape_rejected():
    p = ModelParams(h=0.05, a=0.2)
    with pytest.raises(ConfigError, match="ys"):
        g_total_spectral(p, UNIT, 0.3, [0.1], np.zeros((3, 2)))


def test_unsupported_dimension_rejected():
    form4 = QuadraticForm.unit(4)
    p = ModelParams(h=0.05, a=0.2, d=4)
    with pytest.raises(ConfigError, match="d"):
        g_total_spectral(p, form4, 0.3, [0.1], np.zeros((2, 3)))


def test_field_container_reports_argmax():
    vals = np.zeros((3, 4), dtype=complex)
    vals[1, 2] = 3.0 - 4.0j
    f = GreenField(t=0.1, xs=np.arange(3.0), ys=np.arange(4.0),
                   values=vals, err_est=0.0)
    assert f.sup == 5.0
    assert f.argmax() == (1, 2)

"""Split-step solver: transforms, flows, conservation, growth diagnostics."""

import math
import warnings

import numpy as np
import pytest

from friedlander.errors import (
    AliasingWarning,
    ConfigError,
    TurningPointOverflowError,
)
from friedlander.model import QuadraticForm
from friedlander.nls import (
    GrowthReport,
    ModalTransform,
    ObservableSeries,
    PeriodizedDomain,
    SpectralState,
    boundary_trace,
    build_transform,
    energy,
    evolve,
    gram_defect,
    grid_mass,
    growth_report,
    hm_norm,
    linear_flow,
    load_checkpoint,
    mass,
    nonlinear_phase,
    save_checkpoint,
    state_gallery_packet,
    state_interior_bump,
    state_random_shell,
    state_single_mode,
    strang_step,
    suggest_n_x,
    to_physical,
    to_spectral,
)

# ---------------------------------------------------------------------------
# shared small domain: cheap enough to rebuild, wide enough for 8 modes
# ---------------------------------------------------------------------------

DOM = PeriodizedDomain(x_max=18.0, n_x=160, ell=1.0, n_y=16, k_max=8)


@pytest.fixture(scope="module")
def tr():
    return build_transform(DOM)


def band_state(tr, seed=0, scale=1.0):
    rng = np.random.default_rng(seed)
    c = rng.standard_normal((8, 16)) + 1j * rng.standard_normal((8, 16))
    c = c * tr.mask * scale
    return SpectralState(coeffs=c)


# ---------------------------------------------------------------------------
# domain validation and transform construction
# ---------------------------------------------------------------------------


def test_domain_validation():
    with pytest.raises(ConfigError, match="x_max"):
        PeriodizedDomain(x_max=4.0, n_x=64, ell=1.0, n_y=16, k_max=4)
    with pytest.raises(ConfigError, match="n_y"):
        PeriodizedDomain(x_max=18.0, n_x=64, ell=1.0, n_y=15, k_max=4)
    with pytest.raises(ConfigError, match="n_x"):
        PeriodizedDomain(x_max=18.0, n_x=6, ell=1.0, n_y=16, k_max=4)
    with pytest.raises(ConfigError, match="form"):
        PeriodizedDomain(x_max=18.0, n_x=64, ell=1.0, n_y=16, k_max=4,
                         form=QuadraticForm.unit(3))


def test_gram_identity_per_fiber(tr):
    assert gram_defect(tr) < 1e-8


def test_forward_of_basis_mode_is_unit_vector(tr):
    st = state_single_mode(tr, k=3, m=2)
    v = to_physical(tr, st)
    back = to_spectral(tr, v)
    expect = np.zeros((8, 16), dtype=complex)
    expect[2, 2] = 1.0
    assert np.abs(back.coeffs - expect).max() < 1e-10


def test_quadrature_refinement_is_converged():
    # a fixed smooth Dirichlet function projected on two x resolutions
    def f(x, y):
        return (x * np.exp(-0.5 * (x - 3.0) ** 2)
                * np.exp(2j * y) / (1.0 + 0.1 * x))

    coeffs = []
    for n_x in (160, 320):
        dom = PeriodizedDomain(x_max=18.0, n_x=n_x, ell=1.0, n_y=16, k_max=8)
        t = build_transform(dom)
        y = np.arange(16) * (2.0 * math.pi / 16)
        vals = f(t.x[:, None], y[None, :])
        coeffs.append(to_spectral(t, vals).coeffs)
    assert np.abs(coeffs[0] - coeffs[1]).max() < 1e-9


def test_turning_point_retention_prefix(tr):
    # each column keeps a prefix of the k range; dead Nyquist column
    counts = tr.mask.sum(axis=0)
    assert counts[8] == 0
    for col in range(16):
        km = counts[col]
        assert tr.mask[:km, col].all()
        assert not tr.mask[km:, col].any()


def test_degenerate_domain_rejected():
    with pytest.raises(ConfigError, match="turning-point"):
        build_transform(
            PeriodizedDomain(x_max=5.5, n_x=64, ell=40.0, n_y=8, k_max=4)
        )


def test_suggest_n_x_floor():
    n = suggest_n_x(18.0, 1.0, 16, 8)
    assert n >= 16
    assert suggest_n_x(18.0, 1.0, 16, 30) >= 60


# ---------------------------------------------------------------------------
# grid <-> modal transforms
# ---------------------------------------------------------------------------


def test_round_trip_band_limited(tr):
    st = band_state(tr)
    v = to_physical(tr, st)
    back = to_spectral(tr, v)
    assert np.abs(back.coeffs - st.coeffs).max() < 1e-10


def test_parseval(tr):
    st = band_state(tr)
    v = to_physical(tr, st)
    assert abs(grid_mass(tr, v) - mass(st)) < 1e-9 * mass(st)


def test_nyquist_content_warns(tr):
    y = np.arange(16) * (2.0 * math.pi / 16)
    vals = np.exp(-tr.x)[:, None] * np.exp(1j * 8.0 * y)[None, :]
    with pytest.warns(AliasingWarning):
        to_spectral(tr, vals)


def test_padded_grid_matches_base_grid(tr):
    st = band_state(tr)
    v = to_physical(tr, st)
    vp = to_physical(tr, st, pad=2)
    assert np.abs(vp[:, ::2] - v).max() < 1e-10


# ---------------------------------------------------------------------------
# linear flow
# ---------------------------------------------------------------------------


def test_linear_flow_sign_matches_finite_difference(tr):
    # dt v = -i Delta v on an eigenmode: centered difference vs i*lam*v
    st = state_single_mode(tr, k=2, m=3)
    lam = tr.lam[1, 3]
    dt = 1e-7
    fd = (linear_flow(tr, st, dt).coeffs[1, 3]
          - linear_flow(tr, st, -dt).coeffs[1, 3]) / (2.0 * dt)
    assert abs(fd - 1j * lam) < 1e-6 * lam


def test_linear_flow_reversible(tr):
    st = band_state(tr)
    back = linear_flow(tr, linear_flow(tr, st, 0.37), -0.37)
    assert np.abs(back.coeffs - st.coeffs).max() < 1e-12
    assert abs(back.time) < 1e-15


def test_linear_flow_mass_exact_over_many_steps(tr):
    st = state_gallery_packet(tr, m_center=3, m_width=1.0)
    m0 = mass(st)
    for _ in range(1_000_000):
        st = linear_flow(tr, st, 1e-3)
    assert abs(mass(st) - m0) < 1e-12


# ---------------------------------------------------------------------------
# nonlinear phase and strang step
# ---------------------------------------------------------------------------


def test_nonlinear_phase_preserves_modulus(tr):
    st = band_state(tr)
    v = to_physical(tr, st)
    w = nonlinear_phase(v, 0.2, -1.0)
    assert np.abs(np.abs(w) - np.abs(v)).max() < 1e-15 * np.abs(v).max()


def test_nonlinear_phase_linearizes(tr):
    st = band_state(tr)
    v = to_physical(tr, st)
    sup2 = float(np.abs(v).max()) ** 2
    for dt in (1e-3, 1e-4):
        lin = v * (1.0 + 1j * dt * np.abs(v) ** 2)
        err = np.abs(nonlinear_phase(v, dt, 1.0) - lin).max()
        assert err < 0.6 * (dt * sup2) ** 2 * np.abs(v).max()


def test_nonlinear_phase_keeps_constant_in_y(tr):
    # an m = 0 state is y-constant and the cubic phase keeps it so
    st = state_single_mode(tr, k=2, m=0)
    out = strang_step(tr, st, 1e-2, 1.0)
    off = np.abs(out.coeffs[:, 1:]).max()
    assert off < 1e-13
    v = to_physical(tr, out)
    assert np.abs(v - v[:, :1]).max() < 1e-12 * np.abs(v).max()


def test_strang_with_zero_kappa_is_linear(tr):
    st = band_state(tr)
    a = strang_step(tr, st, 0.25, 0.0)
    b = linear_flow(tr, st, 0.25)
    assert np.abs(a.coeffs - b.coeffs).max() < 1e-12


def test_strang_self_convergence_order_two(tr):
    st = state_gallery_packet(tr, m_center=3, m_width=1.0)
    _, ref = evolve(tr, st, t_end=0.3, dt=0.3 / 384, kappa=1.0)
    errs = []
    for n in (24, 48):
        _, fin = evolve(tr, st, t_end=0.3, dt=0.3 / n, kappa=1.0)
        errs.append(np.abs(fin.coeffs - ref.coeffs).max())
    order = math.log2(errs[0] / errs[1])
    assert abs(order - 2.0) < 0.1


def test_gallery_smoke_run_with_observables(tr):
    st = state_gallery_packet(tr, m_center=3, m_width=1.0)
    series, fin = evolve(tr, st, t_end=1.0, dt=1e-2, kappa=1.0,
                         observe_every=0.01)
    assert not series.aborted
    assert len(series.t) == 101
    assert np.all(np.isfinite(series.energy))
    assert np.all(series.mass > 0.99)
    assert abs(fin.time - 1.0) < 1e-12


# ---------------------------------------------------------------------------
# observables
# ---------------------------------------------------------------------------


def test_single_mode_observables(tr):
    st = state_single_mode(tr, k=4, m=5)
    lam = tr.lam[3, 5]
    assert abs(mass(st) - 1.0) < 1e-15
    for order in (1, 2):
        expect = (1.0 + lam) ** (order / 2.0)
        assert abs(hm_norm(tr, st, order) - expect) < 1e-12 * expect
    zero = SpectralState(coeffs=np.zeros((8, 16), dtype=complex))
    assert energy(tr, zero, 1.0) == 0.0
    # linear energy of a unit mode is lam/2
    assert abs(energy(tr, st, 0.0) - 0.5 * lam) < 1e-12 * lam


def test_energy_drift_small_at_fixed_dt(tr):
    st = state_gallery_packet(tr, m_center=3, m_width=1.0)
    st = SpectralState(coeffs=0.5 * st.coeffs)
    series, _ = evolve(tr, st, t_end=1.0, dt=1e-3, kappa=1.0,
                       observe_every=0.5)
    rel = abs(series.energy[-1] - series.energy[0]) / abs(series.energy[0])
    assert rel < 1e-4


def test_boundary_trace_stays_dirichlet(tr):
    st = band_state(tr)
    assert boundary_trace(tr, st) < 1e-10
    _, fin = evolve(tr, st, t_end=0.1, dt=1e-2, kappa=1.0)
    assert boundary_trace(tr, fin) < 1e-10


# ---------------------------------------------------------------------------
# growth report
# ---------------------------------------------------------------------------


def test_growth_report_recovers_exponential_rate():
    t = np.linspace(0.0, 12.0, 200)
    series = ObservableSeries(
        t=t, mass=np.ones_like(t), energy=np.ones_like(t),
        hm={2: np.exp(0.3 * t)},
    )
    rep = growth_report(series, order=2)
    assert isinstance(rep, GrowthReport)
    assert abs(rep.rate - 0.3) < 1e-6
    assert rep.passed
    assert rep.t_span == pytest.approx(12.0)


def test_growth_report_zero_kappa_rate_vanishes(tr):
    st = band_state(tr, scale=0.3)
    series, _ = evolve(tr, st, t_end=2.0, dt=1e-2, kappa=0.0,
                       observe_every=0.1)
    rep = growth_report(series, order=2)
    assert abs(rep.rate) < 1e-10
    assert rep.passed


def test_growth_report_flags_superexponential():
    t = np.linspace(0.0, 10.0, 120)
    series = ObservableSeries(
        t=t, mass=np.ones_like(t), energy=np.ones_like(t),
        hm={2: np.exp(0.05 * t * t)},
    )
    assert not growth_report(series, order=2).passed


def test_growth_report_input_validation():
    t = np.linspace(0.0, 1.0, 10)
    series = ObservableSeries(t=t, mass=t, energy=t, hm={1: np.exp(t)})
    with pytest.raises(ConfigError, match="order"):
        growth_report(series, order=2)


# ---------------------------------------------------------------------------
# evolve guards
# ---------------------------------------------------------------------------


def test_evolve_rejects_bad_time_arguments(tr):
    st = band_state(tr)
    with pytest.raises(ConfigError, match="t_end"):
        evolve(tr, st, t_end=-1.0, dt=1e-2, kappa=0.0)
    with pytest.raises(ConfigError, match="dt"):
        evolve(tr, st, t_end=1.0, dt=0.3, kappa=0.0)


def test_evolve_rejects_non_finite_start(tr):
    c = np.zeros((8, 16), dtype=complex)
    c[0, 1] = np.inf
    with pytest.raises(ConfigError, match="finite"):
        evolve(tr, SpectralState(coeffs=c), t_end=1.0, dt=0.25, kappa=1.0)


def test_evolve_aborts_on_non_finite(tr):
    # a NaN coupling poisons the first kick; the march must stop and hand
    # back the last finite state
    st = state_gallery_packet(tr, m_center=3, m_width=1.0)
    with pytest.warns(RuntimeWarning, match="non-finite"):
        series, fin = evolve(tr, st, t_end=1.0, dt=0.25, kappa=float("nan"))
    assert series.aborted
    assert np.all(np.isfinite(fin.coeffs))
    assert np.abs(fin.coeffs - st.coeffs).max() == 0.0


def test_focusing_guard(tr):
    st = state_gallery_packet(tr, m_center=3, m_width=1.0)
    big = SpectralState(coeffs=2.0 * st.coeffs)
    with pytest.raises(ConfigError, match="small-mass"):
        evolve(tr, big, t_end=0.1, dt=1e-2, kappa=-1.0)
    small = SpectralState(coeffs=0.3 * st.coeffs)
    series, _ = evolve(tr, small, t_end=0.1, dt=1e-2, kappa=-1.0)
    assert not series.aborted


# ---------------------------------------------------------------------------
# state builders
# ---------------------------------------------------------------------------


def test_single_mode_requires_retained():
    # tight box: at m = 1 only omega_k < x_max - 5 = 7 survives, so k = 5
    # (omega_5 = 7.94) turns around outside the retained range
    tight = build_transform(
        PeriodizedDomain(x_max=12.0, n_x=64, ell=1.0, n_y=8, k_max=5)
    )
    assert state_single_mode(tight, k=2, m=1) is not None
    with pytest.raises(TurningPointOverflowError):
        state_single_mode(tight, k=5, m=1)


def test_gallery_packet_guards(tr):
    with pytest.raises(ConfigError, match="m_center"):
        state_gallery_packet(tr, m_center=9, m_width=1.0)
    with pytest.raises(ConfigError, match="band edge"):
        state_gallery_packet(tr, m_center=5, m_width=3.0)
    st = state_gallery_packet(tr, m_center=3, m_width=1.0)
    assert abs(mass(st) - 1.0) < 1e-12


def test_random_shell_band(tr):
    with pytest.raises(ConfigError, match="lam_lo"):
        state_random_shell(tr, 1e6, 2e6, seed=0)
    st = state_random_shell(tr, 5.0, 40.0, seed=1)
    assert abs(mass(st) - 1.0) < 1e-12
    sel = (tr.lam < 5.0) | (tr.lam > 40.0)
    assert np.abs(st.coeffs[sel]).max() == 0.0
    st2 = state_random_shell(tr, 5.0, 40.0, seed=1)
    assert np.array_equal(st.coeffs, st2.coeffs)


def test_interior_bump_normalized_and_interior():
    wide = build_transform(
        PeriodizedDomain(x_max=20.0, n_x=144, ell=1.0, n_y=8, k_max=16)
    )
    st = state_interior_bump(wide, x_center=6.0, x_width=0.8, m_mod=2)
    assert abs(mass(st) - 1.0) < 1e-12
    v = to_physical(wide, st)
    prof = np.sum(np.abs(v) ** 2, axis=1)
    # mass near the wall is negligible for a bump six units away
    near = wide.x < 2.0
    assert prof[near].max() < 1e-6 * prof.max()


def test_interior_bump_refused_beyond_turning_points(tr):
    # on the shared domain every retained mode at m = 3 turns around before
    # x = 6, so a bump at x = 8 cannot be represented
    with pytest.raises(TurningPointOverflowError, match="turning points"):
        state_interior_bump(tr, x_center=8.0, x_width=1.0, m_mod=3)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def test_checkpoint_round_trip(tmp_path, tr):
    st = band_state(tr, seed=5)
    st = SpectralState(coeffs=st.coeffs, time=1.375)
    path = tmp_path / "state.bin"
    save_checkpoint(path, tr, st)
    meta, back = load_checkpoint(path)
    assert meta["k_max"] == 8 and meta["n_y"] == 16
    assert meta["x_max"] == pytest.approx(18.0)
    assert back.time == 1.375
    assert np.array_equal(back.coeffs, st.coeffs)


def test_checkpoint_rejects_foreign_file(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"NOTMAGIC" + b"\x00" * 64)
    with pytest.raises(ConfigError, match="checkpoint"):
        load_checkpoint(path)
    short = tmp_path / "short.bin"
    short.write_bytes(b"FRD")
    with pytest.raises(ConfigError, match="truncated"):
        load_checkpoint(short)

"""Split-step spectral solver for the cubic Schrodinger flow on the model
half-cylinder.

The domain is x > 0 with y periodic of period 2 pi ell, and the evolution is

    -i dt v + Delta v = kappa |v|^2 v,   v(0, y, t) = 0,

with Delta the model operator dx^2 + (1 + x) q(dy) in its fibered form: for
each y-frequency theta = m / ell the fiber operator -f'' + x q(theta) f on
x > 0 with Dirichlet data has eigenfunctions Ai(x q^{1/3} - omega_k) and
eigenvalues lambda_{k,m} = theta^2 + omega_k q(theta)^{2/3}.  States are
stored as coefficient arrays over this modal basis; the linear flow is an
exact diagonal phase, and the cubic term is a pointwise phase applied on a
dealiased physical grid between modal transforms.

The zero fiber q(0) = 0 has no Airy quantization (the half-line problem at
zero transverse frequency has continuous spectrum), so the m = 0 column uses
the Dirichlet sine basis of the truncated interval [0, x_max] instead.  This
is consistent with the truncation already implied by the turning-point
retention rule: every retained Airy mode is exponentially small at x_max.
"""

from __future__ import annotations

import math
import struct
import warnings
from dataclasses import dataclass, field

import numpy as np

from .airy import get_zero_table
from .errors import AliasingWarning, ConfigError, TurningPointOverflowError
from .model import ModelParams, QuadraticForm, eigenfunction, eigenvalue

__all__ = [
    "PeriodizedDomain",
    "ModalTransform",
    "SpectralState",
    "ObservableSeries",
    "GrowthReport",
    "build_transform",
    "suggest_n_x",
    "gram_defect",
    "to_spectral",
    "to_physical",
    "linear_flow",
    "nonlinear_phase",
    "strang_step",
    "evolve",
    "mass",
    "grid_mass",
    "energy",
    "hm_norm",
    "boundary_trace",
    "growth_report",
    "state_single_mode",
    "state_gallery_packet",
    "state_random_shell",
    "state_interior_bump",
    "save_checkpoint",
    "load_checkpoint",
]

# eigenfunction/eigenvalue ignore the semiclassical fields; any valid
# instance will do for basis construction.
_MP = ModelParams(h=0.5, a=0.0)

# Retention margins: a mode is kept when its turning point clears x_max by
# the hard offset AND its Airy argument at x_max is deep enough in the decay
# regime that the truncated tail is below the Gram tolerance.
_TP_OFFSET = 5.0
_TAIL_MARGIN = 6.0

_CHECKPOINT_MAGIC = b"FRDLNLS1"
_CHECKPOINT_HEADER = "<8sIIIIddd"


@dataclass(frozen=True)
class PeriodizedDomain:
    """Discretization of the half-cylinder x in (0, x_max), y period 2 pi ell.

    n_x Gauss-Legendre nodes resolve x; n_y equispaced points resolve y with
    FFT ordering of the integer frequencies m.  k_max caps the number of
    transverse modes per fiber; the turning-point rule trims it per m.
    """

    x_max: float
    n_x: int
    ell: float
    n_y: int
    k_max: int
    form: QuadraticForm = field(default_factory=lambda: QuadraticForm.unit(2))

    def __post_init__(self):
        if self.form.dim != 1:
            raise ConfigError("domain.form", "solver is two-dimensional; the form must act on one transverse frequency")
        if self.x_max <= _TP_OFFSET:
            raise ConfigError("domain.x_max", f"x_max must exceed {_TP_OFFSET} to leave room for the turning-point buffer")
        if self.n_y < 4 or self.n_y % 2:
            raise ConfigError("domain.n_y", "n_y must be even and at least 4")
        if self.k_max < 1:
            raise ConfigError("domain.k_max", "k_max must be at least 1")
        if self.n_x < 2 * self.k_max:
            raise ConfigError("domain.n_x", f"n_x = {self.n_x} is below the over-quadrature floor 2 k_max = {2 * self.k_max}")

    @property
    def y_period(self):
        return 2.0 * math.pi * self.ell


def suggest_n_x(x_max, ell, n_y, k_max, form=None, margin=40):
    """Node count for which Gauss-Legendre quadrature resolves every basis
    product on the fibers up to the Nyquist frequency.

    The largest phase derivative of Ai(beta x - omega) is beta sqrt(omega);
    pairwise products double it, and an n-point rule needs n of order 0.55
    times the total phase across [0, x_max].
    """
    form = QuadraticForm.unit(2) if form is None else form
    theta_max = (n_y // 2) / ell
    beta = float(form.q(theta_max)) ** (1.0 / 3.0)
    omega = get_zero_table(k_max).omega[k_max - 1]
    omega_cap = min(omega, beta * x_max)
    if omega_cap <= 0:
        return 2 * k_max + margin
    budget = x_max * beta * math.sqrt(omega_cap)
    return max(2 * k_max, int(0.55 * budget) + margin)


@dataclass(frozen=True)
class ModalTransform:
    """Precomputed basis tables for one domain.

    B holds the n_y fiber bases stacked as (n_y, k_max, n_x) with dead rows
    zeroed; lam the eigenvalues (k_max, n_y) with dead entries zero; mask the
    retention pattern.  Quadrature against B with the Gauss weights is the
    forward transform, B^T the inverse; the y direction is a plain FFT.
    """

    domain: PeriodizedDomain
    x: np.ndarray
    w: np.ndarray
    m_int: np.ndarray
    B: np.ndarray
    BT: np.ndarray
    B0: np.ndarray
    lam: np.ndarray
    mask: np.ndarray
    phase_cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_retained(self):
        return int(self.mask.sum())


def build_transform(domain):
    """Assemble the modal tables for `domain`.

    Raises ConfigError when the retention rule leaves no usable Airy fiber,
    which signals an x_max far too small for the requested frequencies.
    """
    xi, wg = np.polynomial.legendre.leggauss(domain.n_x)
    x = (xi + 1.0) * (0.5 * domain.x_max)
    w = wg * (0.5 * domain.x_max)

    n_y, k_max = domain.n_y, domain.k_max
    m_int = np.fft.fftfreq(n_y, 1.0 / n_y).astype(int)
    B = np.zeros((n_y, k_max, domain.n_x))
    B0 = np.zeros((n_y, k_max))
    lam = np.zeros((k_max, n_y))
    mask = np.zeros((k_max, n_y), dtype=bool)
    omega = get_zero_table(k_max).omega[:k_max]

    for col, m in enumerate(m_int):
        if m == 0:
            k0 = min(k_max, domain.n_x // 4)
            j = np.arange(1, k0 + 1)
            B[col, :k0] = math.sqrt(2.0 / domain.x_max) * np.sin(
                j[:, None] * math.pi * x[None, :] / domain.x_max
            )
            lam[:k0, col] = (j * math.pi / domain.x_max) ** 2
            mask[:k0, col] = True
            continue
        if 2 * abs(m) == n_y:
            continue  # Nyquist column carries no usable phase information
        theta = m / domain.ell
        beta = float(domain.form.q(theta)) ** (1.0 / 3.0)
        keep = (omega / beta < domain.x_max - _TP_OFFSET) & (
            beta * domain.x_max - omega >= _TAIL_MARGIN
        )
        km = int(np.searchsorted(~keep, True))  # retention is a prefix
        if km == 0:
            continue
        k = np.arange(1, km + 1)
        B[col, :km] = eigenfunction(_MP, domain.form, k[:, None], x[None, :], theta)
        B0[col, :km] = eigenfunction(_MP, domain.form, k, 0.0, theta)
        lam[:km, col] = eigenvalue(_MP, domain.form, k, theta)
        mask[:km, col] = True

    if not mask[:, m_int != 0].any():
        raise ConfigError(
            "domain.x_max",
            f"no Airy mode satisfies the turning-point rule omega_k/q^(1/3) < {domain.x_max - _TP_OFFSET}",
        )
    for arr in (x, w, m_int, B, B0, lam, mask):
        arr.setflags(write=False)
    return ModalTransform(
        domain=domain, x=x, w=w, m_int=m_int, B=B,
        BT=np.ascontiguousarray(B.transpose(0, 2, 1)),
        B0=B0, lam=lam, mask=mask,
    )


def gram_defect(transform, theta_cap=None):
    """Max deviation of the per-fiber Gram matrices from the identity.

    Fibers with |m/ell| above theta_cap are skipped when a cap is given
    (useful when the data band is narrower than the grid's Nyquist range).
    """
    worst = 0.0
    for col in range(transform.domain.n_y):
        if theta_cap is not None:
            if abs(transform.m_int[col] / transform.domain.ell) > theta_cap:
                continue
        km = int(transform.mask[:, col].sum())
        if km == 0:
            continue
        bm = transform.B[col, :km]
        g = (bm * transform.w) @ bm.T - np.eye(km)
        worst = max(worst, float(np.abs(g).max()))
    return worst


@dataclass(frozen=True)
class SpectralState:
    """Modal coefficients (k_max, n_y) in FFT column order, plus clock time."""

    coeffs: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        object.__setattr__(self, "coeffs", c)


# ---------------------------------------------------------------------------
# transforms between grid values and modal coefficients
# ---------------------------------------------------------------------------


def _profiles(transform, coeffs):
    """Coefficients -> y-Fourier profiles c_hat_m(x_i), shape (n_x, n_y)."""
    g = np.matmul(transform.BT, coeffs.T[:, :, None])[:, :, 0].T
    return g / math.sqrt(transform.domain.y_period)


def _project(transform, profiles):
    """y-Fourier profiles -> coefficients, the adjoint quadrature map."""
    g = (transform.w[:, None] * profiles).T[:, :, None]
    c = np.matmul(transform.B, g)[:, :, 0].T
    return c * math.sqrt(transform.domain.y_period)


def _pad_columns(profiles, n_y, n_pad):
    half = n_y // 2
    out = np.zeros((profiles.shape[0], n_pad), dtype=complex)
    out[:, :half] = profiles[:, :half]
    out[:, n_pad - half + 1:] = profiles[:, half + 1:]
    return out


def _unpad_columns(padded, n_y):
    half = n_y // 2
    out = np.zeros((padded.shape[0], n_y), dtype=complex)
    out[:, :half] = padded[:, :half]
    out[:, half + 1:] = padded[:, padded.shape[1] - half + 1:]
    return out


def to_physical(transform, state, pad=1):
    """Evaluate a state on the tensor grid; pad > 1 refines the y grid to
    round(pad * n_y) equispaced points (same x nodes)."""
    coeffs = state.coeffs if isinstance(state, SpectralState) else state
    f = _profiles(transform, coeffs)
    n_y = transform.domain.n_y
    if pad != 1:
        n_pad = int(round(pad * n_y))
        f = _pad_columns(f, n_y, n_pad)
        return np.fft.ifft(f, axis=1) * n_pad
    return np.fft.ifft(f, axis=1) * n_y


def to_spectral(transform, values, time=0.0):
    """Project grid values (n_x, n_y) onto the modal basis.

    Content at the y Nyquist frequency cannot be represented and triggers
    AliasingWarning when it exceeds 1e-10 of the total grid mass.
    """
    values = np.asarray(values, dtype=complex)
    n_y = transform.domain.n_y
    if values.shape != (transform.domain.n_x, n_y):
        raise ConfigError("values", f"expected grid shape {(transform.domain.n_x, n_y)}, got {values.shape}")
    fhat = np.fft.fft(values, axis=1) / n_y
    total = float(np.sum(transform.w[:, None] * np.abs(fhat) ** 2))
    nyq = float(np.sum(transform.w * np.abs(fhat[:, n_y // 2]) ** 2))
    if total > 0.0 and nyq > 1e-10 * total:
        warnings.warn(
            f"y Nyquist frequency holds {nyq / total:.2e} of the grid mass",
            AliasingWarning,
        )
    coeffs = _project(transform, fhat) * transform.mask
    return SpectralState(coeffs=coeffs, time=time)


# ---------------------------------------------------------------------------
# flows
# ---------------------------------------------------------------------------


def _unit_phase(theta):
    """exp(i theta) renormalized to unit modulus so long products stay on the
    circle instead of drifting by an ulp per factor."""
    u = np.exp(1j * theta)
    return u / np.abs(u)


def linear_flow(transform, state, dt):
    """Exact propagator of -i dt v + Delta v = 0: c_{k,m} gains e^{i lam dt}.

    The rotation is carried out in extended precision so that repeated steps
    accumulate only the unbiased rounding of the result, not a modulus bias
    from the phase factor itself.
    """
    u = transform.phase_cache.get(dt)
    if u is None:
        u = np.exp(1j * transform.lam.astype(np.longdouble) * np.longdouble(dt))
        transform.phase_cache[dt] = u
    coeffs = (state.coeffs.astype(np.clongdouble) * u).astype(complex)
    return SpectralState(coeffs=coeffs, time=state.time + dt)


def nonlinear_phase(values, dt, kappa):
    """Exact flow of the ODE -i dt v = kappa |v|^2 v on grid values."""
    return values * _unit_phase((kappa * dt) * np.abs(values) ** 2)


def _kick(transform, coeffs, dt, kappa):
    """Cubic phase applied on the 3/2-dealiased y grid, then reprojected."""
    if kappa == 0.0 or dt == 0.0:
        return coeffs
    n_y = transform.domain.n_y
    n_pad = (3 * n_y) // 2
    f = _pad_columns(_profiles(transform, coeffs), n_y, n_pad)
    v = np.fft.ifft(f, axis=1) * n_pad
    v = nonlinear_phase(v, dt, kappa)
    f = _unpad_columns(np.fft.fft(v, axis=1) / n_pad, n_y)
    return _project(transform, f) * transform.mask


def strang_step(transform, state, dt, kappa):
    """One half-kick / full-linear / half-kick step."""
    c = _kick(transform, state.coeffs, 0.5 * dt, kappa)
    c = c * _unit_phase(transform.lam * dt)
    c = _kick(transform, c, 0.5 * dt, kappa)
    return SpectralState(coeffs=c, time=state.time + dt)


@dataclass(frozen=True)
class ObservableSeries:
    """Observables sampled along a run: times, mass, energy, and the
    Sobolev norms keyed by order in `hm`."""

    t: np.ndarray
    mass: np.ndarray
    energy: np.ndarray
    hm: dict
    aborted: bool = False

    @property
    def h1(self):
        return self.hm.get(1)

    @property
    def h2(self):
        return self.hm.get(2)


def evolve(transform, state, t_end, dt, kappa, observe_every=None,
           hm_orders=(1, 2), mass_guard=1.0):
    """March the split-step scheme from state.time to t_end.

    Observables are recorded at t_0, every `observe_every` (rounded to a
    whole number of steps), and at t_end.  A non-finite coefficient aborts
    the march with a warning; the returned state is the last finite one and
    the series carries aborted=True.  Focusing runs (kappa < 0) are refused
    when the initial mass exceeds mass_guard.
    """
    span = t_end - state.time
    if span <= 0.0:
        raise ConfigError("t_end", "t_end must exceed the state time")
    if dt <= 0.0:
        raise ConfigError("dt", "dt must be positive")
    n_steps = int(round(span / dt))
    if abs(n_steps * dt - span) > 1e-9 * max(1.0, abs(span)):
        raise ConfigError("dt", f"dt = {dt} does not divide the time span {span}")
    if not np.all(np.isfinite(state.coeffs)):
        raise ConfigError("state", "initial coefficients must be finite")
    if kappa < 0.0 and mass(state) > mass_guard:
        raise ConfigError(
            "kappa",
            f"focusing run refused: initial mass {mass(state):.6g} exceeds the small-mass guard {mass_guard}",
        )
    stride = n_steps if observe_every is None else max(1, int(round(observe_every / dt)))

    rows_t, rows_mass, rows_e = [], [], []
    rows_hm = {m: [] for m in hm_orders}
    aborted = False

    def record(s):
        rows_t.append(s.time)
        rows_mass.append(mass(s))
        rows_e.append(energy(transform, s, kappa))
        for m in hm_orders:
            rows_hm[m].append(hm_norm(transform, s, m))

    record(state)
    for step in range(1, n_steps + 1):
        nxt = strang_step(transform, state, dt, kappa)
        if not np.all(np.isfinite(nxt.coeffs)):
            warnings.warn(
                f"non-finite coefficients after step {step} (t = {nxt.time:.6g}); aborting march",
                RuntimeWarning,
            )
            aborted = True
            break
        state = nxt
        if step % stride == 0 or step == n_steps:
            record(state)
    series = ObservableSeries(
        t=np.array(rows_t), mass=np.array(rows_mass), energy=np.array(rows_e),
        hm={m: np.array(v) for m, v in rows_hm.items()}, aborted=aborted,
    )
    return series, state


# ---------------------------------------------------------------------------
# observables
# ---------------------------------------------------------------------------


def mass(state):
    """Squared L2 norm, exactly sum |c|^2 in the modal basis."""
    return float(np.sum(np.abs(state.coeffs) ** 2))


def grid_mass(transform, values):
    """Quadrature of |values|^2 over the tensor grid."""
    n_cols = values.shape[1]
    dy = transform.domain.y_period / n_cols
    return float(np.sum(transform.w[:, None] * np.abs(values) ** 2) * dy)


def energy(transform, state, kappa):
    """E = |grad v|^2/2 + kappa |v|^4_{L4}/4, gradient part spectral, quartic
    part by quadrature on a doubly refined y grid."""
    kin = 0.5 * float(np.sum(transform.lam * np.abs(state.coeffs) ** 2))
    v = to_physical(transform, state, pad=2)
    dy = transform.domain.y_period / v.shape[1]
    quart = float(np.sum(transform.w[:, None] * np.abs(v) ** 4) * dy)
    return kin + 0.25 * kappa * quart


def hm_norm(transform, state, order):
    """Spectral Sobolev norm (sum (1 + lam)^order |c|^2)^{1/2}."""
    weight = (1.0 + transform.lam) ** order
    return float(np.sqrt(np.sum(weight * np.abs(state.coeffs) ** 2)))


def boundary_trace(transform, state):
    """Max over the y grid of |v(0, y)|; Dirichlet compliance check."""
    f0 = (transform.B0 * state.coeffs.T).sum(axis=1) / math.sqrt(transform.domain.y_period)
    vals = np.fft.ifft(f0) * transform.domain.n_y
    return float(np.abs(vals).max())


@dataclass(frozen=True)
class GrowthReport:
    """Affine envelope fit of log H^m along a run."""

    order: int
    rate: float
    intercept: float
    residual_above: float
    passed: bool
    t_span: float


def growth_report(series, order=2):
    """Fit log ||v||_{H^order} by an affine envelope a + b t.

    The verdict is PASS when no sample exceeds the fitted envelope by more
    than log 2, i.e. the growth is no worse than exponential at the fitted
    rate within a factor 2.
    """
    if order not in series.hm:
        raise ConfigError("order", f"series holds no H^{order} samples")
    t = series.t
    if t.size < 3:
        raise ConfigError("series", "growth fit needs at least 3 samples")
    logh = np.log(series.hm[order])
    b, a = np.polyfit(t, logh, 1)
    resid = logh - (a + b * t)
    above = float(resid.max())
    return GrowthReport(
        order=order, rate=float(b), intercept=float(a),
        residual_above=above, passed=bool(above <= math.log(2.0)),
        t_span=float(t[-1] - t[0]),
    )


# ---------------------------------------------------------------------------
# state builders
# ---------------------------------------------------------------------------


def _require_mode(transform, k, m):
    n_y = transform.domain.n_y
    col = m % n_y
    if not (1 <= k <= transform.domain.k_max) or not transform.mask[k - 1, col]:
        raise TurningPointOverflowError(
            f"mode (k={k}, m={m}) is not retained on this domain"
        )
    return col


def state_single_mode(transform, k, m, amplitude=1.0, time=0.0):
    """Unit-coefficient eigenmode; raises when (k, m) is not retained."""
    col = _require_mode(transform, k, m)
    c = np.zeros((transform.domain.k_max, transform.domain.n_y), dtype=complex)
    c[k - 1, col] = amplitude
    return SpectralState(coeffs=c, time=time)


def state_gallery_packet(transform, m_center, m_width, k=1, time=0.0):
    """Gaussian superposition over y frequencies at fixed transverse index k,
    mass normalized to 1.  The workhorse near-boundary concentrated state."""
    dom = transform.domain
    if m_width <= 0:
        raise ConfigError("m_width", "m_width must be positive")
    if not -dom.n_y // 2 < m_center < dom.n_y // 2:
        raise ConfigError("m_center", f"m_center = {m_center} exceeds the resolved band")
    weight = np.exp(-0.5 * ((transform.m_int - m_center) / m_width) ** 2)
    weight = np.where(transform.mask[k - 1], weight, 0.0)
    edge = weight[np.abs(transform.m_int) == dom.n_y // 2 - 1].max(initial=0.0)
    if edge > 1e-3:
        raise ConfigError("m_width", f"packet weight {edge:.2e} at the band edge; widen n_y or narrow the packet")
    if not weight.any():
        raise TurningPointOverflowError(
            f"no retained mode near (k={k}, m={m_center}) on this domain"
        )
    c = np.zeros((dom.k_max, dom.n_y), dtype=complex)
    c[k - 1] = weight / math.sqrt(float(np.sum(weight**2)))
    return SpectralState(coeffs=c, time=time)


def state_random_shell(transform, lam_lo, lam_hi, seed, time=0.0):
    """Random-phase coefficients on the eigenvalue shell lam in [lam_lo, lam_hi],
    mass normalized to 1."""
    sel = transform.mask & (transform.lam >= lam_lo) & (transform.lam <= lam_hi)
    n_sel = int(sel.sum())
    if n_sel == 0:
        raise ConfigError("lam_lo", f"no retained eigenvalue lies in [{lam_lo}, {lam_hi}]")
    rng = np.random.default_rng(seed)
    c = np.zeros((transform.domain.k_max, transform.domain.n_y), dtype=complex)
    c[sel] = rng.standard_normal(n_sel) + 1j * rng.standard_normal(n_sel)
    c /= math.sqrt(np.sum(np.abs(c) ** 2))
    return SpectralState(coeffs=c, time=time)


def state_interior_bump(transform, x_center, x_width, m_mod, y_width=None, time=0.0):
    """Gaussian bump at distance x_center from the wall, modulated at y
    frequency m_mod, optionally enveloped in y; projected and renormalized.

    The free-like probe state: supported away from the boundary, so the wall
    plays no role over moderate times.
    """
    dom = transform.domain
    xg = transform.x[:, None]
    yg = (np.arange(dom.n_y) * (dom.y_period / dom.n_y))[None, :]
    v = np.exp(-0.5 * ((xg - x_center) / x_width) ** 2) * np.exp(1j * m_mod * yg / dom.ell)
    if y_width is not None:
        yc = 0.5 * dom.y_period
        v = v * np.exp(-0.5 * ((yg - yc) / y_width) ** 2)
    state = to_spectral(transform, v, time=time)
    m0 = mass(state)
    if m0 < 0.5 * grid_mass(transform, v):
        raise TurningPointOverflowError(
            f"bump at x = {x_center} lies beyond the retained turning points; raise x_max or k_max"
        )
    return SpectralState(coeffs=state.coeffs / math.sqrt(m0), time=time)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(path, transform, state):
    """Write a binary checkpoint.

    Layout, all little-endian: magic b"FRDLNLS1"; uint32 version (1), k_max,
    n_y, n_x; float64 x_max, ell, time; then k_max * n_y complex128
    coefficients in C order.
    """
    dom = transform.domain
    header = struct.pack(
        _CHECKPOINT_HEADER, _CHECKPOINT_MAGIC, 1,
        dom.k_max, dom.n_y, dom.n_x, dom.x_max, dom.ell, state.time,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(state.coeffs, dtype="<c16").tobytes())


def load_checkpoint(path):
    """Read a checkpoint written by save_checkpoint.

    Returns (meta, state) where meta echoes the domain fields for
    compatibility checks against the transform in use.
    """
    size = struct.calcsize(_CHECKPOINT_HEADER)
    with open(path, "rb") as fh:
        head = fh.read(size)
        if len(head) < size:
            raise ConfigError("checkpoint", f"file {path} is truncated")
        magic, version, k_max, n_y, n_x, x_max, ell, time = struct.unpack(_CHECKPOINT_HEADER, head)
        if magic != _CHECKPOINT_MAGIC:
            raise ConfigError("checkpoint", f"file {path} is not a solver checkpoint")
        if version != 1:
            raise ConfigError("checkpoint", f"unsupported checkpoint version {version}")
        raw = fh.read(16 * k_max * n_y)
    coeffs = np.frombuffer(raw, dtype="<c16").reshape(k_max, n_y).copy()
    meta = {"k_max": k_max, "n_y": n_y, "n_x": n_x, "x_max": x_max, "ell": ell}
    return meta, SpectralState(coeffs=coeffs, time=time)

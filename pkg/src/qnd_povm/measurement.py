"""Photon-counting QND measurement of a collective spin with dephasing from spontaneous emission.

A measurement record ``(n_c, n_d)`` acts on the atoms in two steps: the state-preparation map
``L_s`` (set by the photon loss during the interaction) followed by the diagonal detection
operator ``M``. Everything below works with logarithms of amplitudes, since the prefactor
``((|alpha|^2 + |chi|^2)/2)^{(n_c+n_d)/2}`` alone overflows double precision for moderate counts.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .dynamics import expm1_over
from .errors import ImpossibleOutcomeError, InvalidInputError, NoPeakError
from .spin_algebra import AtomState, m_values, sector_spins

PROBABILITY_FLOOR = 1e-300


def f_function(x):
    """``(e^x - 1)/x``, equal to 1 at ``x = 0``."""
    out = expm1_over(x)
    return out if np.ndim(out) else complex(out)


@dataclass(frozen=True)
class MeasurementParams:
    alpha: complex
    chi: complex
    R: float
    tau: float
    phi_p: float = 0.0

    def __post_init__(self):
        if self.R < 0 or self.tau < 0:
            raise InvalidInputError("R and tau must be non-negative")
        if abs(self.alpha) == 0 and abs(self.chi) == 0:
            raise InvalidInputError("probe and reference cannot both be empty")

    @property
    def total_mean(self) -> float:
        """``|alpha|^2 + |chi|^2``."""
        return abs(self.alpha) ** 2 + abs(self.chi) ** 2

    @property
    def eta(self) -> float:
        a, c = abs(self.alpha), abs(self.chi)
        return float(np.arctan((c - a) / (c + a)))

    @property
    def cos2eta(self) -> float:
        a, c = abs(self.alpha), abs(self.chi)
        return 2 * a * c / (a * a + c * c)

    @property
    def phi_chi_alpha(self) -> float:
        return float(np.angle(self.chi) - np.angle(self.alpha))

    def theta(self, m):
        """Complex phase ``tau (m - i R m^2 / 2)`` picked up by the probe branch ``m``."""
        m = np.asarray(m, dtype=float)
        return self.tau * (m - 0.5j * self.R * m * m)

    def phi(self, m):
        return 0.5 * self.theta(m) + 0.5 * self.phi_chi_alpha + np.pi / 4 + 0.5 * self.phi_p


@dataclass(frozen=True)
class DetectionRecord:
    n_c: int
    n_d: int

    def __post_init__(self):
        if int(self.n_c) != self.n_c or int(self.n_d) != self.n_d or self.n_c < 0 or self.n_d < 0:
            raise InvalidInputError("photon counts must be non-negative integers")

    @classmethod
    def from_uv(cls, u: float, v: float) -> "DetectionRecord":
        if u < abs(v):
            raise InvalidInputError("need u >= |v|")
        n_c, n_d = u - v, u + v
        if abs(n_c - round(n_c)) > 1e-9 or abs(n_d - round(n_d)) > 1e-9:
            raise InvalidInputError("u - v and u + v must be integers")
        return cls(int(round(n_c)), int(round(n_d)))

    @property
    def u(self) -> float:
        return 0.5 * (self.n_c + self.n_d)

    @property
    def v(self) -> float:
        return 0.5 * (self.n_d - self.n_c)

    @property
    def total(self) -> int:
        return self.n_c + self.n_d


# -- state preparation ------------------------------------------------------------

def state_prep_log_factor(m, mp, p: MeasurementParams):
    """Log of the multiplier ``L_s`` applies to entry ``(m, m')``."""
    m = np.asarray(m, dtype=float)
    mp = np.asarray(mp, dtype=float)
    x = 1j * p.tau * ((mp - m) + 0.5j * p.R * (m * m + mp * mp))
    return p.R * p.tau * abs(p.alpha) ** 2 * m * mp * expm1_over(x)


def state_prep_superoperator(rho: AtomState, p: MeasurementParams) -> AtomState:
    """Apply ``L_s``; the result is not normalised."""
    if p.R == 0:
        return rho
    blocks = {}
    for J, block in rho.sectors.items():
        m = m_values(J)
        blocks[J] = block * np.exp(state_prep_log_factor(m[:, None], m[None, :], p))
    return AtomState(blocks, rho.atom_count)


# -- detection operator -----------------------------------------------------------

def _split_phases(p: MeasurementParams, m):
    """Per-``m`` phases and amplitude bases of the two output ports.

    Returns ``(phi, phi_c, phi_d, a_c, a_d)`` with ``a_c e^{i phi_c} = sqrt2 (cos eta cos phi + i sin eta sin phi)``
    and ``a_d e^{i phi_d} = sqrt2 (sin eta cos phi + i cos eta sin phi)``. The arctangents take the
    principal branch; the sign of each square root is then fixed so that these identities hold.
    """
    phi = p.phi(m)
    eta = p.eta
    ce, se = np.cos(eta), np.sin(eta)
    cp, sp = np.cos(phi), np.sin(phi)
    c2 = p.cos2eta * np.cos(2 * phi)
    out = []
    for re, im, sq in ((ce * cp, se * sp, 1 + c2), (se * cp, ce * sp, 1 - c2)):
        with np.errstate(divide="ignore", invalid="ignore"):
            ang = np.arctan(im / re)
        ang = np.where(re == 0, np.where(im == 0, 0.0, np.pi / 2), ang)
        a = np.sqrt(sq.astype(complex))
        target = np.sqrt(2) * (re + 1j * im) * np.exp(-1j * ang)
        a = np.where(np.real(np.conj(a) * target) < 0, -a, a)
        out.append((ang, a))
    (phi_c, a_c), (phi_d, a_d) = out
    return phi, phi_c, phi_d, a_c, a_d


def _n_log(n, z):
    """``n * log z`` with ``0 * log 0 = 0``."""
    n = np.asarray(n)
    with np.errstate(divide="ignore", invalid="ignore"):
        lz = np.log(z.astype(complex) if hasattr(z, "astype") else complex(z))
        return np.where(n == 0, 0.0, n * lz)


def detection_log_amplitude(n_c, n_d, m, p: MeasurementParams):
    """``log <m|M_{n_c,n_d}|m>`` from the spectral form; broadcasts over all three arguments."""
    n_c = np.asarray(n_c)
    n_d = np.asarray(n_d)
    n = n_c + n_d
    phi, phi_c, phi_d, a_c, a_d = _split_phases(p, m)
    half = 0.5 * p.total_mean
    log_a = _n_log(n_c, a_c) + _n_log(n_d, a_d) - 0.5 * (gammaln(n_c + 1) + gammaln(n_d + 1))
    return (-half + 0.5 * n * np.log(half) - 0.5j * np.pi * n_d
            + 1j * n * (phi - p.theta(m)) + 1j * (n_c * phi_c + n_d * phi_d) + log_a)


def detection_log_amplitude_direct(n_c, n_d, m, p: MeasurementParams):
    """Same quantity from the beam-splitter output amplitudes, without the phase decomposition.

    The global phase ``e^{i n arg(alpha)}`` that the spectral form drops is removed here too.
    """
    n_c = np.asarray(n_c)
    n_d = np.asarray(n_d)
    probe = p.alpha * np.exp(-1j * p.theta(m))
    ref = p.chi * np.exp(1j * p.phi_p)
    out_c = (probe + 1j * ref) / np.sqrt(2)
    out_d = (1j * probe + ref) / np.sqrt(2)
    return (-0.5 * p.total_mean - 0.5 * (gammaln(n_c + 1) + gammaln(n_d + 1))
            + _n_log(n_c, out_c) + _n_log(n_d, out_d) - 1j * (n_c + n_d) * np.angle(p.alpha))


def detection_amplitude(n_c, n_d, m, p: MeasurementParams):
    """``A(n_c, n_d, m) = (1 + cos2eta cos2phi)^{n_c/2} (1 - cos2eta cos2phi)^{n_d/2} / sqrt(n_c! n_d!)``."""
    if np.any(np.asarray(n_c) < 0) or np.any(np.asarray(n_d) < 0):
        raise InvalidInputError("photon counts must be non-negative")
    _, _, _, a_c, a_d = _split_phases(p, m)
    log_a = _n_log(n_c, a_c) + _n_log(n_d, a_d) - 0.5 * (gammaln(np.asarray(n_c) + 1) + gammaln(np.asarray(n_d) + 1))
    out = np.exp(log_a)
    return out if np.ndim(out) else complex(out)


def detection_operator_diag(rec: DetectionRecord, p: MeasurementParams, atom_count: int) -> dict[float, np.ndarray]:
    """Diagonal of ``M_{n_c,n_d}`` per sector ``J`` (entries ordered by ascending ``m``)."""
    return {J: np.exp(detection_log_amplitude(rec.n_c, rec.n_d, m_values(J), p))
            for J in sector_spins(atom_count)}


# -- conditional states -----------------------------------------------------------

def _conditional_log(rho: AtomState, rec: DetectionRecord, p: MeasurementParams, log_amp):
    """Unnormalised log-weights ``log(M L_s(rho) M^dag)`` relative to a common shift."""
    logs = {}
    shift = -np.inf
    for J, block in rho.sectors.items():
        m = m_values(J)
        lm = log_amp(rec.n_c, rec.n_d, m, p)
        k = lm[:, None] + np.conj(lm)[None, :]
        if p.R != 0:
            k = k + state_prep_log_factor(m[:, None], m[None, :], p)
        logs[J] = k
        d = np.real(np.diag(block))
        with np.errstate(divide="ignore", invalid="ignore"):
            dlog = np.real(np.diag(k)) + np.log(np.where(d > 0, d, 0.0))
        if np.any(np.isfinite(dlog)):
            shift = max(shift, float(np.max(dlog[np.isfinite(dlog)])))
    return logs, shift


def _apply(rho, rec, p, log_amp):
    if abs(rho.trace() - 1) > 1e-8:
        raise InvalidInputError("input state must have unit trace")
    logs, shift = _conditional_log(rho, rec, p, log_amp)
    if not np.isfinite(shift):
        raise ImpossibleOutcomeError(f"record {rec} has zero probability")
    blocks = {}
    total = 0.0
    for J, block in rho.sectors.items():
        with np.errstate(under="ignore"):
            blocks[J] = block * np.exp(logs[J] - shift)
        total += float(np.real(np.trace(blocks[J])))
    log_prob = shift + np.log(total) if total > 0 else -np.inf
    if log_prob < np.log(PROBABILITY_FLOOR):
        raise ImpossibleOutcomeError(f"record {rec} has probability exp({log_prob:.4g}) below {PROBABILITY_FLOOR}")
    state = AtomState({J: b / total for J, b in blocks.items()}, rho.atom_count)
    return state, float(np.exp(log_prob))


def apply_povm(rho: AtomState, rec: DetectionRecord, p: MeasurementParams) -> tuple[AtomState, float]:
    """Conditional state ``M L_s(rho) M^dag / P`` and the record probability ``P``."""
    return _apply(rho, rec, p, detection_log_amplitude)


def apply_povm_direct(rho: AtomState, rec: DetectionRecord, p: MeasurementParams) -> tuple[AtomState, float]:
    """:func:`apply_povm` built on the beam-splitter form of ``M`` instead of the spectral form."""
    return _apply(rho, rec, p, detection_log_amplitude_direct)


def conditional_probability_density(rho: AtomState, rec: DetectionRecord,
                                    p: MeasurementParams) -> dict[float, np.ndarray]:
    """Probability of each ``|J, m>`` after the record, per sector."""
    state, _ = apply_povm(rho, rec, p)
    return {J: np.clip(np.real(d), 0.0, None) for J, d in state.diagonal().items()}


def m_marginal(density: dict[float, np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Collapse a per-sector density onto ``m``; returns ``(m_grid, probabilities)``."""
    acc: dict[float, float] = {}
    for J, d in density.items():
        for m, w in zip(m_values(J), d):
            acc[m] = acc.get(m, 0.0) + float(w)
    ms = np.array(sorted(acc))
    return ms, np.array([acc[m] for m in ms])


def record_probability_log(rho: AtomState, rec: DetectionRecord, p: MeasurementParams) -> float:
    logs, shift = _conditional_log(rho, rec, p, detection_log_amplitude)
    if not np.isfinite(shift):
        return -np.inf
    total = sum(float(np.real(np.trace(b * np.exp(logs[J] - shift)))) for J, b in rho.sectors.items())
    return shift + np.log(total) if total > 0 else -np.inf


# -- Gaussian regime --------------------------------------------------------------

@dataclass(frozen=True)
class GaussianSummary:
    """Peak positions and widths of the detection operator for large photon counts.

    ``sigma_sq`` is the R-free width of ``A``; ``sigma_R_sq`` the width of the amplitude decay;
    ``sigma_tilde_sq`` the complex width of their product and ``sigma_eff`` its real width
    ``1/sqrt(Re 1/sigma_tilde_sq)``. ``damping_log`` is the ``m``-independent exponent
    ``-(1 - iR xi)^2 xi^2 / (2 (sigma_R^2 (1 - iR xi)^2 + sigma^2))``.
    """

    m0: float
    xi: float
    m_tilde0: float
    sigma_sq: float
    sigma_R_sq: float
    sigma_tilde_sq: complex
    sigma_eff: float
    y: float
    damping_log: complex
    valid: bool

    @property
    def sigma(self) -> float:
        return float(np.sqrt(self.sigma_sq)) if self.sigma_sq > 0 else float("nan")

    def expansion_ok(self, R: float, limit: float = 0.2) -> bool:
        """Whether the peak shift is trustworthy: ``sigma^2 > 0`` and ``R |xi|`` below ``limit``.

        ``m_tilde0`` comes from expanding the decay phase to second order in ``R xi``; past
        ``R |xi| ~ 0.2`` it drifts from the exact maximum by more than half a grid step.
        """
        return self.valid and R * abs(self.xi) <= limit


def _width_bracket(n_c, n_d, cos2eta):
    return (n_c + n_d) ** 2 * cos2eta ** 2 - (n_c - n_d) ** 2


def peak_m0(rec: DetectionRecord, p: MeasurementParams) -> float:
    s = (rec.n_d - rec.n_c) / ((rec.n_d + rec.n_c) * p.cos2eta)
    if abs(s) > 1:
        raise NoPeakError(f"arcsin argument {s:.6g} outside [-1, 1]; no Gaussian peak for {rec}")
    if p.tau == 0:
        raise NoPeakError("no peak at tau = 0")
    return float((np.arcsin(s) - p.phi_chi_alpha - p.phi_p) / p.tau)


def peak_xi(m0: float, R: float) -> float:
    # (1 + 4R^2 m0^2)^{1/4} sin(arctan(2 R m0)/2) / R, rearranged so that R -> 0 is harmless
    return float(m0 * np.sqrt(2 / (1 + np.hypot(1.0, 2 * R * m0))))


def gaussian_summary(rec: DetectionRecord, p: MeasurementParams) -> GaussianSummary:
    n_c, n_d = rec.n_c, rec.n_d
    if n_c < 1 or n_d < 1:
        raise InvalidInputError("the Gaussian summary needs n_c, n_d >= 1")
    m0 = peak_m0(rec, p)
    R, tau = p.R, p.tau
    xi = peak_xi(m0, R)
    bracket = _width_bracket(n_c, n_d, p.cos2eta)
    valid = bracket > 0
    sigma_sq = 8 * n_c * n_d / (bracket * tau ** 2 * (n_c + n_d)) if bracket != 0 else np.inf
    sigma_R_sq = 2 / ((n_c + n_d) * R * tau) if R > 0 else np.inf
    w = (1 - 1j * R * xi) ** 2
    inv_tilde = 0.5 * (n_c + n_d) * tau * (R + tau * w * bracket / (4 * n_c * n_d))
    sigma_tilde_sq = complex(1 / inv_tilde)
    re_inv = float(np.real(inv_tilde))
    sigma_eff = 1 / np.sqrt(re_inv) if re_inv > 0 else float("nan")
    # written with z = 1/y and k = 1/sigma_R^2 so that both stay finite as R -> 0
    z = 4 * R * n_c * n_d / (tau * bracket) if bracket != 0 else float("inf")
    y = 1 / z if z != 0 else float("inf")
    if z == 0:
        m_tilde0 = xi
    elif np.isinf(z):
        m_tilde0 = 0.0
    else:
        q = 1 - R * R * xi * xi
        m_tilde0 = xi * (1 - (z * z + z * q) / ((z + q) ** 2 + 4 * R * R * xi * xi))
    k = 0.5 * (n_c + n_d) * R * tau
    damping = -k * w * xi * xi / (2 * (w + k * sigma_sq)) if np.isfinite(sigma_sq) else 0j
    return GaussianSummary(m0, xi, float(m_tilde0), float(sigma_sq), float(sigma_R_sq),
                           sigma_tilde_sq, float(sigma_eff), float(y), complex(damping), bool(valid))


def gaussian_amplitude(rec: DetectionRecord, p: MeasurementParams, m, summary: GaussianSummary | None = None):
    """Stirling-Gaussian approximation of :func:`detection_amplitude`."""
    g = summary or gaussian_summary(rec, p)
    n_c, n_d = rec.n_c, rec.n_d
    n = n_c + n_d
    m = np.asarray(m, dtype=float)
    log_pref = 0.5 * n * np.log(2 / n) + 0.5 * n - 0.25 * np.log(4 * np.pi ** 2 * n_c * n_d)
    w = (1 - 1j * p.R * g.xi) ** 2
    return np.exp(log_pref - w * (m - g.xi) ** 2 / (2 * g.sigma_sq))


# -- projective limit -------------------------------------------------------------

def round_to_grid(x: float, atom_count: int) -> float:
    """Nearest allowed ``m`` (integers for even ``N``, half-odd for odd ``N``); ties go toward 0."""
    offset = 0.0 if atom_count % 2 == 0 else 0.5
    y = x - offset
    lo = np.floor(y)
    frac = y - lo
    if abs(frac - 0.5) < 1e-12:
        cands = [lo + offset, lo + 1 + offset]
        return float(min(cands, key=abs))
    return float((lo if frac < 0.5 else lo + 1) + offset)


def _zeta(p: MeasurementParams, m_tilde0: float):
    phi0 = p.phi(m_tilde0)
    te = np.tan(p.eta)
    tp = np.tan(phi0)
    common = 0.5 * te / np.cos(phi0) ** 2 * (1 - 1j * p.R * m_tilde0)
    zc = common / (1 + te * te * tp * tp)
    zd = common / (tp * tp + te * te)
    return 1 - zd - zc, zd - zc


def sigma_c_sq(u: float, v: float, p: MeasurementParams, xi: float) -> complex:
    """Complex width of the projective operator; uses ``cos^2(2 eta)`` to stay consistent with ``sigma``."""
    tau, R = p.tau, p.R
    return complex(R * tau * u * (u * u - v * v)
                   + u * (u * u * p.cos2eta ** 2 - v * v) * tau ** 2 * (1 - 1j * R * xi) ** 2)


def _uv_common(u, v, p, g):
    _, phi_c0, phi_d0, _, _ = _split_phases(p, np.array([g.m_tilde0]))
    phi_c0, phi_d0 = complex(phi_c0[0]), complex(phi_d0[0])
    S = p.total_mean
    log_c = (1j * v * (phi_d0 - phi_c0 - np.pi / 2) - (u - S / 2) ** 2 / S
             + 1j * u * (phi_d0 + phi_c0 + p.phi_chi_alpha + p.phi_p - p.tau * g.m_tilde0) + g.damping_log)
    return log_c


def detection_operator_uv(u: float, v: float, p: MeasurementParams, atom_count: int) -> dict[float, np.ndarray]:
    """Gaussian form of the detection operator in ``(u, v)`` variables, per sector."""
    rec = DetectionRecord.from_uv(u, v)
    g = gaussian_summary(rec, p)
    zp, zm = _zeta(p, g.m_tilde0)
    log_c = _uv_common(u, v, p, g) - 0.25 * np.log(4 * np.pi ** 2 * (u * u - v * v))
    out = {}
    for J in sector_spins(atom_count):
        dm = m_values(J) - g.m_tilde0
        out[J] = np.exp(log_c - dm * dm / (2 * g.sigma_tilde_sq) - 1j * p.tau * (u * zp - v * zm) * dm)
    return out


@dataclass(frozen=True)
class ProjectiveOutcome:
    m: float                   # rounded peak position
    support: tuple             # ((J, m), ...) spanned by the projector
    amplitude: complex
    summary: GaussianSummary


def projection_measurement(u: float, v: float, p: MeasurementParams, atom_count: int) -> ProjectiveOutcome:
    """Projector onto ``m = round(m_tilde0)`` across all sectors that contain it, with its amplitude."""
    rec = DetectionRecord.from_uv(u, v)
    g = gaussian_summary(rec, p)
    if not g.valid:
        raise NoPeakError("Gaussian approximation invalid for this record (sigma^2 <= 0)")
    m_star = round_to_grid(g.m_tilde0, atom_count)
    support = tuple((J, m_star) for J in sector_spins(atom_count) if J >= abs(m_star))
    log_amp = _uv_common(u, v, p, g) - 0.25 * np.log(4 * np.pi * sigma_c_sq(u, v, p, g.xi))
    return ProjectiveOutcome(m_star, support, complex(np.exp(log_amp)), g)


# -- completeness -----------------------------------------------------------------

def completeness_check(p: MeasurementParams, J: float, cutoff: int) -> float:
    """``max_m |sum_{n_c, n_d <= cutoff} <m| M L_s(1) M^dag |m> - 1|`` for one sector."""
    if cutoff < 0:
        raise InvalidInputError("cutoff must be non-negative")
    m = m_values(J)
    n = np.arange(cutoff + 1)
    lm = detection_log_amplitude(n[:, None, None], n[None, :, None], m[None, None, :], p)
    ls = np.real(state_prep_log_factor(m, m, p))
    total = np.sum(np.exp(2 * np.real(lm) + ls[None, None, :]), axis=(0, 1))
    return float(np.max(np.abs(total - 1)))

"""Closed-form evolution of atoms coupled to a coherent probe under dephasing with photon loss.

The joint state keeps the form ``sum rho_{m,m'} |J,m><J,m'| (x) |alpha_m><alpha_m'|`` at all
times, so evolution only has to update one complex coefficient per ``(m, m')`` pair plus a
coherent amplitude per ``m``. No Fock-space truncation is involved.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import InvalidInputError
from .spin_algebra import AtomState, m_values

SERIES_CUTOFF = 1e-6


def expm1_over(x):
    """``(exp(x) - 1) / x`` elementwise; a short series near ``x = 0``."""
    x = np.asarray(x, dtype=complex)
    small = np.abs(x) < SERIES_CUTOFF
    safe = np.where(small, 1.0, x)
    return np.where(small, 1 + x / 2 + x * x / 6 + x ** 3 / 24, np.expm1(safe) / safe)


def photon_amplitude(alpha0: complex, m, R: float, tau: float):
    """Coherent amplitude of the probe branch correlated with ``J_z = m``."""
    if R < 0 or tau < 0:
        raise InvalidInputError("R and tau must be non-negative")
    m = np.asarray(m, dtype=float)
    return alpha0 * np.exp(-1j * m * tau - 0.5 * R * m * m * tau)


def coherent_overlap_log(beta, gamma):
    """``log <beta|gamma>`` for coherent states."""
    beta = np.asarray(beta, dtype=complex)
    gamma = np.asarray(gamma, dtype=complex)
    return -0.5 * np.abs(beta) ** 2 - 0.5 * np.abs(gamma) ** 2 + np.conj(beta) * gamma


def coefficient_log_factor(m, mp, alpha0: complex, R: float, tau: float):
    """Log of the multiplier taking ``rho_{m,m'}(0)`` to the evolved hybrid coefficient."""
    m = np.asarray(m, dtype=float)
    mp = np.asarray(mp, dtype=float)
    n0 = abs(alpha0) ** 2
    rate = 1j * (mp - m) - 0.5 * R * (m * m + mp * mp)
    decay = 0.5 * n0 * (np.expm1(-R * m * m * tau) + np.expm1(-R * mp * mp * tau))
    # int_0^tau exp(rate * s) ds = tau * (exp(rate*tau) - 1)/(rate*tau)
    source = R * n0 * m * mp * tau * expm1_over(rate * tau)
    return decay + source


@dataclass(frozen=True)
class HybridState:
    """Atom-light state in the coherent-branch representation.

    ``coefficients[J][k, k']`` is the evolved ``rho_{m,m'}`` and ``alphas[J][k]`` the probe
    amplitude ``alpha_m``, with ``m = -J + k``.
    """

    coefficients: dict
    alphas: dict
    atom_count: int
    alpha0: complex
    R: float
    tau: float

    @property
    def spins(self):
        return list(self.coefficients)


def evolve_closed_form(rho0: AtomState, alpha0: complex, R: float, tau: float) -> HybridState:
    if R < 0 or tau < 0:
        raise InvalidInputError("R and tau must be non-negative")
    coeffs, alphas = {}, {}
    for J, block in rho0.sectors.items():
        m = m_values(J)
        log_f = coefficient_log_factor(m[:, None], m[None, :], alpha0, R, tau)
        coeffs[J] = block * np.exp(log_f)
        alphas[J] = photon_amplitude(alpha0, m, R, tau)
    return HybridState(coeffs, alphas, rho0.atom_count, complex(alpha0), float(R), float(tau))


def evolve_ordered_product(rho0: AtomState, alpha0: complex, R: float, tau: float) -> HybridState:
    """Same evolution via the ordered product ``exp(tau L_H) exp(r L_s)``.

    The jump superoperator is applied first, with its time integral ``r`` evaluated by
    adaptive quadrature, then the non-Hermitian propagation moves the coherent labels.
    Serves as an independent cross-check of :func:`evolve_closed_form`.
    """
    n0 = abs(alpha0) ** 2
    coeffs, alphas = {}, {}
    for J, block in rho0.sectors.items():
        m = m_values(J)
        n = len(m)
        out = np.array(block, dtype=complex)
        for i in range(n):
            for j in range(n):
                if block[i, j] == 0:
                    continue
                rate = 1j * (m[j] - m[i]) - 0.5 * R * (m[i] ** 2 + m[j] ** 2)
                re = integrate.quad(lambda s: np.exp(rate * s).real, 0, tau, epsabs=1e-14, epsrel=1e-12, limit=200)[0]
                im = integrate.quad(lambda s: np.exp(rate * s).imag, 0, tau, epsabs=1e-14, epsrel=1e-12, limit=200)[0]
                jump = R * m[i] * m[j] * n0 * (re + 1j * im)
                # exp(w a^dag a tau)|alpha0> = exp((|alpha_m|^2 - |alpha0|^2)/2) |alpha_m>
                a_i = photon_amplitude(alpha0, m[i], R, tau)
                a_j = photon_amplitude(alpha0, m[j], R, tau)
                norm = 0.5 * (abs(a_i) ** 2 + abs(a_j) ** 2) - n0
                out[i, j] = block[i, j] * np.exp(jump + norm)
        coeffs[J] = out
        alphas[J] = photon_amplitude(alpha0, m, R, tau)
    return HybridState(coeffs, alphas, rho0.atom_count, complex(alpha0), float(R), float(tau))


def reduce_atoms(h: HybridState) -> AtomState:
    """Trace out the light: ``rho_atom[m,m'] = coefficient[m,m'] * <alpha_m'|alpha_m>``."""
    blocks = {}
    for J, c in h.coefficients.items():
        a = h.alphas[J]
        log_ov = coherent_overlap_log(a[None, :], a[:, None])
        blocks[J] = c * np.exp(log_ov)
    return AtomState(blocks, h.atom_count)


def atom_matrix_at(rho0: AtomState, alpha0: complex, R: float, tau: float) -> AtomState:
    """Reduced atomic state at ``tau`` in one step, summing the exponents before exponentiating."""
    if R < 0 or tau < 0:
        raise InvalidInputError("R and tau must be non-negative")
    n0 = abs(alpha0) ** 2
    blocks = {}
    for J, block in rho0.sectors.items():
        m = m_values(J)
        mm, mp = m[:, None], m[None, :]
        rate = 1j * (mp - mm) - 0.5 * R * (mm * mm + mp * mp)
        x = rate * tau
        # |alpha|^2 (e^x - 1) (1 + R m m' / rate), written to stay finite at rate = 0
        expo = n0 * np.expm1(x) + R * n0 * mm * mp * tau * expm1_over(x)
        blocks[J] = block * np.exp(expo)
    return AtomState(blocks, rho0.atom_count)


@dataclass(frozen=True)
class LightState:
    """Classical mixture of coherent states: ``sum_k w_k |a_k><a_k|``."""

    weights: np.ndarray
    amplitudes: np.ndarray

    def mean_photon_number(self) -> float:
        return float(np.sum(self.weights * np.abs(self.amplitudes) ** 2))

    def photon_number_variance(self) -> float:
        n = np.abs(self.amplitudes) ** 2
        return float(np.sum(self.weights * (n * n + n)) - self.mean_photon_number() ** 2)

    def fock_density_matrix(self, cutoff: int) -> np.ndarray:
        from .oracle import coherent_fock_vector

        rho = np.zeros((cutoff + 1, cutoff + 1), dtype=complex)
        for w, a in zip(self.weights, self.amplitudes):
            v = coherent_fock_vector(a, cutoff, normalize=False)
            rho += w * np.outer(v, v.conj())
        return rho


def reduce_light(h: HybridState) -> LightState:
    """Trace out the atoms; branches with equal ``m`` across sectors are merged."""
    weights: dict[float, float] = {}
    amps: dict[float, complex] = {}
    for J, c in h.coefficients.items():
        for k, m in enumerate(m_values(J)):
            weights[m] = weights.get(m, 0.0) + float(np.real(c[k, k]))
            amps[m] = h.alphas[J][k]
    keys = sorted(weights)
    w = np.array([weights[k] for k in keys])
    a = np.array([amps[k] for k in keys], dtype=complex)
    total = w.sum()
    if abs(total - 1) > 1e-12:
        warnings.warn(f"light weights sum to {total!r}; renormalising", RuntimeWarning, stacklevel=2)
        w = w / total
    return LightState(w, a)


def analytic_photon_mean(alpha0: complex, J: float, R: float, tau: float, theta: float) -> float:
    """Large-``N`` mean photon number for a spin coherent initial state."""
    n0 = abs(alpha0) ** 2
    s = 1 + J * R * tau * np.sin(theta) ** 2
    return float(n0 / np.sqrt(s) * np.exp(-J * J * R * tau * np.cos(theta) ** 2 / s))


def analytic_photon_variance(alpha0: complex, J: float, R: float, tau: float, theta: float) -> float:
    """Large-``N`` photon-number variance matching :func:`analytic_photon_mean`."""
    n0 = abs(alpha0) ** 2
    sin2, cos2 = np.sin(theta) ** 2, np.cos(theta) ** 2
    s1 = 1 + J * R * tau * sin2
    s2 = 1 + 2 * J * R * tau * sin2
    first = n0 ** 2 / np.sqrt(s2) * np.exp(-2 * J * J * R * tau * cos2 / s2)
    second = n0 ** 2 / s1 * np.exp(-2 * J * J * R * tau * cos2 / s1)
    third = n0 / np.sqrt(s1) * np.exp(-J * J * R * tau * cos2 / s1)
    return float(first - second + third)


def spin_trajectory(rho0: AtomState, alpha0: complex, R: float, taus) -> dict[str, np.ndarray]:
    """Means and standard deviations of ``J_x, J_y, J_z`` along a time grid."""
    from .spin_algebra import observable_mean, observable_variance

    out = {k: np.empty(len(taus)) for k in ("jx", "jy", "jz", "djx", "djy", "djz")}
    for i, tau in enumerate(taus):
        st = atom_matrix_at(rho0, alpha0, R, tau)
        for op in ("jx", "jy", "jz"):
            out[op][i] = observable_mean(st, op)
            out["d" + op][i] = np.sqrt(max(observable_variance(st, op), 0.0))
    return out

"""Brute-force reference integrators used to validate the closed-form results.

* :func:`lindblad_rk4` integrates the atom-light master equation in a truncated Fock space.
* :func:`matrix_element_ode` integrates the scalar ODEs obeyed by the branch coefficients.
* :func:`two_level_trajectories` integrates the driven, decaying two-level atom with a
  coherent probe label, to test adiabatic elimination.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.special import gammaln

from .dynamics import HybridState
from .errors import CutoffLeakageError, IntegrationError, InvalidInputError
from .spin_algebra import AtomState, m_values

LEAKAGE_TOL = 1e-8


def coherent_fock_vector(alpha: complex, cutoff: int, normalize: bool = True) -> np.ndarray:
    n = np.arange(cutoff + 1)
    log_mag = -0.5 * abs(alpha) ** 2 - 0.5 * gammaln(n + 1)
    if alpha == 0:
        v = (n == 0).astype(complex)
    else:
        v = np.exp(log_mag + n * np.log(complex(alpha)))
    if normalize:
        v = v / np.linalg.norm(v)
    return v


def default_cutoff(alpha0: complex, tail: float = 1e-12) -> int:
    """At least ``4|alpha|^2`` and far enough that the Poisson weight left above is below ``tail``."""
    mean = abs(alpha0) ** 2
    n = max(int(math.ceil(4 * mean)), 1)
    while True:
        k = np.arange(n + 1, n + 200)
        log_p = -mean + k * math.log(mean) - gammaln(k + 1) if mean > 0 else np.full(k.shape, -np.inf)
        if np.sum(np.exp(log_p)) < tail:
            return n
        n += 1


@dataclass(frozen=True)
class FockConfig:
    cutoff: int
    dt: float = 1e-3
    method: str = "rk4"

    def __post_init__(self):
        if self.cutoff < 1:
            raise InvalidInputError("cutoff must be at least 1")
        if not 0 < self.dt <= 1e-3:
            raise InvalidInputError("dt must lie in (0, 1e-3]")
        if self.method != "rk4":
            raise InvalidInputError(f"unknown method {self.method!r}")


@dataclass
class FockRun:
    """Full density matrices (atom index outer, photon number inner) at requested times."""

    J: float
    cutoff: int
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    max_trace_drift: float = 0.0

    def reduced_atom(self, i: int = -1) -> np.ndarray:
        d = int(round(2 * self.J)) + 1
        n = self.cutoff + 1
        rho = self.states[i].reshape(d, n, d, n)
        return np.einsum("inkn->ik", rho)

    def reduced_light(self, i: int = -1) -> np.ndarray:
        d = int(round(2 * self.J)) + 1
        n = self.cutoff + 1
        rho = self.states[i].reshape(d, n, d, n)
        return np.einsum("kikj->ij", rho)


def fock_operators(J: float, R: float, cutoff: int):
    """Diagonal of ``H`` and the jump operator ``J_z (x) a`` in the product basis."""
    m = m_values(J)
    n = np.arange(cutoff + 1)
    h = np.kron(m - 0.5j * R * m * m, np.ones_like(n)) * np.kron(np.ones_like(m), n)
    a = np.diag(np.sqrt(n[1:].astype(float)), 1)
    jump = np.kron(np.diag(m), a)
    return h, jump


def master_rhs(rho: np.ndarray, h: np.ndarray, jump: np.ndarray, R: float) -> np.ndarray:
    """``-i(H rho - rho H^dag) + R L rho L^dag`` with ``H`` diagonal."""
    return -1j * (h[:, None] * rho - rho * np.conj(h)[None, :]) + R * (jump @ rho @ jump.T)


def hybrid_to_fock(hs: HybridState, cutoff: int) -> np.ndarray:
    """Joint density matrix of a single-sector hybrid state in the truncated Fock basis."""
    if len(hs.coefficients) != 1:
        raise InvalidInputError("only single-sector states can be expanded")
    J = hs.spins[0]
    c = hs.coefficients[J]
    vecs = np.array([coherent_fock_vector(a, cutoff, normalize=False) for a in hs.alphas[J]])
    d, n = vecs.shape
    rho = np.einsum("ij,ia,jb->iajb", c, vecs, vecs.conj())
    return rho.reshape(d * n, d * n)


def initial_fock_state(rho_atom: AtomState, alpha0: complex, cutoff: int) -> tuple[float, np.ndarray]:
    if not rho_atom.is_single_sector:
        raise InvalidInputError("the Fock oracle handles one J sector at a time")
    J = rho_atom.spins[0]
    v = coherent_fock_vector(alpha0, cutoff)
    return J, np.kron(rho_atom.matrix, np.outer(v, v.conj()))


def _top_population(rho: np.ndarray, d: int, n: int) -> float:
    diag = np.real(np.diag(rho)).reshape(d, n)
    return float(diag[:, -1].sum())


def lindblad_rk4(rho_atom: AtomState, alpha0: complex, R: float, tau: float,
                 cfg: FockConfig, sample_times=None) -> FockRun:
    """Fixed-step RK4 of the master equation, starting from ``rho_atom (x) |alpha0><alpha0|``."""
    J, rho = initial_fock_state(rho_atom, alpha0, cfg.cutoff)
    d, n = int(round(2 * J)) + 1, cfg.cutoff + 1
    if d * n > 2000:
        raise InvalidInputError(f"Fock dimension {d * n} is too large for the dense oracle")
    top = _top_population(rho, d, n)
    if top > LEAKAGE_TOL:
        raise CutoffLeakageError(f"top Fock level holds {top:.3g} of the population; raise the cutoff")
    h, jump = fock_operators(J, R, cfg.cutoff)
    steps = int(round(tau / cfg.dt))
    dt = tau / steps if steps else 0.0
    sample_steps = {0: 0.0} if sample_times is None else {}
    if sample_times is not None:
        for t in sample_times:
            sample_steps[int(round(t / cfg.dt))] = float(t)
    sample_steps[steps] = float(tau)

    run = FockRun(J, cfg.cutoff)
    f = lambda r: master_rhs(r, h, jump, R)  # noqa: E731
    for k in range(steps + 1):
        if k in sample_steps:
            run.times.append(sample_steps[k])
            run.states.append(rho.copy())
        if k == steps:
            break
        k1 = f(rho)
        k2 = f(rho + 0.5 * dt * k1)
        k3 = f(rho + 0.5 * dt * k2)
        k4 = f(rho + dt * k3)
        rho = rho + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        run.max_trace_drift = max(run.max_trace_drift, abs(np.trace(rho).real - 1))
    top = _top_population(rho, d, n)
    if top > LEAKAGE_TOL:
        raise CutoffLeakageError(f"top Fock level holds {top:.3g} of the population; raise the cutoff")
    return run


def matrix_element_ode(rho_atom: AtomState, alpha0: complex, R: float, tau: float,
                       dt: float = 1e-3) -> HybridState:
    """RK4 on the coupled equations for ``rho_{m,m'}`` and ``alpha_m``.

    ``d rho/d tau = -R/2 (m^2 |a_m|^2 + m'^2 |a_m'|^2) rho + R a_m a_m'^* m m' rho``,
    ``d a_m/d tau = (-i m - R m^2 / 2) a_m``.
    """
    coeffs, alphas = {}, {}
    steps = max(int(round(tau / dt)), 0)
    h = tau / steps if steps else 0.0
    for J, block in rho_atom.sectors.items():
        m = m_values(J)
        mm, mp = m[:, None], m[None, :]
        y = np.concatenate([np.asarray(block, dtype=complex).ravel(),
                            np.full(len(m), alpha0, dtype=complex)])
        d = len(m)

        def rhs(y):
            rho = y[: d * d].reshape(d, d)
            a = y[d * d:]
            na = np.abs(a) ** 2
            drho = (-0.5 * R * (mm ** 2 * na[:, None] + mp ** 2 * na[None, :])
                    + R * a[:, None] * np.conj(a)[None, :] * mm * mp) * rho
            da = (-1j * m - 0.5 * R * m * m) * a
            return np.concatenate([drho.ravel(), da])

        for _ in range(steps):
            k1 = rhs(y)
            k2 = rhs(y + 0.5 * h * k1)
            k3 = rhs(y + 0.5 * h * k2)
            k4 = rhs(y + h * k3)
            y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        coeffs[J] = y[: d * d].reshape(d, d)
        alphas[J] = y[d * d:]
    return HybridState(coeffs, alphas, rho_atom.atom_count, complex(alpha0), float(R), float(tau))


# -- two-level atom with adiabatic elimination ------------------------------------

@dataclass(frozen=True)
class TwoLevelParams:
    omega: complex  # atom-photon coupling
    delta: float    # detuning
    gamma: float    # spontaneous decay rate
    alpha0: complex

    @property
    def denominator(self) -> float:
        return self.delta ** 2 + self.gamma ** 2 / 4

    @property
    def G(self) -> float:
        return self.delta * abs(self.omega) ** 2 / self.denominator

    @property
    def gamma_eff(self) -> float:
        return self.gamma * abs(self.omega) ** 2 / self.denominator

    @property
    def weak_drive(self) -> float:
        """``|Omega alpha|^2 / Delta^2``; the elimination needs this small."""
        return abs(self.omega * self.alpha0) ** 2 / self.delta ** 2

    @property
    def weak_decay(self) -> float:
        """``gamma^2 / Delta^2``; the elimination needs this small."""
        return self.gamma ** 2 / self.delta ** 2


def adiabatic_alpha(t, p: TwoLevelParams):
    """Probe amplitude after eliminating the excited state: phase rotation at ``G``, decay at ``gamma_eff/2``."""
    t = np.asarray(t, dtype=float)
    w = abs(p.omega) ** 2 / p.denominator
    return p.alpha0 * np.exp(1j * p.delta * w * t) * np.exp(-0.5 * p.gamma * w * t)


def stationary_coherences(p: TwoLevelParams, alpha: complex, p_gg: float = 1.0):
    """Adiabatic ``(P_eg, P_ge, P_ee)`` for the instantaneous probe amplitude."""
    D = p.denominator
    p_eg = np.conj(p.omega) * alpha * (-p.delta - 0.5j * p.gamma) / D * p_gg
    p_ge = p.omega * np.conj(alpha) * (-p.delta + 0.5j * p.gamma) / D * p_gg
    p_ee = abs(p.omega * alpha) ** 2 / D * p_gg
    return p_eg, p_ge, p_ee


@numba.njit(cache=True)
def _two_level_rhs(y, om, delta, gamma):
    pee, peg, pge, pgg, a, ac = y[0], y[1], y[2], y[3], y[4], y[5]
    omc = np.conj(om)
    out = np.empty(6, dtype=np.complex128)
    out[0] = -1j * (omc * a * pge - om * ac * peg) - gamma * pee
    out[1] = -1j * (delta * peg + (pgg - pee) * omc * a) - 0.5 * gamma * peg
    out[2] = -1j * (-delta * pge + om * ac * (pee - pgg)) - 0.5 * gamma * pge
    out[3] = -1j * (om * ac * peg - omc * a * pge) + gamma * pee
    out[4] = -1j * peg / pgg * om
    out[5] = 1j * pge / pgg * omc
    return out


@numba.njit(cache=True)
def _two_level_rk4(y0, om, delta, gamma, dt, steps, stride):
    n_out = steps // stride + 1
    out = np.empty((n_out, 6), dtype=np.complex128)
    y = y0.copy()
    out[0] = y
    j = 1
    for k in range(1, steps + 1):
        k1 = _two_level_rhs(y, om, delta, gamma)
        k2 = _two_level_rhs(y + 0.5 * dt * k1, om, delta, gamma)
        k3 = _two_level_rhs(y + 0.5 * dt * k2, om, delta, gamma)
        k4 = _two_level_rhs(y + dt * k3, om, delta, gamma)
        y = y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if abs(y[0]) > 1.5 or abs(y[3]) > 1.5 or not np.isfinite(y[0].real):
            return out[:0]
        if k % stride == 0:
            out[j] = y
            j += 1
    return out[:j]


@dataclass(frozen=True)
class TwoLevelTrajectory:
    t: np.ndarray
    p_ee: np.ndarray
    p_eg: np.ndarray
    p_ge: np.ndarray
    p_gg: np.ndarray
    alpha: np.ndarray
    alpha_star: np.ndarray
    dt: float

    def alpha_rate_alternative(self, p: TwoLevelParams) -> np.ndarray:
        """``d alpha/dt`` from the ``P_ee / P_ge`` form of the probe equation (undefined while ``P_ge = 0``)."""
        with np.errstate(divide="ignore", invalid="ignore"):
            return -1j * self.p_ee / self.p_ge * p.omega

    def alpha_rate(self, p: TwoLevelParams) -> np.ndarray:
        return -1j * self.p_eg / self.p_gg * p.omega


def two_level_trajectories(p: TwoLevelParams, t_max: float, dt: float,
                           samples: int = 2000) -> TwoLevelTrajectory:
    """Integrate the two-level equations from the ground state with probe amplitude ``alpha0``."""
    y0 = np.array([0, 0, 0, 1, p.alpha0, np.conj(p.alpha0)], dtype=np.complex128)
    for attempt in range(2):
        steps = int(math.ceil(t_max / dt))
        stride = max(steps // samples, 1)
        out = _two_level_rk4(y0, complex(p.omega), float(p.delta), float(p.gamma), dt, steps, stride)
        if len(out):
            t = np.arange(len(out)) * stride * dt
            return TwoLevelTrajectory(t, out[:, 0].real, out[:, 1], out[:, 2], out[:, 3].real,
                                      out[:, 4], out[:, 5], dt)
        dt /= 2
    raise IntegrationError("two-level integration unstable even after halving dt")

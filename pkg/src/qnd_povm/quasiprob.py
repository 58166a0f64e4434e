"""Bloch-sphere pictures of collective spin states: the Q function and the spherical Wigner function."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import UnsupportedInputError
from .spin_algebra import AtomState, clebsch_gordan, coherent_amplitudes, m_values, sector_count


@dataclass(frozen=True)
class SphereGrid:
    """Gauss-Legendre nodes in ``cos(theta)`` times a uniform periodic grid in ``phi``."""

    theta: np.ndarray
    phi: np.ndarray
    theta_weights: np.ndarray  # includes the sin(theta) Jacobian

    @classmethod
    def make(cls, n_theta: int = 181, n_phi: int = 360) -> "SphereGrid":
        if n_theta < 1 or n_phi < 1:
            raise ValueError("grid sizes must be positive")
        x, w = np.polynomial.legendre.leggauss(n_theta)
        order = np.argsort(-x)  # ascending theta
        theta = np.arccos(x[order])
        phi = 2 * np.pi * np.arange(n_phi) / n_phi
        return cls(theta, phi, w[order])

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.theta), len(self.phi)

    @property
    def weights(self) -> np.ndarray:
        return np.outer(self.theta_weights, np.full(len(self.phi), 2 * np.pi / len(self.phi)))

    def integrate(self, field: np.ndarray):
        return np.sum(self.weights * field)


def _fourier_in_phi(coeffs: dict[int, np.ndarray], grid: SphereGrid) -> np.ndarray:
    """``sum_k coeffs[k](theta) e^{i k phi}`` on the grid."""
    out = np.zeros(grid.shape, dtype=complex)
    for k, g in coeffs.items():
        out += np.outer(g, np.exp(1j * k * grid.phi))
    return out


def _sector_q(J: float, block: np.ndarray, grid: SphereGrid) -> np.ndarray:
    m = m_values(J)
    # |c_m(theta, phi)| e^{-i(J+m)phi}: the phi-dependence only enters through m - m'
    b = np.abs(coherent_amplitudes(J, grid.theta, 0.0))  # (n_theta, 2J+1)
    n = len(m)
    coeffs = {}
    for k in range(-(n - 1), n):
        diag = np.diagonal(block, offset=-k)  # entries rho[i, i - k], i.e. m - m' = k
        i = np.arange(max(k, 0), max(k, 0) + len(diag))
        coeffs[k] = (b[:, i] * b[:, i - k]) @ diag
    return np.real(_fourier_in_phi(coeffs, grid)) * (2 * J + 1) / (4 * np.pi)


def q_function(rho: AtomState, grid: SphereGrid | None = None) -> np.ndarray:
    """Husimi function; states spanning several ``J`` are averaged over the sector count."""
    grid = grid or SphereGrid.make()
    total = sum(_sector_q(J, block, grid) for J, block in rho.sectors.items())
    if len(rho.sectors) > 1:
        total = total / sector_count(rho.atom_count)
    return total


@lru_cache(maxsize=64)
def _legendre_table(L_max: int, theta_key: bytes) -> np.ndarray:
    """Orthonormal associated Legendre functions ``P[L, M, i]`` for ``M >= 0``, Condon-Shortley phase."""
    theta = np.frombuffer(theta_key)
    x, s = np.cos(theta), np.sin(theta)
    P = np.zeros((L_max + 1, L_max + 1, len(theta)))
    P[0, 0] = 1 / np.sqrt(4 * np.pi)
    for M in range(1, L_max + 1):
        P[M, M] = -np.sqrt((2 * M + 1) / (2 * M)) * s * P[M - 1, M - 1]
    for M in range(0, L_max):
        P[M + 1, M] = np.sqrt(2 * M + 3) * x * P[M, M]
    for M in range(0, L_max + 1):
        for L in range(M + 2, L_max + 1):
            a = np.sqrt((4 * L * L - 1) / (L * L - M * M))
            b = np.sqrt(((L - 1) ** 2 - M * M) / (4 * (L - 1) ** 2 - 1))
            P[L, M] = a * (x * P[L - 1, M] - b * P[L - 2, M])
    return P


def legendre_normalized(L_max: int, theta) -> np.ndarray:
    theta = np.ascontiguousarray(np.atleast_1d(theta), dtype=float)
    return _legendre_table(L_max, theta.tobytes())


def spherical_harmonic(L: int, M: int, theta, phi):
    """``Y_{L,M}(theta, phi)`` with the Condon-Shortley phase; broadcasts ``theta`` against ``phi``."""
    if abs(M) > L:
        raise ValueError("need |M| <= L")
    theta, phi = np.broadcast_arrays(np.asarray(theta, dtype=float), np.asarray(phi, dtype=float))
    P = legendre_normalized(L, theta.ravel())[L, abs(M)].reshape(theta.shape)
    y = P * np.exp(1j * abs(M) * phi)
    if M < 0:
        y = (-1) ** abs(M) * np.conj(y)
    return y


def wigner_coefficients(rho: AtomState) -> dict[tuple[int, int], complex]:
    """Multipole coefficients ``rho_{L,M} = sum (-1)^{J-m-M} <J,m; J,-m'|L,M> rho_{m,m'}``."""
    if not rho.is_single_sector:
        raise UnsupportedInputError("the Wigner function is defined per J sector only")
    J = rho.spins[0]
    block = rho.matrix
    m = m_values(J)
    out = {}
    for L in range(int(round(2 * J)) + 1):
        for M in range(-L, L + 1):
            acc = 0j
            for i, mi in enumerate(m):
                mp = mi - M
                if abs(mp) > J:
                    continue
                j = int(round(mp + J))
                sign = -1.0 if int(round(J - mi - M)) % 2 else 1.0
                acc += sign * clebsch_gordan(J, mi, J, -mp, L, M) * block[i, j]
            out[(L, M)] = acc
    return out


def wigner_function(rho: AtomState, grid: SphereGrid | None = None, return_complex: bool = False):
    """``W = sum_{L,M} rho_{L,M} Y_{L,M}`` on the grid; real part unless ``return_complex``."""
    grid = grid or SphereGrid.make()
    coeff = wigner_coefficients(rho)
    L_max = max(L for L, _ in coeff)
    P = legendre_normalized(L_max, grid.theta)
    by_m: dict[int, np.ndarray] = {}
    for (L, M), c in coeff.items():
        if c == 0:
            continue
        p = P[L, abs(M)] * ((-1) ** abs(M) if M < 0 else 1)
        by_m[M] = by_m.get(M, 0) + c * p
    w = _fourier_in_phi(by_m, grid)
    return w if return_complex else np.real(w)

"""Collective-spin (Dicke) basis, spin operators, initial states and Clebsch-Gordan coefficients.

Every sector of total spin ``J`` is stored as a ``(2J+1) x (2J+1)`` matrix whose
row/column index ``k`` corresponds to ``m = -J + k`` (ascending ``m``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Mapping

import numpy as np
from scipy.special import gammaln, xlogy

from .errors import InvalidInputError

HERMITIAN_TOL = 1e-12


def twice(x: float) -> int:
    """Return ``2x`` as an int, raising if ``x`` is not a half-integer."""
    d = 2 * x
    n = int(round(d))
    if abs(d - n) > 1e-9:
        raise InvalidInputError(f"{x!r} is not a half-integer")
    return n


def m_values(J: float) -> np.ndarray:
    """Magnetic quantum numbers ``-J, ..., J`` for one sector."""
    return np.arange(twice(J) + 1) - J


def sector_spins(N: int) -> list[float]:
    """Total spins ``J_min, ..., N/2`` available to ``N`` two-level atoms."""
    if int(N) != N or N < 1:
        raise InvalidInputError(f"atom count must be a positive integer, got {N!r}")
    j_min = 0.0 if N % 2 == 0 else 0.5
    return [j_min + k for k in range(int(N / 2 - j_min) + 1)]


def sector_count(N: int) -> float:
    """Normalisation ``J_max + 1`` (integer ``J_max``) or ``J_max + 1/2`` (half-integer)."""
    j_max = N / 2
    return j_max + 1 if N % 2 == 0 else j_max + 0.5


@dataclass(frozen=True, order=True)
class DickeIndex:
    J: float
    m: float

    def __post_init__(self):
        tj, tm = twice(self.J), twice(self.m)
        if tj < 0:
            raise InvalidInputError(f"J must be non-negative, got {self.J}")
        if abs(tm) > tj or (tj - tm) % 2:
            raise InvalidInputError(f"m={self.m} is not a valid projection for J={self.J}")


def build_basis(N: int) -> list[DickeIndex]:
    """All ``(J, m)`` labels for ``N`` atoms, ordered by ``J`` then ``m``."""
    return [DickeIndex(J, float(m)) for J in sector_spins(N) for m in m_values(J)]


@dataclass(frozen=True)
class AtomState:
    """Block-diagonal atomic density operator over Dicke sectors.

    ``sectors`` maps ``J`` to the complex matrix ``rho[m, m']`` of that sector.
    Sub-normalised states (e.g. before a measurement is normalised) are allowed.
    """

    sectors: Mapping[float, np.ndarray]
    atom_count: int

    def __post_init__(self):
        blocks = {}
        for J in sorted(self.sectors):
            mat = np.array(self.sectors[J], dtype=complex)
            n = twice(J) + 1
            if mat.shape != (n, n):
                raise InvalidInputError(f"sector J={J} must be {n}x{n}, got {mat.shape}")
            if twice(J) > self.atom_count or (self.atom_count - twice(J)) % 2:
                raise InvalidInputError(f"J={J} is not reachable with N={self.atom_count} atoms")
            mat.flags.writeable = False
            blocks[float(J)] = mat
        if not blocks:
            raise InvalidInputError("state needs at least one sector")
        object.__setattr__(self, "sectors", blocks)

    @classmethod
    def pure(cls, J: float, amplitudes, atom_count: int | None = None) -> "AtomState":
        c = np.asarray(amplitudes, dtype=complex)
        return cls({J: np.outer(c, c.conj())}, atom_count if atom_count is not None else twice(J))

    @property
    def spins(self) -> list[float]:
        return list(self.sectors)

    @property
    def is_single_sector(self) -> bool:
        return len(self.sectors) == 1

    @property
    def matrix(self) -> np.ndarray:
        """The only sector's matrix; raises for mixtures over several ``J``."""
        if not self.is_single_sector:
            raise InvalidInputError("state spans several J sectors")
        return next(iter(self.sectors.values()))

    def trace(self) -> complex:
        return sum(np.trace(b) for b in self.sectors.values())

    def diagonal(self) -> dict[float, np.ndarray]:
        return {J: np.real(np.diag(b)).copy() for J, b in self.sectors.items()}

    def map_sectors(self, fn) -> "AtomState":
        """New state with ``fn(J, block)`` applied to each sector."""
        return AtomState({J: fn(J, b) for J, b in self.sectors.items()}, self.atom_count)

    def normalized(self) -> "AtomState":
        tr = self.trace().real
        if tr <= 0:
            raise InvalidInputError("cannot normalise a state with non-positive trace")
        return self.map_sectors(lambda J, b: b / tr)

    def hermiticity_error(self) -> float:
        return max(float(np.max(np.abs(b - b.conj().T))) for b in self.sectors.values())

    def min_eigenvalue(self) -> float:
        return min(float(np.linalg.eigvalsh((b + b.conj().T) / 2)[0]) for b in self.sectors.values())

    def purity(self) -> float:
        return float(sum(np.real(np.trace(b @ b)) for b in self.sectors.values()))


@dataclass(frozen=True)
class SpinOperatorSet:
    """``J_z``, ``J_+``, ``J_-``, ``J_x``, ``J_y`` for one sector (Condon-Shortley phases)."""

    J: float
    jz: np.ndarray = field(repr=False)
    jp: np.ndarray = field(repr=False)
    jm: np.ndarray = field(repr=False)
    jx: np.ndarray = field(repr=False)
    jy: np.ndarray = field(repr=False)

    def __getitem__(self, name: str) -> np.ndarray:
        return getattr(self, name)


@lru_cache(maxsize=None)
def spin_operators(J: float) -> SpinOperatorSet:
    m = m_values(J)
    jz = np.diag(m).astype(complex)
    # <m+1|J+|m> = sqrt(J(J+1) - m(m+1))
    ladder = np.sqrt(J * (J + 1) - m[:-1] * (m[:-1] + 1))
    jp = np.diag(ladder, -1).astype(complex)
    jm = jp.conj().T.copy()
    jx = (jp + jm) / 2
    jy = (jp - jm) / 2j
    for a in (jz, jp, jm, jx, jy):
        a.flags.writeable = False
    return SpinOperatorSet(J, jz, jp, jm, jx, jy)


def log_binomial(n, k):
    return gammaln(np.asarray(n) + 1) - gammaln(np.asarray(k) + 1) - gammaln(np.asarray(n) - np.asarray(k) + 1)


def coherent_amplitudes(J: float, theta, phi) -> np.ndarray:
    """Amplitudes ``<J,m|theta,phi>`` for ``theta`` in ``[0, pi]``.

    Broadcasts over ``theta``/``phi``; the trailing axis runs over ``m``.
    """
    m = m_values(J)
    theta = np.asarray(theta, dtype=float)[..., None]
    phi = np.asarray(phi, dtype=float)[..., None]
    log_mag = (0.5 * log_binomial(2 * J, J + m)
               + xlogy(J + m, np.abs(np.sin(theta / 2)))
               + xlogy(J - m, np.abs(np.cos(theta / 2))))
    return np.exp(log_mag - 1j * (J + m) * phi)


def spin_coherent_state(J: float, theta: float, phi: float) -> AtomState:
    """Pure spin coherent state; ``theta = 0`` is ``|J, -J>``."""
    twice(J)
    if not 0 <= theta <= np.pi:
        raise InvalidInputError(f"theta must lie in [0, pi], got {theta}")
    return AtomState.pure(J, coherent_amplitudes(J, theta, phi))


def dicke_state(J: float, m: float, atom_count: int | None = None) -> AtomState:
    idx = DickeIndex(J, m)
    c = np.zeros(twice(J) + 1, dtype=complex)
    c[twice(idx.m + J) // 2] = 1.0
    return AtomState.pure(J, c, atom_count)


def thermal_state(N: int, E0: float) -> AtomState:
    """Thermal state weighted by ``exp(-E0 J_z)``, each sector normalised then averaged.

    Sectors carry equal weight ``1/(J_max+1)`` (``1/(J_max+1/2)`` for odd ``N``),
    not their multiplicity in the ``N``-qubit space.
    """
    if E0 < 0:
        raise InvalidInputError("E0 must be non-negative")
    norm = sector_count(N)
    blocks = {}
    for J in sector_spins(N):
        m = m_values(J)
        w = np.exp(-E0 * (m - m.min()))
        blocks[J] = np.diag(w / w.sum() / norm)
    return AtomState(blocks, N)


def maximally_mixed(J: float) -> AtomState:
    n = twice(J) + 1
    return AtomState({J: np.eye(n) / n}, twice(J))


# -- Clebsch-Gordan -------------------------------------------------------------

def _fact(n: int) -> int:
    return math.factorial(n)


@lru_cache(maxsize=None)
def _cg_doubled(j1: int, m1: int, j2: int, m2: int, L: int, M: int) -> float:
    # All arguments are doubled quantum numbers.
    if m1 + m2 != M:
        return 0.0
    if not (abs(j1 - j2) <= L <= j1 + j2) or (j1 + j2 + L) % 2:
        return 0.0
    if abs(m1) > j1 or abs(m2) > j2 or abs(M) > L:
        return 0.0
    a = (j1 + j2 - L) // 2
    b = (j1 - j2 + L) // 2
    c = (-j1 + j2 + L) // 2
    d = (j1 + j2 + L) // 2 + 1
    pref = Fraction((L + 1) * _fact(a) * _fact(b) * _fact(c), _fact(d))
    pref *= (_fact((j1 + m1) // 2) * _fact((j1 - m1) // 2) * _fact((j2 + m2) // 2)
             * _fact((j2 - m2) // 2) * _fact((L + M) // 2) * _fact((L - M) // 2))
    # Racah sum, exact in rationals
    k_min = max(0, (j2 - L - m1) // 2, (j1 - L + m2) // 2)
    k_max = min(a, (j1 - m1) // 2, (j2 + m2) // 2)
    total = Fraction(0)
    for k in range(k_min, k_max + 1):
        den = (_fact(k) * _fact(a - k) * _fact((j1 - m1) // 2 - k) * _fact((j2 + m2) // 2 - k)
               * _fact((L - j2 + m1) // 2 + k) * _fact((L - j1 - m2) // 2 + k))
        total += Fraction((-1) ** k, den)
    return float(total) * math.sqrt(pref)


def clebsch_gordan(j1: float, m1: float, j2: float, m2: float, L: float, M: float) -> float:
    """``<j1 m1; j2 m2 | L M>`` via the Racah sum, evaluated in exact rational arithmetic."""
    args = [twice(v) for v in (j1, m1, j2, m2, L, M)]
    if min(args[0], args[2], args[4]) < 0:
        raise InvalidInputError("angular momenta must be non-negative")
    for jj, mm in ((args[0], args[1]), (args[2], args[3]), (args[4], args[5])):
        if (jj - mm) % 2:
            raise InvalidInputError("j and m must both be integers or both half-integers")
    return _cg_doubled(*args)


# -- expectation values ---------------------------------------------------------

def _operator_blocks(state: AtomState, operator) -> dict[float, np.ndarray]:
    if isinstance(operator, str):
        return {J: spin_operators(J)[operator] for J in state.sectors}
    if isinstance(operator, Mapping):
        blocks = {float(J): np.asarray(o) for J, o in operator.items()}
        missing = set(state.sectors) - set(blocks)
        if missing:
            raise InvalidInputError(f"operator has no block for J in {sorted(missing)}")
        return blocks
    if not state.is_single_sector:
        raise InvalidInputError("a bare matrix operator needs a single-sector state")
    return {state.spins[0]: np.asarray(operator)}


def observable_mean(state: AtomState, operator) -> float:
    """``Tr(rho O)``. ``operator`` is a matrix, a ``{J: matrix}`` map or a name like ``"jx"``."""
    ops = _operator_blocks(state, operator)
    total = 0.0
    for J, rho in state.sectors.items():
        op = ops[J]
        if op.shape != rho.shape:
            raise InvalidInputError(f"operator shape {op.shape} does not match sector J={J}")
        total += np.trace(rho @ op)
    return float(np.real(total))


def observable_variance(state: AtomState, operator) -> float:
    ops = _operator_blocks(state, operator)
    sq = {J: o @ o for J, o in ops.items()}
    return observable_mean(state, sq) - observable_mean(state, ops) ** 2

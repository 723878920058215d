"""Block entanglement of the infinite XY chain from its Majorana correlation matrix.

After a Jordan-Wigner transformation every site carries two Majorana operators
``a_m, b_m``.  In the ground state of the infinite chain their correlations are

    <c_i c_j> = delta_ij + i Gamma_ij

and restricted to ``L`` contiguous sites ``Gamma`` is a ``2L x 2L`` real
antisymmetric block-Toeplitz matrix with 2x2 blocks

    block(m, n) = Pi_{n-m},    Pi_l = [[0, g_l], [-g_{-l}, 0]]

where ``g_l`` are the Fourier coefficients of the unimodular symbol

    g_l = 1/(2 pi) int_0^{2 pi} e^{-i l phi} (cos phi - lam - i gamma sin phi)
                                            / |cos phi - lam - i gamma sin phi| dphi.

The eigenvalues of ``i Gamma`` come in pairs ``+-nu_j`` with ``0 <= nu_j <= 1``.
Each pair is an independent fermionic mode whose reduced state has spectrum
``((1 + nu_j)/2, (1 - nu_j)/2)``, so the block density matrix is a product of
``L`` binary distributions.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import (
    NoSaturation,
    PairingFailure,
    QuadratureNotConverged,
    SingularSymbol,
    UnsupportedCoupling,
)
from .model import CouplingPoint, validate
from .spectra import block_entropy

SYMBOL_ZERO_TOL = 1e-14
PAIRING_TOL = 1e-9
CLAMP_TOL = 1e-9
# GL node-by-harmonic products are formed in slabs of this many harmonics.
_GL_CHUNK = 128


@dataclass(frozen=True)
class QuadratureSpec:
    """Node schedule for the Fourier integrals.

    Nodes start at ``nodes_start`` and double until two successive coefficient
    vectors differ by less than ``tol`` in max norm, or ``nodes_cap`` is hit.
    """

    nodes_start: int = 256
    nodes_cap: int = 2**20
    tol: float = 1e-12

    def __post_init__(self):
        if self.nodes_start < 2 or self.nodes_cap < 2:
            raise ValueError("quadrature node counts must be >= 2")
        if not self.tol > 0:
            raise ValueError("quadrature tolerance must be positive")


DEFAULT_QUAD = QuadratureSpec()


@dataclass(frozen=True)
class SymbolSample:
    phi: float
    value: complex


@dataclass(frozen=True, eq=False)
class BlockCorrelationMatrix:
    L: int
    entries: np.ndarray


@dataclass(frozen=True, eq=False)
class ModeOccupations:
    """Per-mode probabilities ``q_j = (1 + nu_j)/2``, sorted descending, all in [1/2, 1]."""

    L: int
    q: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        if q.shape != (self.L,):
            raise ValueError(f"expected {self.L} occupations, got shape {q.shape}")
        q = np.sort(q)[::-1].copy()
        q.setflags(write=False)
        object.__setattr__(self, "q", q)

    @property
    def nu(self) -> np.ndarray:
        return 2.0 * self.q - 1.0

    def __eq__(self, other):
        if not isinstance(other, ModeOccupations):
            return NotImplemented
        return self.L == other.L and np.array_equal(self.q, other.q)


def _require_free_fermion(point: CouplingPoint) -> CouplingPoint:
    validate(point)
    if point.epsilon != 0:
        raise UnsupportedCoupling(
            "a longitudinal field epsilon > 0 breaks the free-fermion mapping; use edsolver"
        )
    if point.gamma == 0 and point.lam < 1:
        raise UnsupportedCoupling(
            "the critical XX line (gamma = 0, lam < 1) is not supported"
        )
    return point


def _symbol_values(phi: np.ndarray, gamma: float, lam: float) -> np.ndarray:
    num = np.cos(phi) - lam - 1j * gamma * np.sin(phi)
    den = np.abs(num)
    if np.any(den < SYMBOL_ZERO_TOL):
        bad = np.atleast_1d(phi)[np.atleast_1d(den) < SYMBOL_ZERO_TOL][0]
        raise SingularSymbol(f"symbol vanishes at phi={bad!r} for gamma={gamma}, lam={lam}")
    return num / den


def symbol(phi: float, point: CouplingPoint) -> SymbolSample:
    """Evaluate the unimodular symbol at angle ``phi`` (reduced into [0, 2 pi))."""
    validate(point)
    if point.epsilon != 0:
        raise UnsupportedCoupling("symbol is only defined for epsilon = 0")
    phi = float(phi) % (2 * math.pi)
    value = complex(_symbol_values(np.array(phi), point.gamma, point.lam))
    return SymbolSample(phi, value)


def singular_angles(point: CouplingPoint) -> list[float]:
    """Angles in [0, 2 pi) where the symbol's denominator vanishes."""
    if point.gamma != 0:
        # gamma sin(phi) = 0 forces phi in {0, pi}; phi = pi needs lam = -1.
        return [0.0] if point.lam == 1 else []
    if point.lam > 1:
        return []
    if point.lam == 1:
        return [0.0]
    a = math.acos(point.lam)
    return [a, 2 * math.pi - a]


def _next_pow2(n: int) -> int:
    return 1 << max(0, int(n - 1).bit_length())


def _trapezoid(gamma: float, lam: float, nodes: int, lmax: int) -> np.ndarray:
    phi = 2 * np.pi * np.arange(nodes) / nodes
    f = _symbol_values(phi, gamma, lam)
    F = np.fft.fft(f) / nodes
    return F[np.arange(-lmax, lmax + 1) % nodes]


def _gauss_legendre(gamma: float, lam: float, nodes: int, lmax: int, cuts: list[float]) -> np.ndarray:
    # Panels run between consecutive singular angles, so every node is interior.
    edges = sorted(cuts) + [cuts[0] + 2 * np.pi] if cuts else [0.0, 2 * np.pi]
    per_panel = max(2, nodes // (len(edges) - 1))
    x, w = np.polynomial.legendre.leggauss(per_panel)
    phis, weights = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        half = 0.5 * (hi - lo)
        phis.append(lo + half * (x + 1))
        weights.append(half * w)
    phi = np.concatenate(phis)
    fw = _symbol_values(phi, gamma, lam) * np.concatenate(weights) / (2 * np.pi)
    ls = np.arange(-lmax, lmax + 1)
    out = np.empty(ls.size, dtype=complex)
    for s in range(0, ls.size, _GL_CHUNK):
        chunk = ls[s:s + _GL_CHUNK]
        out[s:s + _GL_CHUNK] = np.exp(-1j * np.outer(chunk, phi)) @ fw
    return out


@functools.lru_cache(maxsize=64)
def _coefficients(gamma: float, lam: float, lmax: int, quad: QuadratureSpec) -> np.ndarray:
    cuts = singular_angles(CouplingPoint(gamma, lam))
    if cuts:
        nodes = max(quad.nodes_start, 2 * lmax + 2)
        rule = lambda n: _gauss_legendre(gamma, lam, n, lmax, cuts)  # noqa: E731
    else:
        nodes = max(quad.nodes_start, _next_pow2(2 * lmax + 2))
        rule = lambda n: _trapezoid(gamma, lam, n, lmax)  # noqa: E731
    if nodes > quad.nodes_cap:
        raise QuadratureNotConverged(
            f"{nodes} nodes needed to resolve |l| <= {lmax} exceed the cap {quad.nodes_cap}"
        )
    prev = rule(nodes)
    diff = math.inf
    while 2 * nodes <= quad.nodes_cap:
        nodes *= 2
        cur = rule(nodes)
        diff = float(np.max(np.abs(cur - prev)))
        if diff < quad.tol:
            g = cur.real.copy()
            g.setflags(write=False)
            return g
        prev = cur
    raise QuadratureNotConverged(
        f"Fourier coefficients for gamma={gamma}, lam={lam} did not converge to "
        f"{quad.tol:g} within {quad.nodes_cap} nodes (last change {diff:.3g})"
    )


def fourier_coefficients(lmax: int, point: CouplingPoint, quad: QuadratureSpec = DEFAULT_QUAD) -> np.ndarray:
    """Coefficients ``g_l`` for ``l = -lmax .. lmax`` (index ``l + lmax``).

    The symbol is conjugate-symmetric in the sense that makes every ``g_l``
    real; the vanishing imaginary parts are dropped.  Harmonics are computed in
    power-of-two batches so that neighbouring block sizes share one integration.
    """
    _require_free_fermion(point)
    if lmax < 0:
        raise ValueError("lmax must be non-negative")
    batch = max(64, _next_pow2(lmax))
    g = _coefficients(float(point.gamma), float(point.lam), batch, quad)
    return g[batch - lmax: batch + lmax + 1]


def fourier_coefficient(l: int, point: CouplingPoint, quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    """Single Fourier coefficient ``g_l``."""
    return float(fourier_coefficients(abs(l), point, quad)[l + abs(l)])


def block_correlation_from_coefficients(L: int, g: np.ndarray) -> BlockCorrelationMatrix:
    lmax = (len(g) - 1) // 2
    if L < 1 or L - 1 > lmax:
        raise ValueError(f"need coefficients up to |l| = {L - 1}, have {lmax}")
    idx = np.arange(L)
    d = idx[None, :] - idx[:, None]  # n - m
    gamma = np.zeros((2 * L, 2 * L))
    gamma[0::2, 1::2] = g[lmax + d]
    gamma[1::2, 0::2] = -g[lmax - d]
    gamma = 0.5 * (gamma - gamma.T)
    return BlockCorrelationMatrix(L, gamma)


def build_block_correlation(L: int, point: CouplingPoint, quad: QuadratureSpec = DEFAULT_QUAD) -> BlockCorrelationMatrix:
    L = int(L)
    if L < 1:
        raise ValueError("block size must be >= 1")
    return block_correlation_from_coefficients(L, fourier_coefficients(L - 1, point, quad))


def mode_occupations(gamma_matrix: BlockCorrelationMatrix) -> ModeOccupations:
    """Canonical values of ``Gamma`` turned into per-mode probabilities.

    Eigenvalues of the Hermitian matrix ``i Gamma`` are sorted and the k-th
    smallest is paired with the k-th largest; the pair must cancel to within
    ``PAIRING_TOL``.  Values of ``nu`` beyond 1 by at most ``CLAMP_TOL`` are
    treated as roundoff and clamped; anything larger is an error.
    """
    L = gamma_matrix.L
    ev = np.linalg.eigvalsh(1j * gamma_matrix.entries)
    lo, hi = ev[:L], ev[::-1][:L]
    mismatch = np.abs(lo + hi)
    if np.any(mismatch > PAIRING_TOL):
        raise PairingFailure(
            f"eigenvalues of i*Gamma do not pair into +-nu (worst mismatch {mismatch.max():.3g})"
        )
    nu = 0.5 * (hi - lo)
    if np.any(nu > 1 + CLAMP_TOL):
        raise PairingFailure(f"canonical value {nu.max()!r} exceeds 1 beyond roundoff")
    nu = np.clip(nu, 0.0, 1.0)
    return ModeOccupations(L, 0.5 * (1.0 + nu))


def block_modes(point: CouplingPoint, L: int, quad: QuadratureSpec = DEFAULT_QUAD) -> ModeOccupations:
    """Mode occupations of a block of ``L`` contiguous spins."""
    return mode_occupations(build_block_correlation(L, point, quad))


def saturation_block_size(
    point: CouplingPoint,
    quad: QuadratureSpec = DEFAULT_QUAD,
    tol: float = 1e-8,
    cap: int = 1024,
    modes_fn: Callable[[int], ModeOccupations] | None = None,
) -> int:
    """Smallest even ``L`` with ``|S_L - S_{L-2}| < tol`` (``S_0 = 0``).

    Block sizes are doubled from 2 until the criterion holds, then the
    bracket is bisected over even sizes.  Raises :class:`NoSaturation` when
    the criterion still fails at ``cap``, which happens when the correlation
    length is comparable to or larger than ``cap``.
    """
    _require_free_fermion(point)
    cap = int(cap) - int(cap) % 2
    if cap < 2:
        raise ValueError("cap must be at least 2")
    if modes_fn is None:
        g = fourier_coefficients(cap, point, quad)
        modes_fn = lambda L: mode_occupations(block_correlation_from_coefficients(L, g))  # noqa: E731

    entropies = {0: 0.0}

    def S(L):
        if L not in entropies:
            entropies[L] = block_entropy(modes_fn(L))
        return entropies[L]

    def ok(L):
        return abs(S(L) - S(L - 2)) < tol

    lo, hi = 0, 2
    while not ok(hi):
        if hi >= cap:
            raise NoSaturation(
                f"|S_L - S_(L-2)| = {abs(S(hi) - S(hi - 2)):.3g} >= {tol:g} at L = {hi} (cap); "
                "correlation length exceeds the block-size cap"
            )
        lo, hi = hi, min(2 * hi, cap)
    while hi - lo > 2:
        mid = (lo + hi) // 2
        mid -= mid % 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi

"""Exact diagonalization of finite XY chains, including the longitudinal field.

Basis states are integers whose bit ``N-1-i`` holds site ``i`` (0 = spin up,
``Z = +1``), so reshaping a state vector to ``(2**L, 2**(N-L))`` splits off
the first ``L`` sites.

Bond sign.  With ``convention="ferro"`` (default) the bond terms enter with a
minus sign, ``-(1+gamma)/2 XX - (1-gamma)/2 YY``, and the field terms are
``+lam Z + eps X``.  ``convention="antiferro"`` flips the bond sign.  The two are
related by rotating every other spin about z, a product of one-site unitaries,
so at ``eps = 0`` all block spectra agree.  A uniform ``eps`` only selects
a product state in the ferromagnetic form, which is why it is the default.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sparse
import scipy.sparse.linalg as sla

from .errors import CapacityExceeded, ConvergenceFailure, RequiresSymmetryBreaking
from .model import CouplingPoint, validate
from .spectra import EPS_ACC, MajorizationVerdict, TruncatedSpectrum, majorize

DEFAULT_CAP = 16
DENSE_MAX_DIM = 2048
EIGEN_TOL = 1e-12
DEGENERACY_TOL = 1e-10


@dataclass(frozen=True)
class FiniteChainSpec:
    N: int
    point: CouplingPoint
    boundary: Literal["open", "periodic"] = "open"
    cap: int = DEFAULT_CAP
    convention: Literal["ferro", "antiferro"] = "ferro"

    def __post_init__(self):
        validate(self.point)
        if int(self.N) != self.N or self.N < 2:
            raise ValueError(f"chain length must be an integer >= 2, got {self.N!r}")
        if self.N > self.cap:
            raise CapacityExceeded(
                f"N = {self.N} exceeds the exact-diagonalization cap {self.cap} "
                f"(state dimension 2**{self.N})"
            )
        if self.boundary not in ("open", "periodic"):
            raise ValueError(f"unknown boundary {self.boundary!r}")
        if self.convention not in ("ferro", "antiferro"):
            raise ValueError(f"unknown sign convention {self.convention!r}")


@dataclass(frozen=True, eq=False)
class GroundStateResult:
    spec: FiniteChainSpec
    energy: float
    amplitudes: np.ndarray
    degeneracy_gap: float


def _bonds(spec: FiniteChainSpec) -> list[tuple[int, int]]:
    bonds = [(i, i + 1) for i in range(spec.N - 1)]
    if spec.boundary == "periodic" and spec.N > 2:
        bonds.append((spec.N - 1, 0))
    return bonds


def _hamiltonian_on(spec: FiniteChainSpec, basis: np.ndarray) -> sparse.csr_matrix:
    """Hamiltonian restricted to ``basis`` (sorted state labels closed under H)."""
    N = spec.N
    g, lam, eps = spec.point.gamma, spec.point.lam, spec.point.epsilon
    sign = -1.0 if spec.convention == "ferro" else 1.0
    dim = basis.size
    full = basis.size == 1 << N
    pos = None if full else np.full(1 << N, -1, dtype=np.int64)
    if pos is not None:
        pos[basis] = np.arange(dim)
    shift = [N - 1 - i for i in range(N)]
    bits = [(basis >> s) & 1 for s in shift]

    rows, cols, vals = [], [], []
    here = np.arange(dim)
    diag = lam * (N - 2 * np.sum(bits, axis=0)).astype(float)
    rows.append(here)
    cols.append(here)
    vals.append(diag)
    for i, j in _bonds(spec):
        # XX flips both spins with amplitude 1; YY flips both with -1 on
        # aligned pairs and +1 on anti-aligned pairs.
        aligned = bits[i] == bits[j]
        amp = sign * np.where(aligned, g, 1.0)
        target = basis ^ (1 << shift[i]) ^ (1 << shift[j])
        rows.append(here)
        cols.append(target if full else pos[target])
        vals.append(amp)
    if eps != 0:
        if not full:
            raise ValueError("a longitudinal field mixes parity sectors")
        for i in range(N):
            target = basis ^ (1 << shift[i])
            rows.append(here)
            cols.append(target)
            vals.append(np.full(dim, float(eps)))
    H = sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(dim, dim)
    )
    H.eliminate_zeros()
    return H


def build_hamiltonian(spec: FiniteChainSpec) -> sparse.csr_matrix:
    """Sparse real symmetric Hamiltonian in the Z basis, dimension ``2**N``."""
    return _hamiltonian_on(spec, np.arange(1 << spec.N, dtype=np.int64))


def parity_sector(N: int, parity: int) -> np.ndarray:
    """Basis labels with an even (``parity=0``) or odd number of down spins.

    The global spin flip ``prod_i Z_i`` is diagonal here: it is ``+1`` on the
    even sector.
    """
    labels = np.arange(1 << N, dtype=np.int64)
    ones = np.zeros(labels.size, dtype=np.int64)
    for s in range(N):
        ones += (labels >> s) & 1
    return labels[ones % 2 == parity]


def _lowest(H: sparse.csr_matrix, N: int, how_many: int = 2) -> tuple[np.ndarray, np.ndarray]:
    dim = H.shape[0]
    how_many = min(how_many, dim)
    if dim <= DENSE_MAX_DIM or dim <= how_many + 1:
        w, v = scipy.linalg.eigh(H.toarray(), subset_by_index=[0, how_many - 1])
        return w, v
    v0 = np.ones(dim) / math.sqrt(dim)
    try:
        w, v = sla.eigsh(H, k=how_many, which="SA", tol=EIGEN_TOL, v0=v0, maxiter=20 * dim)
    except sla.ArpackNoConvergence as exc:
        raise ConvergenceFailure(f"Lanczos did not converge: {exc}") from exc
    order = np.argsort(w)
    return w[order], v[:, order]


def _fix_sign(v: np.ndarray) -> np.ndarray:
    k = int(np.argmax(np.abs(v)))
    return v if v[k] >= 0 else -v


def ground_state(spec: FiniteChainSpec) -> GroundStateResult:
    """Lowest eigenvector of the chain.

    At ``eps = 0`` the Hamiltonian conserves the spin-flip parity, so each
    parity sector is diagonalized separately.  If the two sector ground
    energies are within ``1e-10`` the even (cat-like) state is returned,
    which fixes the choice inside a numerically degenerate ground space.
    """
    N = spec.N
    if spec.point.epsilon == 0:
        candidates = []
        for parity in (0, 1):
            basis = parity_sector(N, parity)
            w, v = _lowest(_hamiltonian_on(spec, basis), N)
            candidates.append((parity, basis, w, v))
        levels = np.sort(np.concatenate([c[2] for c in candidates]))
        (_, b_even, w_even, v_even), (_, b_odd, w_odd, v_odd) = candidates
        if w_odd[0] < w_even[0] - DEGENERACY_TOL:
            basis, energy, vec = b_odd, w_odd[0], v_odd[:, 0]
        else:
            basis, energy, vec = b_even, w_even[0], v_even[:, 0]
        psi = np.zeros(1 << N)
        psi[basis] = vec
    else:
        levels, v = _lowest(build_hamiltonian(spec), N)
        energy, psi = levels[0], v[:, 0]
    psi = _fix_sign(psi / np.linalg.norm(psi))
    gap = float(levels[1] - levels[0]) if levels.size > 1 else math.inf
    return GroundStateResult(spec, float(energy), psi, gap)


def reduced_spectrum(
    state: GroundStateResult, L: int, start: int = 0, eps_acc: float = EPS_ACC
) -> TruncatedSpectrum:
    """Eigenvalues of the reduced density matrix of sites ``start .. start+L-1``.

    Obtained as squared singular values of the amplitude matrix.  The default
    block is the first ``L`` sites; a centred block (``start = (N-L)//2``)
    keeps the block away from the open ends.
    """
    N = state.spec.N
    if not 1 <= L < N:
        raise ValueError(f"block size must satisfy 1 <= L < N = {N}, got {L}")
    if not 0 <= start <= N - L:
        raise ValueError(f"block [{start}, {start + L}) does not fit in {N} sites")
    psi = state.amplitudes.reshape((2,) * N)
    if start:
        psi = np.moveaxis(psi, list(range(start, start + L)), list(range(L)))
    s = np.linalg.svd(psi.reshape(1 << L, -1), compute_uv=False)
    p = np.sort(s * s)[::-1]
    p = p[p >= eps_acc] if eps_acc > 0 else p[p > 0]
    return TruncatedSpectrum(p, max(0.0, 1.0 - float(p.sum())), eps_acc)


def flow_spectra(
    gamma: float,
    lambdas: Sequence[float],
    epsilon: float,
    N: int,
    L: int,
    cap: int = DEFAULT_CAP,
    start: int = 0,
) -> list[TruncatedSpectrum]:
    out = []
    for lam in lambdas:
        spec = FiniteChainSpec(N, CouplingPoint(gamma, lam, epsilon), cap=cap)
        out.append(reduced_spectrum(ground_state(spec), L, start))
    return out


def broken_symmetry_flow_check(
    gamma: float,
    lambdas: Sequence[float],
    epsilon: float,
    N: int,
    L: int,
    cap: int = DEFAULT_CAP,
) -> list[MajorizationVerdict]:
    """Majorization verdicts along a decreasing-field sweep with ``eps > 0``.

    Step ``i`` checks ``p(lambdas[i]) < p(lambdas[i+1])``: the spectrum closer
    to the product-state end must majorize the earlier one.
    """
    if not epsilon > 0:
        raise RequiresSymmetryBreaking("the broken-symmetry flow needs epsilon > 0")
    lambdas = list(lambdas)
    if any(not 0 < lam < 1 for lam in lambdas):
        raise ValueError("fields must lie in (0, 1)")
    if any(b >= a for a, b in zip(lambdas, lambdas[1:])):
        raise ValueError("fields must be strictly decreasing (toward the infrared)")
    if not 1 <= L < N:
        raise ValueError(f"block size must satisfy 1 <= L < N = {N}")
    if len(lambdas) < 2:
        return []
    spectra = flow_spectra(gamma, lambdas, epsilon, N, L, cap)
    return [majorize(a, b) for a, b in zip(spectra, spectra[1:])]

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from entflow import edsolver
from entflow.edsolver import (
    FiniteChainSpec,
    broken_symmetry_flow_check,
    build_hamiltonian,
    ground_state,
    parity_sector,
    reduced_spectrum,
)
from entflow.errors import CapacityExceeded, RequiresSymmetryBreaking
from entflow.model import CouplingPoint
from entflow.spectra import shannon_entropy


def ising(N, lam, eps=0.0, **kw):
    return FiniteChainSpec(N, CouplingPoint(1.0, lam, eps), **kw)


def kron_chain(ops):
    out = np.array([[1.0]])
    for op in ops:
        out = np.kron(out, op)
    return out


X = np.array([[0.0, 1.0], [1.0, 0.0]])
Y = np.array([[0.0, -1j], [1j, 0.0]])
Z = np.diag([1.0, -1.0])
I2 = np.eye(2)


def dense_reference(N, gamma, lam, eps, sign=-1.0, periodic=False):
    """Hamiltonian from explicit Kronecker products; site 0 is the leftmost factor."""
    H = np.zeros((2**N, 2**N), dtype=complex)

    def site(op, i):
        ops = [I2] * N
        ops[i] = op
        return ops

    bonds = [(i, i + 1) for i in range(N - 1)] + ([(N - 1, 0)] if periodic and N > 2 else [])
    for i, j in bonds:
        for op, c in ((X, (1 + gamma) / 2), (Y, (1 - gamma) / 2)):
            ops = [I2] * N
            ops[i], ops[j] = op, op
            H += sign * c * kron_chain(ops)
    for i in range(N):
        H += lam * kron_chain(site(Z, i)) + eps * kron_chain(site(X, i))
    return H


@pytest.mark.parametrize("N,gamma,lam,eps,conv,bc", [
    (2, 1.0, 0.0, 0.0, "ferro", "open"),
    (4, 0.5, 0.7, 0.0, "ferro", "open"),
    (5, 0.3, 1.2, 0.1, "ferro", "periodic"),
    (4, 0.8, 0.4, 0.0, "antiferro", "periodic"),
    (6, 1.0, 1.0, 0.05, "ferro", "open"),
])
def test_hamiltonian_matches_kronecker_construction(N, gamma, lam, eps, conv, bc):
    spec = FiniteChainSpec(N, CouplingPoint(gamma, lam, eps), boundary=bc, convention=conv)
    H = build_hamiltonian(spec).toarray()
    ref = dense_reference(N, gamma, lam, eps, -1.0 if conv == "ferro" else 1.0, bc == "periodic")
    np.testing.assert_allclose(H, ref.real, atol=1e-14)
    assert np.abs(ref.imag).max() < 1e-14
    np.testing.assert_array_equal(H, H.T)


def test_two_sites_zero_field_spectrum():
    H = build_hamiltonian(ising(2, 0.0)).toarray()
    np.testing.assert_allclose(np.linalg.eigvalsh(H), [-1, -1, 1, 1], atol=1e-14)


@pytest.mark.parametrize("lam", [0.1, 0.75, 2.0])
def test_two_sites_ground_state(lam):
    gs = ground_state(ising(2, lam))
    r = math.sqrt(1 + 4 * lam**2)
    assert gs.energy == pytest.approx(-r, abs=1e-13)
    p = (1 + 2 * lam / r) / 2
    sp = reduced_spectrum(gs, 1)
    np.testing.assert_allclose(np.sort(sp.probs), np.sort([p, 1 - p]), atol=1e-13)


def test_two_sites_amplitudes_at_three_quarters():
    gs = ground_state(ising(2, 0.75))
    # even sector: |00> carries the -lam field energy cost, |11> the gain
    a, b = gs.amplitudes[0b00], gs.amplitudes[0b11]
    assert gs.amplitudes[0b01] == gs.amplitudes[0b10] == 0
    assert b**2 == pytest.approx((1 + 1.5 / math.sqrt(1 + 2.25)) / 2, abs=1e-13)
    assert a * b > 0
    assert a**2 + b**2 == pytest.approx(1, abs=1e-14)


@pytest.mark.parametrize("N", [4, 7, 12])
def test_ground_state_normalized_and_eigenvector(N):
    spec = FiniteChainSpec(N, CouplingPoint(0.6, 0.9))
    gs = ground_state(spec)
    assert np.linalg.norm(gs.amplitudes) == pytest.approx(1, abs=1e-12)
    H = build_hamiltonian(spec)
    np.testing.assert_allclose(H @ gs.amplitudes, gs.energy * gs.amplitudes, atol=1e-9)


def test_lanczos_path_matches_dense(monkeypatch):
    spec = FiniteChainSpec(10, CouplingPoint(1.0, 0.8, 0.02))
    w, v = np.linalg.eigh(build_hamiltonian(spec).toarray())
    monkeypatch.setattr(edsolver, "DENSE_MAX_DIM", 16)
    gs = ground_state(spec)
    assert gs.energy == pytest.approx(w[0], abs=1e-10)
    assert gs.degeneracy_gap == pytest.approx(w[1] - w[0], abs=1e-8)
    assert abs(v[:, 0] @ gs.amplitudes) == pytest.approx(1, abs=1e-10)


def test_parity_sector_sizes():
    for N in (2, 5, 8):
        even, odd = parity_sector(N, 0), parity_sector(N, 1)
        assert even.size == odd.size == 2 ** (N - 1)
        assert np.union1d(even, odd).size == 2**N


def test_cat_state_at_tiny_field():
    N = 12
    gs = ground_state(ising(N, 0.01))
    # ferromagnetic zero-field ground space is spanned by all-|+> and all-|->
    plus = kron_chain([np.array([1, 1]) / math.sqrt(2)] * N).ravel()
    minus = kron_chain([np.array([1, -1]) / math.sqrt(2)] * N).ravel()
    cat = (plus + minus) / math.sqrt(2)
    assert 1 - abs(cat @ gs.amplitudes) < 1e-4
    sp = reduced_spectrum(gs, 6)
    assert shannon_entropy(sp.probs) == pytest.approx(1, abs=1e-3)


def test_longitudinal_field_selects_product_state():
    N = 12
    gs = ground_state(ising(N, 0.01, 0.05))
    minus = kron_chain([np.array([1, -1]) / math.sqrt(2)] * N).ravel()
    assert 1 - abs(minus @ gs.amplitudes) < 1e-3
    assert shannon_entropy(reduced_spectrum(gs, 6).probs) < 1e-2


@settings(max_examples=15, deadline=None)
@given(st.integers(4, 9), st.floats(0.1, 1.0), st.floats(0.05, 2.0))
def test_complementary_blocks_share_spectrum(N, gamma, lam):
    gs = ground_state(FiniteChainSpec(N, CouplingPoint(gamma, lam)))
    for L in range(1, N):
        a, b = reduced_spectrum(gs, L, eps_acc=1e-14), reduced_spectrum(gs, N - L, start=L, eps_acc=1e-14)
        assert shannon_entropy(a.probs) == pytest.approx(shannon_entropy(b.probs), abs=1e-9)


def test_spin_flip_symmetry_of_even_state():
    N = 8
    gs = ground_state(FiniteChainSpec(N, CouplingPoint(0.7, 0.6)))
    # prod Z is diagonal; the state lives in one parity sector
    odd = parity_sector(N, 1)
    even = parity_sector(N, 0)
    weights = (np.sum(gs.amplitudes[even] ** 2), np.sum(gs.amplitudes[odd] ** 2))
    assert min(weights) < 1e-24 and max(weights) == pytest.approx(1)


@pytest.mark.parametrize("gamma,lam", [(1.0, 0.5), (0.6, 1.3)])
def test_conventions_give_same_block_spectra(gamma, lam):
    a = ground_state(FiniteChainSpec(8, CouplingPoint(gamma, lam)))
    b = ground_state(FiniteChainSpec(8, CouplingPoint(gamma, lam), convention="antiferro"))
    assert a.energy == pytest.approx(b.energy, abs=1e-12)
    for L in (1, 3, 4):
        np.testing.assert_allclose(reduced_spectrum(a, L, start=2).probs[:4],
                                   reduced_spectrum(b, L, start=2).probs[:4], atol=1e-10)


def test_reduced_spectrum_bounds():
    gs = ground_state(ising(6, 0.5))
    with pytest.raises(ValueError):
        reduced_spectrum(gs, 6)
    with pytest.raises(ValueError):
        reduced_spectrum(gs, 3, start=4)
    sp = reduced_spectrum(gs, 3, start=3)
    assert sp.mass + sp.tail_bound == pytest.approx(1)


def test_capacity():
    with pytest.raises(CapacityExceeded):
        ising(40, 0.5)
    assert ising(18, 0.5, cap=18).N == 18


def test_entropy_vanishes_along_broken_flow():
    S = [shannon_entropy(reduced_spectrum(ground_state(ising(12, lam, 0.05)), 6).probs)
         for lam in (0.9, 0.7, 0.5, 0.3, 0.1)]
    assert all(b < a for a, b in zip(S, S[1:]))
    assert S[-1] < 1e-3


def test_broken_flow_example():
    verdicts = broken_symmetry_flow_check(1.0, [0.9, 0.5, 0.1], 0.05, N=14, L=7)
    assert len(verdicts) == 2 and all(v.holds for v in verdicts)


def test_broken_flow_edge_cases():
    assert broken_symmetry_flow_check(1.0, [0.5], 0.05, N=8, L=4) == []
    with pytest.raises(RequiresSymmetryBreaking):
        broken_symmetry_flow_check(1.0, [0.9, 0.5], 0.0, N=8, L=4)
    with pytest.raises(ValueError):
        broken_symmetry_flow_check(1.0, [0.5, 0.9], 0.05, N=8, L=4)
    with pytest.raises(ValueError):
        broken_symmetry_flow_check(1.0, [1.2, 0.5], 0.05, N=8, L=4)
    with pytest.raises(CapacityExceeded):
        broken_symmetry_flow_check(1.0, [0.9, 0.5], 0.05, N=20, L=4)

"""Entanglement spectra, entropies and majorization.

A block density matrix built from independent fermionic modes has the product
spectrum ``(q_1, 1-q_1) x ... x (q_L, 1-q_L)``.  Entropies are evaluated
mode by mode; the spectrum itself is only ever materialised as its ``k``
largest entries (``top_k_product_spectrum``).

Majorization ``p < p'`` ("p is majorized by p'") means every partial sum of
the descending-sorted ``p`` is bounded by the matching partial sum of ``p'``.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .errors import (
    BadIncrement,
    CapacityExceeded,
    DomainError,
    IncompatibleTruncation,
    LengthMismatch,
)

if TYPE_CHECKING:
    from .freefermion import ModeOccupations

EPS_ACC = 1e-16
DEFAULT_K = 10_000
MAJORIZATION_SLACK = 1e-12
# Modes this close to q = 1 are pure and never branch in the enumeration.
PURE_MODE_TOL = 1e-15


@dataclass(frozen=True, eq=False)
class TruncatedSpectrum:
    """Largest eigenvalues of a density matrix, descending.

    ``tail_bound`` bounds the probability mass that was not returned.
    ``eps_acc = 0`` marks an exact (untruncated) spectrum.
    """

    probs: np.ndarray
    tail_bound: float
    eps_acc: float

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1:
            raise ValueError("probs must be one-dimensional")
        if np.any(np.diff(p) > 0):
            raise ValueError("probs must be sorted descending")
        p = p.copy()
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @classmethod
    def exact(cls, probs: Sequence[float]) -> "TruncatedSpectrum":
        """Wrap a full probability vector: sorted descending, zeros dropped."""
        p = np.sort(np.asarray(probs, dtype=float))[::-1]
        if np.any(p < 0):
            raise DomainError("probabilities must be non-negative")
        return cls(p[p > 0], 0.0, 0.0)

    def __len__(self):
        return len(self.probs)

    @property
    def mass(self) -> float:
        return float(self.probs.sum())


@dataclass(frozen=True)
class MajorizationVerdict:
    """Outcome of a partial-sum comparison.

    ``worst_margin`` is the most negative ``cumsum(p') - cumsum(p)`` seen and
    ``worst_index`` the 0-based position of that partial sum.
    """

    holds: bool
    worst_margin: float
    worst_index: int
    slack_used: float

    def __bool__(self):
        return self.holds


def _q_array(modes) -> np.ndarray:
    q = getattr(modes, "q", modes)
    return np.asarray(q, dtype=float).reshape(-1)


def binary_entropy(q: float) -> float:
    """Entropy in bits of the distribution ``(q, 1-q)`` for ``q`` in [1/2, 1]."""
    q = float(q)
    if not 0.5 <= q <= 1.0:
        raise DomainError(f"mode probability must lie in [1/2, 1], got {q!r}")
    if q == 1.0:
        return 0.0
    return -q * math.log2(q) - (1.0 - q) * math.log2(1.0 - q)


def block_entropy(modes: "ModeOccupations | Sequence[float]") -> float:
    """Von Neumann entropy (bits) of the product of binary mode spectra."""
    return float(sum(binary_entropy(q) for q in _q_array(modes)))


def renyi_entropy(modes: "ModeOccupations | Sequence[float]", alpha: float) -> float:
    """Renyi entropy of index ``alpha`` in bits; ``alpha = inf`` gives the min-entropy."""
    alpha = float(alpha)
    if not alpha > 0 or alpha == 1.0 or math.isnan(alpha):
        raise DomainError(f"Renyi index must be positive and != 1, got {alpha!r}")
    q = _q_array(modes)
    if np.any((q < 0.5) | (q > 1.0)):
        raise DomainError("mode probabilities must lie in [1/2, 1]")
    if math.isinf(alpha):
        return float(-np.sum(np.log2(q)))
    per_mode = np.log2(q**alpha + (1.0 - q) ** alpha) / (1.0 - alpha)
    return float(per_mode.sum())


def shannon_entropy(probs: Sequence[float]) -> float:
    """Entropy in bits of an explicit probability vector (0 log 0 = 0)."""
    p = np.asarray(probs, dtype=float)
    p = p[p > 0]
    return float(-np.sum(p * np.log2(p)))


def renyi_of_distribution(probs: Sequence[float], alpha: float) -> float:
    p = np.asarray(probs, dtype=float)
    p = p[p > 0]
    if math.isinf(alpha):
        return float(-np.log2(p.max()))
    return float(np.log2(np.sum(p**alpha)) / (1.0 - alpha))


def top_k_product_spectrum(
    modes: "ModeOccupations | Sequence[float]",
    k: int = DEFAULT_K,
    eps_acc: float = EPS_ACC,
    max_frontier: int = 5_000_000,
) -> TruncatedSpectrum:
    """The ``k`` largest eigenvalues of ``(q_1, 1-q_1) x ... x (q_L, 1-q_L)``.

    Each eigenvalue is labelled by the set of modes that take their minority
    value ``1 - q_j``.  Branching modes are sorted by ``r_j = (1-q_j)/q_j``
    descending and flip-sets are enumerated best-first from the empty set.
    A set whose largest member is ``m`` has two children, obtained by adding
    ``m+1`` or by replacing ``m`` with ``m+1``; every flip-set is reached
    exactly once and children never outweigh their parent, so popping the
    heap yields eigenvalues in exact descending order.  Eigenvalues below
    ``eps_acc`` are never pushed.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if not 0 < eps_acc < 1:
        raise ValueError("eps_acc must lie in (0, 1)")
    q = _q_array(modes)
    if np.any((q < 0.5) | (q > 1.0)):
        raise DomainError("mode probabilities must lie in [1/2, 1]")

    branching = [j for j in range(len(q)) if q[j] < 1.0 - PURE_MODE_TOL]
    r = [(1.0 - q[j]) / q[j] for j in branching]
    order = sorted(range(len(branching)), key=lambda i: -r[i])
    modes_by_rank = [branching[i] for i in order]
    n = len(modes_by_rank)

    def weight(flips: tuple[int, ...]) -> float:
        flipped = {modes_by_rank[i] for i in flips}
        return math.prod(1.0 - q[j] if j in flipped else q[j] for j in range(len(q)))

    out: list[float] = []
    heap = [(-weight(()), ())]
    while heap and len(out) < k:
        neg, flips = heapq.heappop(heap)
        out.append(-neg)
        if flips:
            m = flips[-1]
            children = [flips + (m + 1,), flips[:-1] + (m + 1,)] if m + 1 < n else []
        else:
            children = [(0,)] if n else []
        for child in children:
            w = weight(child)
            if w >= eps_acc:
                heapq.heappush(heap, (-w, child))
        if len(heap) > max_frontier:
            raise CapacityExceeded(f"enumeration frontier exceeded {max_frontier} entries")

    # Ties between equal-in-exact-arithmetic eigenvalues can pop a few ulps out
    # of order; a final sort restores strict ordering.
    probs = np.sort(np.array([p for p in out if p >= eps_acc]))[::-1]
    tail = max(0.0, 1.0 - float(probs.sum()))
    return TruncatedSpectrum(probs, tail, eps_acc)


def majorize(p: TruncatedSpectrum, p_prime: TruncatedSpectrum) -> MajorizationVerdict:
    """Check ``p < p_prime``: ``p_prime`` is the more ordered spectrum.

    The shorter vector is padded with zeros.  Because truncated vectors hold
    the exact leading eigenvalues, padded partial sums never exceed the true
    ones by more than the discarded mass, so the tolerance
    ``p.tail_bound + p_prime.tail_bound + 1e-12`` cannot produce a false
    violation.
    """
    if p.eps_acc != p_prime.eps_acc:
        raise IncompatibleTruncation(
            f"spectra truncated at different thresholds ({p.eps_acc:g} vs {p_prime.eps_acc:g})"
        )
    n = max(len(p), len(p_prime), 1)
    a = np.zeros(n)
    b = np.zeros(n)
    a[: len(p)] = p.probs
    b[: len(p_prime)] = p_prime.probs
    margin = np.cumsum(b) - np.cumsum(a)
    i = int(np.argmin(margin))
    slack = p.tail_bound + p_prime.tail_bound + MAJORIZATION_SLACK
    worst = float(margin[i])
    return MajorizationVerdict(worst >= -slack, worst, i, slack)


def majorize_vectors(x: Sequence[float], x_prime: Sequence[float]) -> MajorizationVerdict:
    """``majorize`` on two exact probability vectors."""
    return majorize(TruncatedSpectrum.exact(x), TruncatedSpectrum.exact(x_prime))


def modewise_majorize(a: "ModeOccupations | Sequence[float]", b: "ModeOccupations | Sequence[float]") -> MajorizationVerdict:
    """Check ``a.q_j <= b.q_j`` for every mode; ``b`` is further along the flow."""
    qa, qb = _q_array(a), _q_array(b)
    if qa.shape != qb.shape:
        raise LengthMismatch(f"mode counts differ: {qa.size} vs {qb.size}")
    qa, qb = np.sort(qa)[::-1], np.sort(qb)[::-1]
    if qa.size == 0:
        return MajorizationVerdict(True, 0.0, 0, MAJORIZATION_SLACK)
    margin = qb - qa
    i = int(np.argmin(margin))
    worst = float(margin[i])
    return MajorizationVerdict(worst >= -MAJORIZATION_SLACK, worst, i, MAJORIZATION_SLACK)


def product_distribution(x: Sequence[float], y: Sequence[float]) -> np.ndarray:
    return np.outer(np.asarray(x, dtype=float), np.asarray(y, dtype=float)).ravel()


def lemma_product_majorization(x, x_prime, y, y_prime) -> MajorizationVerdict:
    """Check that ``x < x'`` and ``y < y'`` carry over to ``x (x) y < x' (x) y'``.

    The premises are verified first; a ``ValueError`` is raised if either
    fails.  The returned verdict concerns the product distributions.
    """
    for lhs, rhs, name in ((x, x_prime, "x"), (y, y_prime, "y")):
        if not majorize_vectors(lhs, rhs).holds:
            raise ValueError(f"premise {name} < {name}' does not hold")
    return majorize_vectors(product_distribution(x, y), product_distribution(x_prime, y_prime))


def t_transform(v: np.ndarray, i: int, j: int, t: float) -> np.ndarray:
    """Mix components ``i`` and ``j`` of ``v``: ``(v_i, v_j) -> (t v_i + (1-t) v_j, (1-t) v_i + t v_j)``.

    The output is majorized by the input for every ``t`` in [0, 1].
    """
    out = np.array(v, dtype=float)
    vi, vj = out[i], out[j]
    out[i] = t * vi + (1 - t) * vj
    out[j] = (1 - t) * vi + t * vj
    return out


def random_majorized_pair(rng: np.random.Generator, n: int, steps: int = 3) -> tuple[np.ndarray, np.ndarray]:
    """Random ``(x, x')`` of length ``n`` with ``x < x'`` guaranteed by construction."""
    x_prime = np.sort(rng.dirichlet(np.full(n, 0.5)))[::-1]
    x = x_prime
    for _ in range(steps if n > 1 else 0):
        i, j = rng.choice(n, size=2, replace=False)
        x = t_transform(x, i, j, rng.uniform())
    return x, x_prime


def blocksize_majorize(
    modes_L: "ModeOccupations | Sequence[float]",
    modes_L_plus_2: "ModeOccupations | Sequence[float]",
    k: int = DEFAULT_K,
    eps_acc: float = EPS_ACC,
) -> MajorizationVerdict:
    """Check that the larger block's spectrum is majorized by the smaller one's."""
    small, large = _q_array(modes_L), _q_array(modes_L_plus_2)
    if large.size - small.size != 2:
        raise BadIncrement(
            f"block sizes must differ by exactly 2, got {small.size} and {large.size}"
        )
    return majorize(
        top_k_product_spectrum(large, k, eps_acc),
        top_k_product_spectrum(small, k, eps_acc),
    )

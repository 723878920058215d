"""Parameter scans, scaling fits and an on-disk cache of mode occupations."""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Literal, Sequence

import numpy as np

from . import __version__
from .errors import CacheCorrupt, EntflowError, InsufficientPoints, NoSaturation
from .freefermion import (
    DEFAULT_QUAD,
    ModeOccupations,
    QuadratureSpec,
    block_modes,
    saturation_block_size,
)
from .model import CouplingPoint, same_branch, validate
from .spectra import block_entropy, renyi_entropy

log = logging.getLogger(__name__)

CACHE_FORMAT = 1
SOLVER_TAG = f"freefermion-{__version__}"
CACHE_ENV = "ENTFLOW_CACHE_DIR"


@dataclass
class ScanRecord:
    point: CouplingPoint
    L: int
    entropy_bits: float = math.nan
    renyi: dict[float, float] | None = None
    saturated: bool = False
    solver: Literal["freefermion", "ed"] = "freefermion"
    error: str | None = None
    meta: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    residual_rms: float
    points_used: int


# --------------------------------------------------------------------------- cache


class ModeCache:
    """Content-addressed store of :class:`ModeOccupations`, one JSON file per key.

    Files are written to a temporary name and renamed into place, so readers
    never see partial entries.  Each file records its key digest and a SHA-256
    of the raw float64 payload.
    """

    def __init__(self, directory: str | os.PathLike):
        self.directory = Path(directory)

    @staticmethod
    def key(point: CouplingPoint, L: int, quad: QuadratureSpec) -> str:
        payload = {
            "gamma": float(point.gamma).hex(),
            "lam": float(point.lam).hex(),
            "epsilon": float(point.epsilon).hex(),
            "L": int(L),
            "nodes_start": quad.nodes_start,
            "nodes_cap": quad.nodes_cap,
            "tol": float(quad.tol).hex(),
            "solver": SOLVER_TAG,
        }
        blob = json.dumps(payload, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def path(self, key: str) -> Path:
        return self.directory / f"{key}.json"

    def load(self, key: str) -> ModeOccupations | None:
        path = self.path(key)
        try:
            text = path.read_text()
        except FileNotFoundError:
            return None
        try:
            doc = json.loads(text)
            q = np.array([float.fromhex(h) for h in doc["q"]])
            ok = (
                doc["format"] == CACHE_FORMAT
                and doc["key"] == key
                and doc["L"] == q.size
                and doc["checksum"] == hashlib.sha256(q.tobytes()).hexdigest()
            )
        except (ValueError, KeyError, TypeError) as exc:
            raise CacheCorrupt(f"unreadable cache entry {path}: {exc}") from exc
        if not ok:
            raise CacheCorrupt(f"checksum or header mismatch in {path}")
        return ModeOccupations(q.size, q)

    def store(self, key: str, point: CouplingPoint, modes: ModeOccupations) -> None:
        self.directory.mkdir(parents=True, exist_ok=True)
        q = np.asarray(modes.q, dtype=float)
        doc = {
            "format": CACHE_FORMAT,
            "key": key,
            "solver": SOLVER_TAG,
            "L": int(modes.L),
            "gamma": point.gamma,
            "lam": point.lam,
            "epsilon": point.epsilon,
            "checksum": hashlib.sha256(q.tobytes()).hexdigest(),
            "q": [float(x).hex() for x in q],
        }
        fd, tmp = tempfile.mkstemp(dir=self.directory, prefix=".tmp-", suffix=".json")
        try:
            with os.fdopen(fd, "w") as fh:
                json.dump(doc, fh)
            os.replace(tmp, self.path(key))
        except BaseException:
            Path(tmp).unlink(missing_ok=True)
            raise

    def get_or_compute(
        self, point: CouplingPoint, L: int, quad: QuadratureSpec = DEFAULT_QUAD
    ) -> ModeOccupations:
        key = self.key(point, L, quad)
        try:
            hit = self.load(key)
        except CacheCorrupt as exc:
            log.warning("%s; recomputing", exc)
            hit = None
        if hit is not None:
            return hit
        modes = block_modes(point, L, quad)
        self.store(key, point, modes)
        return modes

    def entries(self) -> list[dict]:
        out = []
        if not self.directory.is_dir():
            return out
        for path in sorted(self.directory.glob("*.json")):
            key = path.stem
            row = {"key": key, "path": str(path)}
            try:
                doc = json.loads(path.read_text())
                row.update(L=doc.get("L"), gamma=doc.get("gamma"), lam=doc.get("lam"),
                           epsilon=doc.get("epsilon"))
                self.load(key)
                row["status"] = "ok"
            except (CacheCorrupt, ValueError) as exc:
                row["status"] = f"corrupt: {exc}"
            out.append(row)
        return out

    def clear(self) -> int:
        n = 0
        if self.directory.is_dir():
            for path in self.directory.glob("*.json"):
                path.unlink()
                n += 1
        return n


def default_cache_dir() -> Path:
    env = os.environ.get(CACHE_ENV)
    if env:
        return Path(env)
    return Path(os.environ.get("XDG_CACHE_HOME", Path.home() / ".cache")) / "entflow"


def cache_get_or_compute(
    point: CouplingPoint, L: int, quad: QuadratureSpec = DEFAULT_QUAD, cache: ModeCache | None = None
) -> ModeOccupations:
    if cache is None:
        return block_modes(point, L, quad)
    return cache.get_or_compute(point, L, quad)


# --------------------------------------------------------------------------- scans


def _modes_fn(point, quad, cache) -> Callable[[int], ModeOccupations]:
    return lambda L: cache_get_or_compute(point, L, quad, cache)


def evaluate_point(
    point: CouplingPoint,
    L: int,
    quad: QuadratureSpec = DEFAULT_QUAD,
    cache: ModeCache | None = None,
    sat_tol: float = 1e-8,
    renyi_alphas: Sequence[float] = (),
) -> ScanRecord:
    """Entropy of one block; failures are captured in ``record.error``.

    ``saturated`` means ``|S_L - S_(L-2)| < sat_tol``, i.e. the block already
    exceeds the correlation length at this tolerance.
    """
    rec = ScanRecord(point, int(L), meta={"sat_tol": sat_tol})
    try:
        validate(point)
        modes = cache_get_or_compute(point, L, quad, cache)
        rec.entropy_bits = block_entropy(modes)
        if renyi_alphas:
            rec.renyi = {float(a): renyi_entropy(modes, a) for a in renyi_alphas}
        prev = block_entropy(cache_get_or_compute(point, L - 2, quad, cache)) if L > 2 else 0.0
        rec.saturated = abs(rec.entropy_bits - prev) < sat_tol
    except (EntflowError, ValueError) as exc:
        rec.error = f"{type(exc).__name__}: {exc}"
    return rec


def scan_lambda(
    gamma: float,
    lambda_grid: Iterable[float],
    L: int,
    quad: QuadratureSpec = DEFAULT_QUAD,
    cache: ModeCache | None = None,
    sat_tol: float = 1e-8,
    renyi_alphas: Sequence[float] = (),
    workers: int = 1,
) -> list[ScanRecord]:
    """One record per field value, in grid order; errors are recorded per row."""
    points = [CouplingPoint(gamma, float(lam)) for lam in lambda_grid]
    return scan_points(points, L, quad, cache, sat_tol, renyi_alphas, workers)


def scan_points(points, L, quad=DEFAULT_QUAD, cache=None, sat_tol=1e-8, renyi_alphas=(), workers=1):
    def run(p):
        return evaluate_point(p, L, quad, cache, sat_tol, renyi_alphas)

    if workers <= 1:
        return [run(p) for p in points]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, points))


def fit_log2(x: Sequence[float], y: Sequence[float]) -> FitResult:
    """Ordinary least squares ``y = slope * log2(x) + intercept``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 3:
        raise InsufficientPoints(f"need at least 3 points for a fit, got {x.size}")
    A = np.column_stack([np.log2(x), np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ np.array([slope, intercept])
    return FitResult(float(slope), float(intercept), float(np.sqrt(np.mean(resid**2))), int(x.size))


def fit_critical_blocksize_scaling(
    gamma: float,
    lam: float,
    L_list: Sequence[int],
    quad: QuadratureSpec = DEFAULT_QUAD,
    cache: ModeCache | None = None,
) -> FitResult:
    """Slope of ``S_L`` against ``log2 L``; at a critical point it estimates ``(c + cbar)/6``."""
    L_list = [int(L) for L in L_list]
    if len(L_list) < 4:
        raise InsufficientPoints(f"need at least 4 block sizes, got {len(L_list)}")
    point = CouplingPoint(gamma, lam)
    S = [block_entropy(cache_get_or_compute(point, L, quad, cache)) for L in L_list]
    return fit_log2(L_list, S)


@dataclass(frozen=True)
class SaturatedEntropy:
    point: CouplingPoint
    L: int
    entropy_bits: float
    saturated: bool


def saturated_entropy(
    point: CouplingPoint,
    quad: QuadratureSpec = DEFAULT_QUAD,
    tol: float = 1e-8,
    cap: int = 1024,
    cache: ModeCache | None = None,
) -> SaturatedEntropy:
    """Entropy at the saturation block size, or at ``cap`` flagged unsaturated."""
    modes_fn = _modes_fn(point, quad, cache) if cache is not None else None
    try:
        L = saturation_block_size(point, quad, tol, cap, modes_fn)
        saturated = True
    except NoSaturation:
        L = int(cap) - int(cap) % 2
        saturated = False
    S = block_entropy(cache_get_or_compute(point, L, quad, cache))
    return SaturatedEntropy(point, L, S, saturated)


def offcritical_entropies(
    gamma: float,
    delta_grid: Sequence[float],
    side: Literal["above", "below"],
    quad: QuadratureSpec = DEFAULT_QUAD,
    sat_tol: float = 1e-8,
    cap: int = 1024,
    cache: ModeCache | None = None,
) -> list[SaturatedEntropy]:
    if side not in ("above", "below"):
        raise ValueError(f"side must be 'above' or 'below', got {side!r}")
    sign = 1.0 if side == "above" else -1.0
    out = []
    for delta in delta_grid:
        if not 0 < delta <= 0.1:
            raise ValueError(f"|1 - lam| must lie in (0, 0.1], got {delta!r}")
        point = CouplingPoint(gamma, 1.0 + sign * float(delta))
        out.append(saturated_entropy(point, quad, sat_tol, cap, cache))
    return out


def fit_offcritical_scaling(
    gamma: float,
    delta_grid: Sequence[float],
    side: Literal["above", "below"],
    quad: QuadratureSpec = DEFAULT_QUAD,
    sat_tol: float = 1e-8,
    cap: int = 1024,
    cache: ModeCache | None = None,
) -> FitResult:
    """Fit saturated ``S`` against ``log2 |1 - lam|`` on one side of the critical point.

    Points that do not saturate below ``cap`` are dropped, not extrapolated.
    """
    rows = offcritical_entropies(gamma, delta_grid, side, quad, sat_tol, cap, cache)
    used = [r for r in rows if r.saturated]
    return fit_log2([abs(1 - r.point.lam) for r in used], [r.entropy_bits for r in used])


def uv_ir_comparison(
    gamma: float,
    lambda_uv: float,
    lambda_ir: float,
    L_list: Sequence[int],
    quad: QuadratureSpec = DEFAULT_QUAD,
    cache: ModeCache | None = None,
) -> list[bool]:
    """``S_L(uv) >= S_L(ir) - 1e-10`` for each block size."""
    if not same_branch([lambda_uv, lambda_ir]):
        raise ValueError("both fields must lie on the same side of the critical point")
    uv, ir = CouplingPoint(gamma, lambda_uv), CouplingPoint(gamma, lambda_ir)
    out = []
    for L in L_list:
        s_uv = block_entropy(cache_get_or_compute(uv, L, quad, cache))
        s_ir = block_entropy(cache_get_or_compute(ir, L, quad, cache))
        out.append(s_uv >= s_ir - 1e-10)
    return out


def critical_line_constant(
    gamma_pairs: Sequence[tuple[float, float]],
    L: int,
    quad: QuadratureSpec = DEFAULT_QUAD,
    cache: ModeCache | None = None,
) -> list[tuple[float, float]]:
    """Measured ``S_L(g, 1) - S_L(g', 1)`` next to the prediction ``log2(g/g')/6``."""
    out = []
    for g, gp in gamma_pairs:
        if not (0 < g <= 1 and 0 < gp <= 1):
            raise ValueError("anisotropies must lie in (0, 1]")
        s = block_entropy(cache_get_or_compute(CouplingPoint(g, 1.0), L, quad, cache))
        sp = block_entropy(cache_get_or_compute(CouplingPoint(gp, 1.0), L, quad, cache))
        out.append((s - sp, math.log2(g / gp) / 6.0))
    return out

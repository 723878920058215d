import json
import math

import numpy as np
import pytest

from entflow.errors import CacheCorrupt, InsufficientPoints
from entflow.freefermion import DEFAULT_QUAD, QuadratureSpec, block_modes
from entflow.model import CouplingPoint
from entflow.rgscan import (
    ModeCache,
    critical_line_constant,
    default_cache_dir,
    evaluate_point,
    fit_critical_blocksize_scaling,
    fit_log2,
    fit_offcritical_scaling,
    offcritical_entropies,
    scan_lambda,
    uv_ir_comparison,
)
from entflow.spectra import block_entropy


@pytest.fixture
def cache(tmp_path):
    return ModeCache(tmp_path / "modes")


# --------------------------------------------------------------------------- cache


def test_cache_roundtrip_is_bit_identical(cache):
    point = CouplingPoint(0.7, 1.3)
    first = cache.get_or_compute(point, 24)
    assert len(cache.entries()) == 1
    second = cache.get_or_compute(point, 24)
    assert second.q.tobytes() == first.q.tobytes()
    assert second.q.tobytes() == block_modes(point, 24).q.tobytes()
    assert len(cache.entries()) == 1


def test_cache_key_covers_every_input():
    base = ModeCache.key(CouplingPoint(0.7, 1.3), 24, DEFAULT_QUAD)
    variants = [
        ModeCache.key(CouplingPoint(0.7, 1.3 + 1e-15), 24, DEFAULT_QUAD),
        ModeCache.key(CouplingPoint(0.7000000000000001, 1.3), 24, DEFAULT_QUAD),
        ModeCache.key(CouplingPoint(0.7, 1.3, 0.1), 24, DEFAULT_QUAD),
        ModeCache.key(CouplingPoint(0.7, 1.3), 26, DEFAULT_QUAD),
        ModeCache.key(CouplingPoint(0.7, 1.3), 24, QuadratureSpec(nodes_start=512)),
        ModeCache.key(CouplingPoint(0.7, 1.3), 24, QuadratureSpec(nodes_cap=2**18)),
        ModeCache.key(CouplingPoint(0.7, 1.3), 24, QuadratureSpec(tol=1e-10)),
    ]
    assert len(set(variants + [base])) == len(variants) + 1
    assert ModeCache.key(CouplingPoint(0.7, 1.3), 24, DEFAULT_QUAD) == base


@pytest.mark.parametrize("damage", ["truncate", "flip", "header"])
def test_corrupt_entry_is_detected_and_recomputed(cache, damage, caplog):
    point = CouplingPoint(1.0, 1.5)
    good = cache.get_or_compute(point, 10)
    key = ModeCache.key(point, 10, DEFAULT_QUAD)
    path = cache.path(key)
    text = path.read_text()
    if damage == "truncate":
        path.write_text(text[: len(text) // 2])
    elif damage == "flip":
        doc = json.loads(text)
        doc["q"][0] = float(0.75).hex()
        path.write_text(json.dumps(doc))
    else:
        doc = json.loads(text)
        doc["key"] = "0" * 64
        path.write_text(json.dumps(doc))
    with pytest.raises(CacheCorrupt):
        cache.load(key)
    assert cache.entries()[0]["status"].startswith("corrupt")
    again = cache.get_or_compute(point, 10)
    assert again.q.tobytes() == good.q.tobytes()
    assert "recomputing" in caplog.text
    assert cache.load(key) == good


def test_cache_clear(cache):
    for L in (4, 6, 8):
        cache.get_or_compute(CouplingPoint(1.0, 2.0), L)
    assert cache.clear() == 3
    assert cache.entries() == []
    assert cache.clear() == 0


def test_no_temp_files_left(cache):
    cache.get_or_compute(CouplingPoint(1.0, 2.0), 6)
    assert [p.name for p in cache.directory.iterdir() if p.name.startswith(".tmp")] == []


def test_default_cache_dir_env(monkeypatch, tmp_path):
    monkeypatch.setenv("ENTFLOW_CACHE_DIR", str(tmp_path / "x"))
    assert default_cache_dir() == tmp_path / "x"
    monkeypatch.delenv("ENTFLOW_CACHE_DIR")
    monkeypatch.setenv("XDG_CACHE_HOME", str(tmp_path))
    assert default_cache_dir() == tmp_path / "entflow"


# --------------------------------------------------------------------------- fits


def test_fit_recovers_synthetic_line():
    L = np.array([8, 16, 32, 64, 128])
    fit = fit_log2(L, 0.25 * np.log2(L) + 0.7)
    assert fit.slope == pytest.approx(0.25, abs=1e-10)
    assert fit.intercept == pytest.approx(0.7, abs=1e-10)
    assert fit.residual_rms < 1e-12 and fit.points_used == 5


def test_fit_needs_three_points():
    with pytest.raises(InsufficientPoints):
        fit_log2([1, 2], [0, 1])
    with pytest.raises(InsufficientPoints):
        fit_critical_blocksize_scaling(1.0, 1.0, [8, 16, 32])


def test_critical_ising_slope():
    fit = fit_critical_blocksize_scaling(1.0, 1.0, [16, 32, 64, 128])
    assert fit.slope == pytest.approx(1 / 6, abs=5e-3)


def test_product_state_slope_is_zero():
    fit = fit_critical_blocksize_scaling(1.0, 1e6, [8, 16, 32, 64])
    assert abs(fit.slope) < 1e-10


# --------------------------------------------------------------------------- scans


def test_scan_lambda_limits():
    recs = scan_lambda(1.0, [0.0, 1.0, 1e6], 40)
    assert [r.ok for r in recs] == [True] * 3
    assert recs[0].entropy_bits == pytest.approx(1, abs=1e-10)
    assert recs[2].entropy_bits < 1e-10
    assert 1 < recs[1].entropy_bits < 3
    assert recs[0].saturated and recs[2].saturated and not recs[1].saturated


def test_scan_records_per_point_errors():
    recs = scan_lambda(0.0, [0.5, 1.5], 10)
    assert not recs[0].ok and "Unsupported" in recs[0].error
    assert math.isnan(recs[0].entropy_bits)
    assert recs[1].ok
    rec = evaluate_point(CouplingPoint(1.0, 1.002), 20, QuadratureSpec(nodes_cap=512))
    assert not rec.ok and "QuadratureNotConverged" in rec.error


def test_scan_renyi_columns():
    rec = scan_lambda(1.0, [1.4], 20, renyi_alphas=(0.5, 2.0, math.inf))[0]
    assert rec.renyi[0.5] >= rec.entropy_bits >= rec.renyi[2.0] >= rec.renyi[math.inf]


def test_scan_is_deterministic_across_workers(cache):
    grid = np.linspace(1.05, 1.6, 12)
    serial = scan_lambda(0.8, grid, 32)
    threaded = scan_lambda(0.8, grid, 32, cache=cache, workers=4)
    assert [r.point.lam for r in threaded] == list(grid)
    assert [r.entropy_bits for r in serial] == [r.entropy_bits for r in threaded]


def test_entropy_falls_along_paramagnetic_flow():
    recs = scan_lambda(0.5, np.arange(1.05, 2.01, 0.05), 48)
    S = [r.entropy_bits for r in recs]
    assert all(b <= a + 1e-10 for a, b in zip(S, S[1:]))


def test_offcritical_filters_unsaturated_points():
    full = fit_offcritical_scaling(1.0, [0.1, 0.08, 0.06, 0.05], "above", cap=1024)
    assert full.points_used == 4
    rows = offcritical_entropies(1.0, [0.1, 0.08, 0.06, 0.05], "above", cap=100)
    assert [r.saturated for r in rows] == [True, True, False, False]
    with pytest.raises(InsufficientPoints):
        fit_offcritical_scaling(1.0, [0.1, 0.08, 0.06, 0.05], "above", cap=100)
    part = fit_offcritical_scaling(1.0, [0.1, 0.09, 0.08, 0.06], "above", cap=100)
    assert part.points_used == 3


def test_offcritical_rejects_bad_deltas():
    with pytest.raises(ValueError):
        offcritical_entropies(1.0, [0.2], "above")
    with pytest.raises(ValueError):
        offcritical_entropies(1.0, [0.05], "sideways")


# --------------------------------------------------------------------------- comparisons


def test_uv_ir_examples():
    assert all(uv_ir_comparison(1.0, 1.1, 2.0, [10, 20, 40]))
    assert all(uv_ir_comparison(1.0, 0.9, 0.3, [10, 20, 40]))
    assert all(uv_ir_comparison(1.0, 1.5, 1.5, [10, 20]))
    assert not all(uv_ir_comparison(1.0, 2.0, 1.1, [10, 20, 40]))
    with pytest.raises(ValueError):
        uv_ir_comparison(1.0, 0.9, 1.1, [10])


def test_critical_line_constant():
    (measured, predicted), = critical_line_constant([(1.0, 0.5)], 200)
    assert predicted == pytest.approx(1 / 6)
    assert measured == pytest.approx(predicted, abs=1e-3)
    (m_ab, _), (m_ba, _) = critical_line_constant([(1.0, 0.5), (0.5, 1.0)], 100)
    assert m_ab == -m_ba
    with pytest.raises(ValueError):
        critical_line_constant([(1.0, 0.0)], 50)


def test_cache_does_not_change_scan_results(cache):
    a = scan_lambda(1.0, [1.2, 1.7], 30)
    b = scan_lambda(1.0, [1.2, 1.7], 30, cache=cache)
    c = scan_lambda(1.0, [1.2, 1.7], 30, cache=cache)
    assert [r.entropy_bits for r in a] == [r.entropy_bits for r in b] == [r.entropy_bits for r in c]
    assert block_entropy(cache.get_or_compute(CouplingPoint(1.0, 1.2), 30)) == a[0].entropy_bits

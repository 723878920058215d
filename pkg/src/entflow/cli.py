"""Command-line interface.

Exit codes: 0 success, 1 usage or configuration error, 2 some grid points
failed, 3 a majorization verdict failed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import edsolver, rgscan, spectra
from .errors import CapacityExceeded, EntflowError
from .freefermion import QuadratureSpec, saturation_block_size
from .model import CouplingPoint, flow_distance, same_branch

log = logging.getLogger("entflow")

EXIT_OK, EXIT_USAGE, EXIT_PARTIAL, EXIT_VERDICT = 0, 1, 2, 3
LN2 = math.log(2.0)

CONFIG_KEYS = {
    "quad_start": int,
    "quad_cap": int,
    "quad_tol": float,
    "eps_acc": float,
    "k": int,
    "L_cap": int,
    "ed_cap": int,
    "cache_dir": str,
    "format": str,
    "seed": int,
    "workers": int,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --------------------------------------------------------------------------- helpers


def parse_float_list(text: str) -> list[float]:
    """Comma-separated reals, or ``start:stop:step`` with ``stop`` inclusive."""
    text = text.strip()
    if not text:
        return []
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise argparse.ArgumentTypeError(f"range must be start:stop:step, got {text!r}")
        start, stop, step = (float(x) for x in parts)
        return frange(start, stop, step)
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def parse_int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def frange(start: float, stop: float, step: float) -> list[float]:
    if step <= 0:
        raise argparse.ArgumentTypeError("step must be positive")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + i * step, 12) for i in range(max(n, 0))]


def read_config(path: str | Path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    cfg = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in CONFIG_KEYS:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            cfg[key] = CONFIG_KEYS[key](value)
        except ValueError:
            raise UsageError(f"{path}:{lineno}: bad value for {key}: {value!r}") from None
    return cfg


def _fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    if value is None:
        return ""
    return value


def write_table(rows: list[dict], columns: Sequence[str], args) -> None:
    if args.format == "json":
        payload = [{c: _json_value(r.get(c)) for c in columns} for r in rows]
        text = json.dumps(payload, indent=1) + "\n"
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in columns])
        text = buf.getvalue()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def _json_value(v):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, np.integer):
        return int(v)
    return v


def _entropy_out(value: float, args) -> float:
    return value * LN2 if args.nats else value


def _quad(args) -> QuadratureSpec:
    return QuadratureSpec(min(args.quad_start, args.quad_cap), args.quad_cap, args.quad_tol)


def _cache(args):
    if args.no_cache:
        return None
    directory = Path(args.cache_dir) if args.cache_dir else rgscan.default_cache_dir()
    return rgscan.ModeCache(directory)


def _verdict_row(v: spectra.MajorizationVerdict) -> dict:
    return {
        "holds": v.holds,
        "worst_margin": v.worst_margin,
        "worst_index": v.worst_index,
        "slack": v.slack_used,
    }


# --------------------------------------------------------------------------- commands


def cmd_scan_lambda(args) -> int:
    grid = frange(args.lambda_min, args.lambda_max, args.step)
    alphas = args.renyi or []
    records = rgscan.scan_lambda(
        args.gamma, grid, args.L, _quad(args), _cache(args), args.sat_tol, alphas, args.workers
    )
    columns = ["gamma", "lambda", "L", "entropy_bits", "saturated"]
    columns += [f"renyi_{a:g}" for a in alphas] + ["error"]
    rows = []
    for rec in records:
        row = {
            "gamma": rec.point.gamma,
            "lambda": rec.point.lam,
            "L": rec.L,
            "entropy_bits": _entropy_out(rec.entropy_bits, args),
            "saturated": rec.saturated,
            "error": rec.error,
        }
        for a in alphas:
            row[f"renyi_{a:g}"] = _entropy_out(rec.renyi[a], args) if rec.renyi else math.nan
        rows.append(row)
    write_table(rows, columns, args)
    return EXIT_PARTIAL if any(not r.ok for r in records) else EXIT_OK


def cmd_scan_critical(args) -> int:
    point = CouplingPoint(args.gamma, args.lam)
    cache, quad = _cache(args), _quad(args)
    rows = []
    for L in args.L_list:
        modes = rgscan.cache_get_or_compute(point, L, quad, cache)
        rows.append({"gamma": args.gamma, "lambda": args.lam, "L": L,
                     "entropy_bits": _entropy_out(spectra.block_entropy(modes), args)})
    fit = rgscan.fit_critical_blocksize_scaling(args.gamma, args.lam, args.L_list, quad, cache)
    print(f"slope={fit.slope:.6f} intercept={fit.intercept:.6f} "
          f"residual_rms={fit.residual_rms:.3g} points={fit.points_used}", file=sys.stderr)
    if args.emit == "fit":
        write_table([vars_fit(fit, gamma=args.gamma, **{"lambda": args.lam})],
                    ["gamma", "lambda", "slope", "intercept", "residual_rms", "points_used"], args)
    else:
        write_table(rows, ["gamma", "lambda", "L", "entropy_bits"], args)
    return EXIT_OK


def vars_fit(fit: rgscan.FitResult, **extra) -> dict:
    return {**extra, "slope": fit.slope, "intercept": fit.intercept,
            "residual_rms": fit.residual_rms, "points_used": fit.points_used}


def cmd_scan_offcritical(args) -> int:
    sides = ["above", "below"] if args.side == "both" else [args.side]
    cache, quad = _cache(args), _quad(args)
    rows, fits = [], []
    for side in sides:
        pts = rgscan.offcritical_entropies(args.gamma, args.delta, side, quad, args.sat_tol, args.L_cap, cache)
        for p in pts:
            rows.append({"side": side, "delta": flow_distance(p.point), "lambda": p.point.lam,
                         "L": p.L, "entropy_bits": _entropy_out(p.entropy_bits, args),
                         "saturated": p.saturated})
        used = [p for p in pts if p.saturated]
        try:
            fit = rgscan.fit_log2([flow_distance(p.point) for p in used], [p.entropy_bits for p in used])
        except EntflowError as exc:
            print(f"{side}: {exc}", file=sys.stderr)
            continue
        fits.append(vars_fit(fit, side=side, gamma=args.gamma))
        print(f"{side}: slope={fit.slope:.6f} intercept={fit.intercept:.6f} "
              f"points={fit.points_used}", file=sys.stderr)
    if args.emit == "fit":
        write_table(fits, ["side", "gamma", "slope", "intercept", "residual_rms", "points_used"], args)
    else:
        write_table(rows, ["side", "delta", "lambda", "L", "entropy_bits", "saturated"], args)
    return EXIT_OK if len(fits) == len(sides) else EXIT_PARTIAL


def cmd_majorize_flow(args) -> int:
    lams = args.lambda_list
    if not same_branch(lams):
        raise UsageError("--lambda-list must stay on one side of the critical field lambda = 1")
    dists = [abs(1 - x) for x in lams]
    if any(b < a for a, b in zip(dists, dists[1:])):
        raise UsageError("--lambda-list must be ordered along the flow (growing |1 - lambda|)")
    cache, quad = _cache(args), _quad(args)
    modes = [rgscan.cache_get_or_compute(CouplingPoint(args.gamma, x), args.L, quad, cache) for x in lams]
    kinds = ["modewise", "full"] if args.mode == "both" else [args.mode]
    rows = []
    full = [spectra.top_k_product_spectrum(m, args.k, args.eps_acc) for m in modes] if "full" in kinds else None
    for i in range(len(lams) - 1):
        for kind in kinds:
            if kind == "modewise":
                v = spectra.modewise_majorize(modes[i], modes[i + 1])
            else:
                v = spectra.majorize(full[i], full[i + 1])
            rows.append({"gamma": args.gamma, "lambda": lams[i], "lambda_next": lams[i + 1],
                         "L": args.L, "mode": kind, **_verdict_row(v)})
    write_table(rows, ["gamma", "lambda", "lambda_next", "L", "mode", "holds",
                       "worst_margin", "worst_index", "slack"], args)
    return EXIT_OK if all(r["holds"] for r in rows) else EXIT_VERDICT


def cmd_majorize_blocksize(args) -> int:
    point = CouplingPoint(args.gamma, args.lam)
    cache, quad = _cache(args), _quad(args)
    rows = []
    for L in args.L:
        small = rgscan.cache_get_or_compute(point, L, quad, cache)
        large = rgscan.cache_get_or_compute(point, L + 2, quad, cache)
        v = spectra.blocksize_majorize(small, large, args.k, args.eps_acc)
        rows.append({"gamma": args.gamma, "lambda": args.lam, "L": L, "L_next": L + 2,
                     "entropy_L": _entropy_out(spectra.block_entropy(small), args),
                     "entropy_L_next": _entropy_out(spectra.block_entropy(large), args),
                     **_verdict_row(v)})
    write_table(rows, ["gamma", "lambda", "L", "L_next", "entropy_L", "entropy_L_next",
                       "holds", "worst_margin", "worst_index", "slack"], args)
    return EXIT_OK if all(r["holds"] for r in rows) else EXIT_VERDICT


def cmd_surface(args) -> int:
    points = [CouplingPoint(g, x) for g in args.gamma_grid for x in args.lambda_grid]
    records = rgscan.scan_points(points, args.L, _quad(args), _cache(args), args.sat_tol,
                                 workers=args.workers)
    rows = [{"gamma": r.point.gamma, "lambda": r.point.lam, "L": r.L,
             "entropy_bits": _entropy_out(r.entropy_bits, args),
             "circle_residual": abs(r.point.gamma**2 + r.point.lam**2 - 1),
             "error": r.error} for r in records]
    write_table(rows, ["gamma", "lambda", "L", "entropy_bits", "circle_residual", "error"], args)
    return EXIT_PARTIAL if any(not r.ok for r in records) else EXIT_OK


def cmd_ed(args) -> int:
    lams = args.lambda_list if args.lambda_list is not None else [args.lam]
    if not lams or any(x is None for x in lams):
        raise UsageError("give --lambda or --lambda-list")
    if args.N > args.ed_cap:
        raise CapacityExceeded(f"N = {args.N} exceeds the exact-diagonalization cap {args.ed_cap}")
    if not 1 <= args.L_block < args.N:
        raise UsageError("--L-block must satisfy 1 <= L < N")
    start = (args.N - args.L_block) // 2 if args.centered else 0
    rows, prev = [], None
    failed = False
    for lam in lams:
        spec = edsolver.FiniteChainSpec(args.N, CouplingPoint(args.gamma, lam, args.epsilon),
                                        boundary=args.boundary, cap=args.ed_cap)
        gs = edsolver.ground_state(spec)
        sp = edsolver.reduced_spectrum(gs, args.L_block, start, args.eps_acc)
        row = {"N": args.N, "gamma": args.gamma, "lambda": lam, "epsilon": args.epsilon,
               "L_block": args.L_block, "energy": gs.energy,
               "entropy_bits": _entropy_out(spectra.shannon_entropy(sp.probs), args),
               "top_spectrum": ";".join(format(float(p), ".17g") for p in sp.probs[: args.top])}
        if prev is not None:
            v = spectra.majorize(prev, sp)
            row.update(majorizes_previous=v.holds, worst_margin=v.worst_margin)
            failed |= not v.holds
        rows.append(row)
        prev = sp
    write_table(rows, ["N", "gamma", "lambda", "epsilon", "L_block", "energy", "entropy_bits",
                       "top_spectrum", "majorizes_previous", "worst_margin"], args)
    return EXIT_VERDICT if failed else EXIT_OK


def cmd_lemma_test(args) -> int:
    rng = np.random.default_rng(args.seed)
    failures, worst = 0, math.inf
    for _ in range(args.trials):
        nx, ny = rng.integers(1, args.max_len + 1, size=2)
        x, xp = spectra.random_majorized_pair(rng, int(nx))
        y, yp = spectra.random_majorized_pair(rng, int(ny))
        v = spectra.lemma_product_majorization(x, xp, y, yp)
        failures += not v.holds
        worst = min(worst, v.worst_margin)
    write_table([{"trials": args.trials, "max_len": args.max_len, "seed": args.seed,
                  "failures": failures, "worst_margin": worst}],
                ["trials", "max_len", "seed", "failures", "worst_margin"], args)
    return EXIT_VERDICT if failures else EXIT_OK


def cmd_saturation(args) -> int:
    point = CouplingPoint(args.gamma, args.lam)
    L = saturation_block_size(point, _quad(args), args.sat_tol, args.L_cap)
    write_table([{"gamma": args.gamma, "lambda": args.lam, "tol": args.sat_tol, "L": L}],
                ["gamma", "lambda", "tol", "L"], args)
    return EXIT_OK


def cmd_cache(args) -> int:
    cache = rgscan.ModeCache(Path(args.cache_dir) if args.cache_dir else rgscan.default_cache_dir())
    if args.action == "clear":
        n = cache.clear()
        print(f"removed {n} entries from {cache.directory}", file=sys.stderr)
        return EXIT_OK
    write_table(cache.entries(), ["key", "L", "gamma", "lam", "epsilon", "status"], args)
    return EXIT_OK


# --------------------------------------------------------------------------- parser


def build_parser(config: dict | None = None) -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    g = common.add_argument_group("common options")
    g.add_argument("--config", help="flat key = value file; flags override it")
    g.add_argument("--format", choices=["csv", "json"], default="csv")
    g.add_argument("--out", help="write the table here instead of standard output")
    g.add_argument("--nats", action="store_true", help="report entropies in nats")
    g.add_argument("--quad-start", dest="quad_start", type=int, default=256)
    g.add_argument("--quad-cap", dest="quad_cap", type=int, default=2**20)
    g.add_argument("--quad-tol", dest="quad_tol", type=float, default=1e-12)
    g.add_argument("--eps-acc", dest="eps_acc", type=float, default=spectra.EPS_ACC)
    g.add_argument("--k", type=int, default=spectra.DEFAULT_K, help="spectrum depth")
    g.add_argument("--L-cap", dest="L_cap", type=int, default=1024)
    g.add_argument("--ed-cap", dest="ed_cap", type=int, default=edsolver.DEFAULT_CAP)
    g.add_argument("--sat-tol", dest="sat_tol", type=float, default=1e-8)
    g.add_argument("--cache-dir", dest="cache_dir", default=None)
    g.add_argument("--no-cache", dest="no_cache", action="store_true")
    g.add_argument("--workers", type=int, default=1)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("-v", "--verbose", action="store_true")
    if config:
        common.set_defaults(**config)

    parser = _Parser(prog="entflow", description="Entanglement spectra of the XY chain along RG flows.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("scan-lambda", parents=[common], help="entropy as a function of lambda")
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--lambda-min", dest="lambda_min", type=float, required=True)
    p.add_argument("--lambda-max", dest="lambda_max", type=float, required=True)
    p.add_argument("--step", type=float, required=True)
    p.add_argument("--L", type=int, required=True)
    p.add_argument("--renyi", type=parse_float_list, default=None, help="e.g. 0.5,2,inf")
    p.set_defaults(func=cmd_scan_lambda)

    p = sub.add_parser("scan-critical", parents=[common], help="S_L versus log2 L fit")
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--L-list", dest="L_list", type=parse_int_list, default=[16, 32, 64, 128, 256])
    p.add_argument("--emit", choices=["points", "fit"], default="points")
    p.set_defaults(func=cmd_scan_critical)

    p = sub.add_parser("scan-offcritical", parents=[common], help="saturated S versus log2|1-lambda|")
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--delta", type=parse_float_list, default=[0.08, 0.04, 0.02, 0.01])
    p.add_argument("--side", choices=["above", "below", "both"], default="both")
    p.add_argument("--emit", choices=["points", "fit"], default="points")
    p.set_defaults(func=cmd_scan_offcritical)

    p = sub.add_parser("majorize-flow", parents=[common], help="majorization along a lambda sequence")
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--lambda-list", dest="lambda_list", type=parse_float_list, required=True)
    p.add_argument("--L", type=int, required=True)
    p.add_argument("--mode", choices=["modewise", "full", "both"], default="both")
    p.set_defaults(func=cmd_majorize_flow)

    p = sub.add_parser("majorize-blocksize", parents=[common], help="p_(L+2) majorized by p_L")
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--L", type=parse_int_list, required=True, help="one or more block sizes")
    p.set_defaults(func=cmd_majorize_blocksize)

    p = sub.add_parser("surface", parents=[common], help="S_L(gamma, lambda) grid")
    p.add_argument("--gamma-grid", dest="gamma_grid", type=parse_float_list, required=True)
    p.add_argument("--lambda-grid", dest="lambda_grid", type=parse_float_list, required=True)
    p.add_argument("--L", type=int, required=True)
    p.set_defaults(func=cmd_surface)

    p = sub.add_parser("ed", parents=[common], help="exact diagonalization of a finite chain")
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--gamma", type=float, default=1.0)
    grp = p.add_mutually_exclusive_group(required=True)
    grp.add_argument("--lambda", dest="lam", type=float)
    grp.add_argument("--lambda-list", dest="lambda_list", type=parse_float_list)
    p.add_argument("--epsilon", type=float, default=0.0)
    p.add_argument("--L-block", dest="L_block", type=int, required=True)
    p.add_argument("--boundary", choices=["open", "periodic"], default="open")
    p.add_argument("--centered", action="store_true", help="place the block in the middle of the chain")
    p.add_argument("--top", type=int, default=4, help="number of spectrum entries to print")
    p.set_defaults(func=cmd_ed)

    p = sub.add_parser("lemma-test", parents=[common], help="random check of product majorization")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--max-len", dest="max_len", type=int, default=8)
    p.set_defaults(func=cmd_lemma_test)

    p = sub.add_parser("saturation", parents=[common], help="saturation block size of a coupling")
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.set_defaults(func=cmd_saturation)

    p = sub.add_parser("cache", parents=[common], help="inspect or clear the mode cache")
    p.add_argument("action", choices=["inspect", "clear"])
    p.set_defaults(func=cmd_cache)
    return parser


def _config_defaults(argv: Sequence[str]) -> dict:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    return read_config(known.config) if known.config else {}


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        parser = build_parser(_config_defaults(argv))
    except (UsageError, OSError) as exc:
        print(f"entflow: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.format not in ("csv", "json"):
        print(f"entflow: error: unknown format {args.format!r}", file=sys.stderr)
        return EXIT_USAGE
    if not 0 < args.eps_acc < 1 or min(args.quad_start, args.quad_cap, args.k, args.L_cap, args.ed_cap) < 1:
        print("entflow: error: caps must be positive and eps_acc in (0, 1)", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, CapacityExceeded) as exc:
        print(f"entflow: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (EntflowError, ValueError) as exc:
        print(f"entflow: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end: ``survscan {simulate,fit,cv,bootstrap,bench}``.

Results are JSON documents with a ``result`` body and a ``manifest``
(command, resolved configuration, dataset fingerprint, version, timings).
Only the manifest's ``timings`` change between identical runs.

Exit codes: 0 success, 1 runtime error, 2 fit did not converge,
64 usage error, 65 data error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import statistics
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .ccd import FitConfig, FitResult, PenaltySpec, fit
from .crossval import CVConfig, bootstrap_interval, cross_validate
from .dataset import (SurvivalDataset, load_dense_csv, load_sparse_coo, write_dense_csv,
                      write_sparse_coo)
from .errors import DatasetError, DegenerateCurveError, SurvScanError
from .scan_core import DEFAULT_CHUNK_SIZE, default_workers
from .simgen import SimConfig, simulate_cox, simulate_finegray

SCHEMA = "survscan.result/1"

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NOT_CONVERGED = 2
EXIT_USAGE = 64
EXIT_DATA = 65

log = logging.getLogger("survscan")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> list[int]:
    try:
        return [int(float(v)) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of integers, got {text!r}")


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}")


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _add_data_args(p):
    g = p.add_argument_group("input data")
    g.add_argument("--data", help="dense CSV with header (time, status, covariates...)")
    g.add_argument("--obs", help="sparse format: observations file (row_id,time,status)")
    g.add_argument("--matrix", help="sparse format: triplet file (row_id,col_id,value)")


def _add_fit_args(p):
    p.add_argument("--model", choices=["cox", "finegray"], default="cox")
    p.add_argument("--penalty", choices=["none", "l1", "l2"], default="none")
    p.add_argument("--strength", type=float, default=0.0, help="l1 strength or l2 prior variance")
    p.add_argument("--exempt", type=_int_list, default=[], help="comma-separated unpenalized columns")
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--max-cycles", type=int, default=1000)
    p.add_argument("--threads", type=_positive_int, default=None,
                   help="scan worker threads (default: $SURVSCAN_THREADS or CPU count)")
    p.add_argument("--chunk-size", type=_positive_int, default=DEFAULT_CHUNK_SIZE)
    p.add_argument("--out", help="result file (default: stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="survscan", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"survscan {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fit", help="fit one penalized model")
    _add_data_args(p)
    _add_fit_args(p)

    p = sub.add_parser("cv", help="cross-validate the penalty strength")
    _add_data_args(p)
    _add_fit_args(p)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--grid", default="auto", help="comma-separated values or 'auto'")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--replicate-workers", type=_positive_int, default=1)

    p = sub.add_parser("bootstrap", help="percentile interval for one coefficient")
    _add_data_args(p)
    _add_fit_args(p)
    p.add_argument("--coef", type=int, required=True)
    p.add_argument("--B", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("simulate", help="write a synthetic dataset")
    p.add_argument("--model", choices=["cox", "finegray"], default="cox")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--p", type=int, required=True)
    p.add_argument("--density", type=float, default=0.05)
    p.add_argument("--beta-sparsity", type=float, default=0.80)
    p.add_argument("--p-mix", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--censoring-quantile", type=float, default=None)
    p.add_argument("--format", choices=["coo", "dense"], default="coo")
    p.add_argument("--out", required=True, help="output prefix")

    p = sub.add_parser("bench", help="time fits over a grid of sizes and thread counts")
    p.add_argument("--sizes", type=_int_list, default=[100000, 1000000])
    p.add_argument("--p", type=int, default=100)
    p.add_argument("--density", type=float, default=0.05)
    p.add_argument("--model", choices=["cox", "finegray"], default="cox")
    p.add_argument("--threads", type=_int_list, default=None)
    p.add_argument("--reps", type=_positive_int, default=3)
    p.add_argument("--penalty", choices=["none", "l1", "l2"], default="l1")
    p.add_argument("--strength", type=float, default=2 ** 0.5)
    p.add_argument("--max-cycles", type=int, default=1000)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--chunk-size", type=_positive_int, default=DEFAULT_CHUNK_SIZE)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="TSV output (default: stdout)")
    return parser


# -- helpers -----------------------------------------------------------------------


def load_data(args) -> SurvivalDataset:
    if args.data and (args.obs or args.matrix):
        raise UsageError("use either --data or --obs/--matrix, not both")
    if args.data:
        return load_dense_csv(args.data)
    if args.obs and args.matrix:
        return load_sparse_coo(args.obs, args.matrix)
    raise UsageError("input required: --data FILE or --obs FILE --matrix FILE")


def penalty_from(args) -> PenaltySpec:
    try:
        return PenaltySpec(args.penalty, args.strength, frozenset(args.exempt))
    except ValueError as exc:
        raise UsageError(str(exc))


def fit_config_from(args) -> FitConfig:
    try:
        return FitConfig(tolerance=args.tol, max_cycles=args.max_cycles, chunk_size=args.chunk_size,
                         threads=args.threads)
    except ValueError as exc:
        raise UsageError(str(exc))


def fit_body(res: FitResult, names) -> dict:
    nz = np.flatnonzero(res.beta)
    return {
        "p": int(res.beta.size),
        "beta": {str(int(j)): float(res.beta[j]) for j in nz},
        "beta_names": {str(int(j)): names[j] for j in nz},
        "objective": float(res.objective),
        "log_likelihood": float(res.log_likelihood),
        "cycles": int(res.cycles),
        "converged": bool(res.converged),
        "nonzero_count": res.nonzero_count,
        "skipped_steps": int(res.skipped_steps),
        "monotone_violations": int(res.monotone_violations),
        "objective_trace": [float(v) for v in res.objective_trace],
    }


def fit_timings(res: FitResult) -> dict:
    return {"fit_seconds": res.wall_time, "gradient_hessian_seconds": res.gradient_time}


def resolved_config(args) -> dict:
    skip = {"func", "verbose", "out"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def document(command: str, body: dict, args, dataset: SurvivalDataset | None, timings: dict) -> dict:
    manifest = {
        "command": command,
        "config": resolved_config(args),
        "software": {"name": "survscan", "version": __version__},
        "dataset": dataset.fingerprint() if dataset is not None else None,
        "timings": timings,
    }
    return {"schema": SCHEMA, "command": command, "result": body, "manifest": manifest}


def emit(doc: dict, out: str | None) -> None:
    text = json.dumps(doc, indent=2, sort_keys=False) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def read_result(path) -> dict:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("schema") != SCHEMA:
        raise ValueError(f"{path}: unknown result schema {doc.get('schema')!r}")
    for key in ("command", "result", "manifest"):
        if key not in doc:
            raise ValueError(f"{path}: missing {key!r}")
    return doc


def beta_from_body(body: dict) -> np.ndarray:
    beta = np.zeros(body["p"])
    for k, v in body["beta"].items():
        beta[int(k)] = v
    return beta


# -- commands ----------------------------------------------------------------------


def cmd_fit(args) -> int:
    t0 = time.perf_counter()
    ds = load_data(args)
    t_load = time.perf_counter() - t0
    res = fit(ds, args.model, penalty_from(args), fit_config_from(args))
    timings = {"load_seconds": t_load, **fit_timings(res)}
    emit(document("fit", fit_body(res, ds.names), args, ds, timings), args.out)
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def cmd_cv(args) -> int:
    t0 = time.perf_counter()
    ds = load_data(args)
    t_load = time.perf_counter() - t0
    if args.penalty not in ("l1", "l2"):
        raise UsageError("cv needs --penalty l1 or l2")
    grid = None if args.grid.strip().lower() == "auto" else _float_list(args.grid)
    try:
        cvc = CVConfig(folds=args.folds, repetitions=args.reps, grid=grid, seed=args.seed,
                       parallel_replicates=args.replicate_workers)
    except ValueError as exc:
        raise UsageError(str(exc))
    t1 = time.perf_counter()
    res = cross_validate(ds, args.model, args.penalty, cvc, fit_config_from(args), frozenset(args.exempt))
    body = {
        "penalty": args.penalty,
        "curve": [{"value": float(v), "mean_loglik": float(m), "sd_loglik": float(s), "evaluations": int(c)}
                  for v, m, s, c in zip(res.grid, res.mean_loglik, res.sd_loglik, res.n_evaluations)],
        "selected_value": res.selected_value,
        "failed_replicates": res.failed_replicates,
        "final_fit": fit_body(res.final_fit, ds.names),
    }
    timings = {"load_seconds": t_load, "cv_seconds": time.perf_counter() - t1}
    emit(document("cv", body, args, ds, timings), args.out)
    return EXIT_OK if res.final_fit.converged else EXIT_NOT_CONVERGED


def cmd_bootstrap(args) -> int:
    ds = load_data(args)
    if not 0 <= args.coef < ds.p:
        raise UsageError(f"--coef {args.coef} out of range for {ds.p} columns")
    t1 = time.perf_counter()
    lo, hi = bootstrap_interval(ds, args.model, penalty_from(args), fit_config_from(args),
                                args.coef, args.B, args.seed)
    body = {"coefficient": args.coef, "name": ds.names[args.coef], "B": args.B,
            "level": 0.95, "lower": lo, "upper": hi}
    emit(document("bootstrap", body, args, ds, {"bootstrap_seconds": time.perf_counter() - t1}), args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    try:
        cfg = SimConfig(n=args.n, p=args.p, density=args.density, beta_sparsity=args.beta_sparsity,
                        p_mix=args.p_mix, seed=args.seed, censoring_quantile=args.censoring_quantile)
    except ValueError as exc:
        raise UsageError(str(exc))
    if args.model == "cox":
        ds, beta = simulate_cox(cfg)
        truth = {"beta": beta.tolist()}
    else:
        ds, b1, b2 = simulate_finegray(cfg)
        truth = {"beta1": b1.tolist(), "beta2": b2.tolist()}
    prefix = args.out
    files = {}
    if args.format == "coo":
        files = {"obs": f"{prefix}.obs.csv", "matrix": f"{prefix}.matrix.csv"}
        write_sparse_coo(ds, files["obs"], files["matrix"])
    else:
        files = {"data": f"{prefix}.csv"}
        write_dense_csv(ds, files["data"])
    files["truth"] = f"{prefix}.truth.json"
    sidecar = {"schema": "survscan.truth/1", "model": args.model, "config": resolved_config(args), **truth}
    Path(files["truth"]).write_text(json.dumps(sidecar, indent=2) + "\n", encoding="utf-8")
    log.info("wrote %s", ", ".join(files.values()))
    return EXIT_OK


BENCH_COLUMNS = ["model", "n", "p", "threads", "rep", "total_seconds", "gradient_hessian_seconds",
                 "cycles", "nonzero_count", "speedup"]


def cmd_bench(args) -> int:
    threads = sorted(set(args.threads))
    pen = PenaltySpec(args.penalty, args.strength if args.penalty != "none" else 0.0)
    rows = []
    for n in args.sizes:
        cfg = SimConfig(n=n, p=args.p, density=args.density, seed=args.seed)
        ds = simulate_cox(cfg)[0] if args.model == "cox" else simulate_finegray(cfg)[0]
        base = None
        for th in threads:
            fc = FitConfig(tolerance=args.tol, max_cycles=args.max_cycles, chunk_size=args.chunk_size,
                           threads=th)
            fit(ds, args.model, pen, fc)  # warm-up: JIT compilation and caches stay out of the timings
            times = []
            for rep in range(args.reps):
                res = fit(ds, args.model, pen, fc)
                times.append((res.wall_time, res.gradient_time))
                rows.append([args.model, n, args.p, th, rep, f"{res.wall_time:.6f}",
                             f"{res.gradient_time:.6f}", res.cycles, res.nonzero_count, ""])
            med = statistics.median(t for t, _ in times)
            base = med if base is None else base
            # speedup relative to the smallest thread count at this size
            rows.append([args.model, n, args.p, th, "median", f"{med:.6f}",
                         f"{statistics.median(g for _, g in times):.6f}", res.cycles, res.nonzero_count,
                         f"{base / med:.3f}"])
    fh = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(BENCH_COLUMNS)
        w.writerows(rows)
    finally:
        if args.out:
            fh.close()
    return EXIT_OK


COMMANDS = {"fit": cmd_fit, "cv": cmd_cv, "bootstrap": cmd_bootstrap, "simulate": cmd_simulate,
            "bench": cmd_bench}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command in ("fit", "cv", "bootstrap") and args.threads is None:
        args.threads = default_workers()
    elif args.command == "bench" and args.threads is None:
        args.threads = [1, default_workers()]
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"survscan {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DatasetError, DegenerateCurveError, FileNotFoundError) as exc:
        print(f"survscan {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SurvScanError as exc:
        print(f"survscan {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

"""Command-line driver: run, validate, ingest, cache-spectrum, report."""

from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import resource
import sys
import time
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path

import numpy as np

from .config import RunConfig, hilbert_dimension, load_config, memory_estimate
from .estimators import f_e, f_hat_d
from .experiments import (CACHE_ENV, ArtifactWriter, SetupError, cache_path, ideal_distribution, load_amplitudes,
                          model_params, prepare, product_state, run_experiment)
from .hamiltonians import build_hamiltonian
from .io import (OutputLock, OutputLockedError, SnapshotError, file_digest, read_csv, read_snapshot, write_csv,
                 write_json_atomic)
from .lattice import enumerate_basis
from .spectral import diagonalize, load_spectrum, save_spectrum, time_averaged_distribution

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2
log = logging.getLogger("quenchbench")


def _version(name: str) -> str:
    try:
        return metadata.version(name)
    except metadata.PackageNotFoundError:
        return "unknown"


def _versions() -> dict:
    return {"quenchbench": _version("quenchbench"), "numpy": np.__version__, "scipy": _version("scipy"),
            "pydantic": _version("pydantic"), "python": platform.python_version()}


def _peak_memory_mb() -> float:
    return resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1024.0


def _report_problems(problems) -> None:
    print(f"{len(problems)} problem(s):", file=sys.stderr)
    for p in problems:
        print(f"  - {p}", file=sys.stderr)


def _load(path, seed_override=None) -> tuple[RunConfig | None, list[str]]:
    cfg, problems = load_config(path, seed_override)
    if problems:
        _report_problems(problems)
    return cfg, problems


def cmd_validate(args) -> int:
    cfg, problems = load_config(args.config, args.seed_override)
    report = {"config": str(args.config), "problems": problems}
    if cfg is not None:
        report["config_hash"] = cfg.config_hash()
        if cfg.model is not None:
            D = hilbert_dimension(cfg.model.lattice())
            report["dimension"] = D
            report["overlap_table_bytes"] = memory_estimate(D)
            report["memory_budget_bytes"] = int(cfg.memory_gb * 2**30)
    print(json.dumps(report, indent=2))
    return EXIT_VALIDATION if problems else EXIT_OK


def cmd_run(args) -> int:
    cfg, problems = _load(args.config, args.seed_override)
    if problems:
        return EXIT_VALIDATION
    threads = 1 if args.deterministic else args.threads
    base_dir = Path(args.config).resolve().parent
    started = time.perf_counter()
    try:
        setup = prepare(cfg, base_dir)
    except SetupError as exc:
        _report_problems([str(exc)])
        return EXIT_VALIDATION
    except Exception as exc:
        print(f"setup failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    writer = ArtifactWriter(out_dir, cfg.config_hash())
    status, error = "complete", None
    try:
        with OutputLock(out_dir):
            try:
                write_json_atomic(out_dir / "config.resolved.json", cfg.model_dump())
                writer.files.append(out_dir / "config.resolved.json")
                run_experiment(cfg, setup, writer, threads)
            except Exception as exc:
                status, error = "failed", f"{type(exc).__name__}: {exc}"
                log.exception("run aborted")
            manifest = {
                "status": status,
                "error": error,
                "experiment": cfg.experiment,
                "config_file": str(Path(args.config).resolve()),
                "config_hash": cfg.config_hash(),
                "versions": _versions(),
                "threads": threads,
                "deterministic": bool(args.deterministic),
                "outputs": [{"file": p.name, "sha256": file_digest(p)} for p in writer.files],
                "wall_clock_s": time.perf_counter() - started,
                "peak_memory_mb": _peak_memory_mb(),
                "finished": datetime.now(timezone.utc).isoformat(),
            }
            write_json_atomic(out_dir / "manifest.json", manifest)
    except OutputLockedError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_RUNTIME
    if status != "complete":
        print(f"run failed: {error} (partial outputs listed in {out_dir / 'manifest.json'})", file=sys.stderr)
        return EXIT_RUNTIME
    print(json.dumps({"status": status, "outputs": [str(p) for p in writer.files]}, indent=2))
    return EXIT_OK


def cmd_cache_spectrum(args) -> int:
    cfg, problems = _load(args.config)
    if problems:
        return EXIT_VALIDATION
    if cfg.model is None:
        _report_problems(["model: cache-spectrum needs a model block"])
        return EXIT_VALIDATION
    target_dir = args.out_dir or os.environ.get(CACHE_ENV)
    if not target_dir:
        _report_problems([f"no cache directory: pass --out-dir or set {CACHE_ENV}"])
        return EXIT_VALIDATION
    try:
        basis = enumerate_basis(cfg.model.lattice())
        sd = diagonalize(build_hamiltonian(basis, model_params(cfg.model)))
        Path(target_dir).mkdir(parents=True, exist_ok=True)
        path = cache_path(cfg.model.model_hash(), target_dir)
        save_spectrum(path, sd, cfg.model.model_hash())
    except Exception as exc:
        print(f"cache-spectrum failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(json.dumps({"cache": str(path), "model_hash": cfg.model.model_hash(), "dimension": sd.dimension}))
    return EXIT_OK


def ingest(snapshot, cfg: RunConfig, cache_file, base_dir: Path) -> dict:
    """F_hat_d and F_e from a snapshot file against a cached reference spectrum."""
    model_hash = cfg.model.model_hash()
    basis = enumerate_basis(cfg.model.lattice())
    record, header = read_snapshot(snapshot, basis)
    if header["model_hash"] != model_hash:
        raise SnapshotError(f"{snapshot}: recorded for model {header['model_hash']}, config describes {model_hash}")
    sd, _ = load_spectrum(cache_file, model_hash)
    if sd.dimension != basis.dimension:
        raise SnapshotError(f"{cache_file}: spectrum dimension {sd.dimension} does not match basis {basis.dimension}")
    s = cfg.initial_state
    if s is None or s.gibbs is not None:
        raise SetupError("ingest needs a pure initial_state (product or amplitudes_file)")
    if s.product is not None:
        psi0 = product_state(basis, s.product)
    else:
        path = Path(s.amplitudes_file)
        psi0 = load_amplitudes(path if path.is_absolute() else base_dir / path, basis.dimension)
    t = header["time"]
    p = ideal_distribution(sd, psi0, t)
    p_avg = time_averaged_distribution(sd, psi0)
    rep = f_hat_d(record, p, p_avg, time=t)
    q_hat = np.bincount(record.indices, minlength=basis.dimension) / record.size
    try:
        fe = f_e(q_hat, p, p_avg)
    except ValueError:
        fe = float("nan")
    return {"time": t, "M": rep.samples, "F_hat_d": rep.value, "stat_err": rep.stat_err, "F_e": fe,
            "model_hash": model_hash}


def cmd_ingest(args) -> int:
    cfg, problems = _load(args.config)
    if problems:
        return EXIT_VALIDATION
    if cfg.model is None:
        _report_problems(["model: ingest needs a model block"])
        return EXIT_VALIDATION
    cache_file = args.cache or cache_path(cfg.model.model_hash())
    if cache_file is None or not Path(cache_file).exists():
        _report_problems([f"reference cache {cache_file} not found; run cache-spectrum first"])
        return EXIT_VALIDATION
    try:
        result = ingest(args.snapshot, cfg, cache_file, Path(args.config).resolve().parent)
    except (SnapshotError, SetupError, ValueError, OSError) as exc:
        _report_problems([str(exc)])
        return EXIT_VALIDATION
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        cols = ["time", "M", "F_hat_d", "stat_err", "F_e"]
        write_csv(out / "ingest.csv", cols, [[result[c] for c in cols]], cfg.config_hash())
    print(json.dumps(result, indent=2))
    return EXIT_OK


def summarize(paths) -> tuple[list[str], list[list], str]:
    """One row per numeric column of every CSV: file, column, n, mean, min, max."""
    rows, hashes = [], set()
    files = []
    for p in map(Path, paths):
        files += sorted(p.glob("*.csv")) if p.is_dir() else [p]
    for f in files:
        meta, header, body = read_csv(f)
        hashes.add(meta.get("config_hash", "none"))
        for j, name in enumerate(header):
            try:
                col = np.array([float(r[j]) for r in body])
            except ValueError:
                continue
            finite = col[np.isfinite(col)]
            if len(finite) == 0:
                rows.append([f.name, name, 0, np.nan, np.nan, np.nan])
            else:
                rows.append([f.name, name, len(finite), finite.mean(), finite.min(), finite.max()])
    return ["file", "column", "n", "mean", "min", "max"], rows, "+".join(sorted(hashes))


def cmd_report(args) -> int:
    try:
        columns, rows, hashes = summarize(args.inputs)
    except (OSError, ValueError) as exc:
        _report_problems([str(exc)])
        return EXIT_VALIDATION
    if args.out:
        write_csv(args.out, columns, rows, hashes)
    width = max([len(r[0]) for r in rows] + [4])
    print(f"{'file':<{width}}  {'column':<16} {'n':>6} {'mean':>12} {'min':>12} {'max':>12}")
    for f, c, n, mean, lo, hi in rows:
        print(f"{f:<{width}}  {c:<16} {n:>6} {mean:>12.5g} {lo:>12.5g} {hi:>12.5g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="quenchbench", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute an experiment config")
    run.add_argument("--config", required=True)
    run.add_argument("--out-dir", required=True)
    run.add_argument("--threads", type=int, default=1)
    run.add_argument("--deterministic", action="store_true", help="single-threaded execution")
    run.add_argument("--seed-override", type=int, help="replace every seed in the config")
    run.set_defaults(func=cmd_run)

    val = sub.add_parser("validate", help="check a config without running it")
    val.add_argument("--config", required=True)
    val.add_argument("--seed-override", type=int)
    val.set_defaults(func=cmd_validate)

    ing = sub.add_parser("ingest", help="estimate fidelity from a snapshot file")
    ing.add_argument("snapshot")
    ing.add_argument("--config", required=True)
    ing.add_argument("--cache", help=f"spectral cache file (default: ${CACHE_ENV}/<model_hash>.qbspec)")
    ing.add_argument("--out-dir")
    ing.set_defaults(func=cmd_ingest)

    cache = sub.add_parser("cache-spectrum", help="diagonalize the model and store the spectrum")
    cache.add_argument("--config", required=True)
    cache.add_argument("--out-dir", help=f"cache directory (default: ${CACHE_ENV})")
    cache.set_defaults(func=cmd_cache_spectrum)

    rep = sub.add_parser("report", help="summarize CSV outputs")
    rep.add_argument("inputs", nargs="+", help="CSV files or run directories")
    rep.add_argument("--out")
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "threads", 1) < 1:
        _report_problems(["--threads must be at least 1"])
        return EXIT_VALIDATION
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())

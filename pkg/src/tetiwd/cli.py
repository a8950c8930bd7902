"""Command-line front end.

Subcommands: simulate, fit, benchmark, evaluate, track, report.  Every
command writes into an output directory together with a copy of its resolved
configuration and the versions of the numerical libraries.  Exit codes: 0
success, 1 usage or configuration error, 2 data validation error, 3 runtime
failure.  ``TETIWD_THREADS`` caps BLAS/numba threads and the number of worker
processes used by ``benchmark``.
"""

from __future__ import annotations

import os
import sys

_THREADS = os.environ.get("TETIWD_THREADS")
if _THREADS:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMBA_NUM_THREADS"):
        os.environ.setdefault(_var, _THREADS)

import argparse
import csv
import json
import logging
import platform
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from . import experiment as ex
from .distance import DataValidationError, load_manifest, save_series, validate_negative_type, write_json, write_text
from .metrics import adjusted_rand_index
from .sampler import SamplerConfig, run_with_annealing
from .synth import PRESETS, ExperimentConfig, generate
from .tracking import (
    centroids_json,
    chain_centroids,
    chain_table,
    chain_table_csv,
    embed_overall,
    trajectory_csv,
)

logger = logging.getLogger("tetiwd")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def versions() -> dict:
    return {
        "tetiwd": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "python": platform.python_version(),
    }


def _read_json(path) -> dict:
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(obj, dict):
        raise UsageError(f"{path}: expected a JSON object")
    return obj


def _parse_sets(pairs) -> dict:
    """``key=value`` overrides; values are parsed as JSON when possible."""
    out = {}
    for p in pairs or []:
        if "=" not in p:
            raise UsageError(f"override {p!r} is not key=value")
        k, v = p.split("=", 1)
        try:
            out[k] = json.loads(v)
        except json.JSONDecodeError:
            out[k] = v
    return out


def _outdir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {out}: {exc}") from None
    if not os.access(out, os.W_OK):
        raise UsageError(f"output directory {out} is not writable")
    return out


def _record_run(out: Path, command: str, config: dict) -> None:
    write_json(out / "run.json", {"command": command, "config": config, "versions": versions()})


def _progress(every: int):
    def cb(i, phase, lp):
        if every and (i + 1) % every == 0:
            print(f"sweep {i + 1} [{phase}] log posterior {lp:.3f}", file=sys.stderr)

    return cb


# -- experiment configuration -------------------------------------------


def _experiment_config(args) -> ExperimentConfig:
    base: dict = {}
    if args.preset:
        if args.preset not in PRESETS:
            raise UsageError(f"unknown preset {args.preset!r}; choose from {sorted(PRESETS)}")
        base.update(PRESETS[args.preset])
    if args.config:
        base.update(_read_json(args.config))
    base.update(_parse_sets(args.set))
    if args.seed is not None:
        base["seed"] = args.seed
    if getattr(args, "repeats", None) is not None:
        base["repeats"] = args.repeats
    try:
        return ExperimentConfig.from_dict(base)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid experiment config: {exc}") from None


# -- commands -------------------------------------------------------------


def cmd_simulate(args) -> int:
    cfg = _experiment_config(args)
    out = _outdir(args.out)
    data, truth = generate(cfg, np.random.default_rng(ex.derive_seed(cfg.seed, 0, 0)))
    save_series(out, data, args.format, extra={"latent_dims": cfg.dims})
    write_json(out / "truth.json", truth.to_json())
    _record_run(out, "simulate", cfg.to_dict())
    print(f"wrote {data.T} matrices to {out}", file=sys.stderr)
    return EXIT_OK


def _sampler_config(args, meta: dict) -> SamplerConfig:
    d: dict = {}
    if args.config:
        d.update(_read_json(args.config))
    d.update(_parse_sets(args.set))
    if args.sweeps is not None:
        d["sweeps"] = args.sweeps
    if args.burnin is not None:
        d["burn_in"] = args.burnin
    if "dof" not in d and meta.get("latent_dims"):
        d["dof"] = [float(x) for x in meta["latent_dims"]]
    if "burn_in" not in d and "sweeps" in d:
        d["burn_in"] = d["sweeps"] // 2
    try:
        return SamplerConfig.from_dict(d)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid sampler config: {exc}") from None


def _load(manifest):
    try:
        data, meta = load_manifest(manifest)
    except FileNotFoundError as exc:
        raise DataValidationError(str(exc)) from None
    except (KeyError, json.JSONDecodeError) as exc:
        raise DataValidationError(f"{manifest}: malformed manifest ({exc})") from None
    for t, D in enumerate(data.matrices):
        rep = validate_negative_type(D)
        for msg in rep.messages:
            logger.warning("epoch %d: %s", t + 1, msg)
    return data, meta


def cmd_fit(args) -> int:
    data, meta = _load(args.manifest)
    cfg = _sampler_config(args, meta)
    if isinstance(cfg.dof, list) and len(cfg.dof) != data.T:
        raise UsageError(f"dof lists {len(cfg.dof)} values for {data.T} epochs")
    out = _outdir(args.out)
    rng = np.random.default_rng(ex.derive_seed(args.seed, 0))
    res = run_with_annealing(data, cfg, rng, progress=_progress(args.progress))
    res.trace.to_csv(out / "trace.csv", data.T)
    state = res.state.to_json()
    state["converged"] = bool(res.converged)
    state["log_post"] = float(res.log_post)
    write_json(out / "state.json", state)
    write_text(out / "chains.csv", chain_table_csv(chain_table(res.state.reg.labels), data.T))
    _record_run(out, "fit", {"manifest": str(args.manifest), "seed": args.seed, "sampler": cfg.to_dict()})
    return EXIT_OK


def _repeat_job(job):
    cfg_dict, seed, r, methods, s_over, g_over, timing = job
    cfg = ExperimentConfig.from_dict(cfg_dict)
    return ex.run_repeat(cfg, seed, r, methods, s_over, g_over, timing)


def cmd_benchmark(args) -> int:
    cfg = _experiment_config(args)
    methods = tuple(args.methods.split(",")) if args.methods else ex.METHODS
    unknown = set(methods) - set(ex.METHODS)
    if unknown:
        raise UsageError(f"unknown methods {sorted(unknown)}; choose from {ex.METHODS}")
    s_over = _read_json(args.sampler_config) if args.sampler_config else None
    g_over = _read_json(args.gauss_config) if args.gauss_config else None
    try:
        ex.sampler_config(cfg, s_over)
        ex.gauss_config(cfg, g_over)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    out = _outdir(args.out)
    jobs = [(cfg.to_dict(), cfg.seed, r, methods, s_over, g_over, args.timing) for r in range(cfg.repeats)]
    workers = args.jobs or int(os.environ.get("TETIWD_THREADS") or 1)
    rows: list = []
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for r, res in enumerate(pool.map(_repeat_job, jobs)):
                rows.extend(res)
                print(f"repeat {r + 1}/{len(jobs)} done", file=sys.stderr)
    else:
        for r, job in enumerate(jobs):
            rows.extend(_repeat_job(job))
            print(f"repeat {r + 1}/{len(jobs)} done", file=sys.stderr)
    write_text(out / "results.csv", ex.results_csv(rows))
    write_json(out / "summary.json", ex.summarize(rows))
    write_text(out / "aggregate.csv", _aggregate_csv(rows))
    _record_run(
        out,
        "benchmark",
        {"experiment": cfg.to_dict(), "methods": list(methods), "sampler": s_over, "te_gauss": g_over},
    )
    return EXIT_OK


def _aggregate_csv(rows) -> str:
    ps = ex.per_seed(rows)
    lines = ["method,seed,mean_ARI"]
    for m in ex.METHODS:
        for s in sorted(ps.get(m, {})):
            lines.append(f"{m},{s},{ps[m][s]!r}")
    return "\n".join(lines) + "\n"


def cmd_evaluate(args) -> int:
    state = _read_json(args.state)
    truth = _read_json(args.truth)
    try:
        pred = state["assignments"]
        true = truth["labels"]
    except KeyError as exc:
        raise DataValidationError(f"missing field {exc} in state or truth file") from None
    if len(pred) != len(true):
        raise DataValidationError(f"state has {len(pred)} epochs, truth has {len(true)}")
    out = _outdir(args.out)
    lines = ["t,ARI,k_found,k_true"]
    aris = []
    for t, (p, q) in enumerate(zip(pred, true)):
        if len(p) != len(q):
            raise DataValidationError(f"epoch {t + 1}: {len(p)} assignments for {len(q)} objects")
        a = adjusted_rand_index(p, q)
        aris.append(a)
        lines.append(f"{t + 1},{a!r},{len(set(p))},{len(set(q))}")
    write_text(out / "evaluation.csv", "\n".join(lines) + "\n")
    write_json(out / "evaluation.json", {"ARI": aris, "mean_ARI": float(np.mean(aris))})
    _record_run(out, "evaluate", {"state": str(args.state), "truth": str(args.truth)})
    return EXIT_OK


def cmd_track(args) -> int:
    data, _ = _load(args.manifest)
    state = _read_json(args.state)
    labels = [np.asarray(a) for a in state.get("assignments", [])]
    if len(labels) != data.T or any(len(l) != n for l, n in zip(labels, data.sizes)):
        raise DataValidationError("state assignments do not match the data")
    out = _outdir(args.out)
    write_text(out / "chains.csv", chain_table_csv(chain_table(labels), data.T))
    if data.cross is None:
        logger.warning("no cross-epoch distances; writing the chain table only")
    else:
        emb = embed_overall(data.cross, args.rank, data.sizes)
        cents = chain_centroids(emb, labels)
        write_json(out / "centroids.json", centroids_json(cents))
        write_text(out / "trajectory.csv", trajectory_csv(cents, args.dims))
    _record_run(out, "track", {"manifest": str(args.manifest), "state": str(args.state), "rank": args.rank})
    return EXIT_OK


def cmd_report(args) -> int:
    """Per-method, per-epoch ARI quantiles from one or more results tables."""
    rows = []
    for path in args.results:
        try:
            with open(path, newline="") as fh:
                for r in csv.DictReader(fh):
                    rows.append({**r, "seed": int(r["seed"]), "t": int(r["t"]), "ARI": float(r["ARI"])})
        except FileNotFoundError:
            raise DataValidationError(f"missing results file {path}") from None
        except (KeyError, ValueError) as exc:
            raise DataValidationError(f"{path}: malformed results table ({exc})") from None
    out = _outdir(args.out)
    lines = ["method,t,n,min,q1,median,q3,max"]
    methods = [m for m in ex.METHODS if any(r["method"] == m for r in rows)]
    for m in methods:
        T = sorted({r["t"] for r in rows if r["method"] == m})
        for t in [*T, "all"]:
            v = [r["ARI"] for r in rows if r["method"] == m and (t == "all" or r["t"] == t)]
            q = np.quantile(v, [0, 0.25, 0.5, 0.75, 1.0])
            lines.append(",".join([m, str(t), str(len(v))] + [repr(float(x)) for x in q]))
    write_text(out / "report.csv", "\n".join(lines) + "\n")
    for r in rows:
        r["runtime_s"] = None
    write_json(out / "report.json", ex.summarize(rows))
    _record_run(out, "report", {"results": [str(p) for p in args.results]})
    return EXIT_OK


# -- parser ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tetiwd", description="Time-evolving translation-invariant Wishart-Dirichlet clustering")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def experiment_args(q):
        q.add_argument("--preset", choices=sorted(PRESETS))
        q.add_argument("--config", help="experiment config JSON")
        q.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config field")
        q.add_argument("--seed", type=int, help="master seed")
        q.add_argument("--out", required=True)

    q = sub.add_parser("simulate", help="generate a synthetic series")
    experiment_args(q)
    q.add_argument("--format", choices=("csv", "binary"), default="csv")
    q.set_defaults(func=cmd_simulate)

    q = sub.add_parser("fit", help="run the sampler on a manifest")
    q.add_argument("--manifest", required=True)
    q.add_argument("--config", help="sampler config JSON")
    q.add_argument("--set", action="append", metavar="KEY=VALUE")
    q.add_argument("--sweeps", type=int)
    q.add_argument("--burnin", type=int)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--progress", type=int, default=0, metavar="N", help="report every N sweeps")
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_fit)

    q = sub.add_parser("benchmark", help="compare all methods over seeded repeats")
    experiment_args(q)
    q.add_argument("--repeats", type=int)
    q.add_argument("--methods", help=f"comma-separated subset of {','.join(ex.METHODS)}")
    q.add_argument("--sampler-config", help="sampler overrides JSON")
    q.add_argument("--gauss-config", help="Te-Gauss overrides JSON")
    q.add_argument("--jobs", type=int, help="worker processes")
    q.add_argument("--timing", action="store_true", help="record runtimes (outputs no longer byte-stable)")
    q.set_defaults(func=cmd_benchmark)

    q = sub.add_parser("evaluate", help="ARI of a fitted state against the truth")
    q.add_argument("--state", required=True)
    q.add_argument("--truth", required=True)
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_evaluate)

    q = sub.add_parser("track", help="chain table, centroids and trajectories")
    q.add_argument("--manifest", required=True)
    q.add_argument("--state", required=True)
    q.add_argument("--rank", type=int)
    q.add_argument("--dims", type=int, default=2, help="coordinates in the trajectory CSV")
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_track)

    q = sub.add_parser("report", help="boxplot-ready ARI quantiles")
    q.add_argument("--results", nargs="+", required=True)
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataValidationError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        logger.debug("failure", exc_info=True)
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

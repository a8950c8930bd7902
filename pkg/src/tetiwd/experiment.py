"""Paired-seed benchmark of Te-TiWD against the comparison methods."""

from __future__ import annotations

import time

import numpy as np

from . import baselines as bl
from .metrics import adjusted_rand_index, sign_test
from .sampler import SamplerConfig, canonical, run_with_annealing
from .synth import ExperimentConfig, generate

METHODS = ("te-tiwd", "static", "ward", "complete", "single", "te-gauss", "pooled")


def derive_seed(master: int, *path: int) -> int:
    """Counter-based child seed: the same (master, path) always gives the same value."""
    ss = np.random.SeedSequence([int(master), *[int(p) for p in path]])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def sampler_config(cfg: ExperimentConfig, overrides: dict | None = None) -> SamplerConfig:
    base = dict(
        sweeps=cfg.sweeps,
        burn_in=cfg.burn_in,
        dof=[float(d) for d in cfg.dims],
        wishart_dof=cfg.wishart_dof,
        xi=cfg.xi,
        anneal_gamma=cfg.anneal_gamma,
    )
    return SamplerConfig.from_dict({**base, **(overrides or {})})


def gauss_config(cfg: ExperimentConfig, overrides: dict | None = None) -> bl.GaussConfig:
    base = dict(sweeps=cfg.sweeps, burn_in=cfg.burn_in, xi=cfg.xi)
    return bl.GaussConfig.from_dict({**base, **(overrides or {})})


def run_repeat(
    cfg: ExperimentConfig,
    master_seed: int,
    repeat: int,
    methods=METHODS,
    sampler_overrides: dict | None = None,
    gauss_overrides: dict | None = None,
    timing: bool = False,
) -> list[dict]:
    """All methods on one synthetic series; one row per (method, epoch)."""
    unknown = set(methods) - set(METHODS)
    if unknown:
        raise ValueError(f"unknown methods: {sorted(unknown)}")
    data, truth = generate(cfg, np.random.default_rng(derive_seed(master_seed, repeat, 0)))
    scfg = sampler_config(cfg, sampler_overrides)
    T = data.T
    preds: dict[str, list] = {}
    elapsed: dict[str, float] = {}

    def seeded(i):
        return np.random.default_rng(derive_seed(master_seed, repeat, 1 + i))

    def timed(name, fn):
        t0 = time.perf_counter()
        preds[name] = fn()
        elapsed[name] = time.perf_counter() - t0

    mix = {name: i for i, name in enumerate(METHODS)}
    if "te-tiwd" in methods:
        timed(
            "te-tiwd",
            lambda: [canonical(l) for l in run_with_annealing(data, scfg, seeded(mix["te-tiwd"])).state.reg.labels],
        )
    if "static" in methods:

        def static():
            out = []
            for t in range(T):
                c = SamplerConfig.from_dict({**scfg.to_dict(), "dof": scfg.dof[t]})
                out.append(bl.run_static_tiwd(data[t], c, np.random.default_rng(derive_seed(master_seed, repeat, 1 + mix["static"], t))))
            return out

        timed("static", static)
    # linkage trees are cut at the block counts of the nonparametric model
    ref = preds.get("te-tiwd") or preds.get("static")
    ks = [len(np.unique(p)) for p in ref] if ref else [len(np.unique(l)) for l in truth.labels]
    for name in ("ward", "complete", "single"):
        if name in methods:
            timed(name, lambda name=name: [bl.run_linkage(data[t], name, ks[t]) for t in range(T)])
    if "te-gauss" in methods:
        timed("te-gauss", lambda: bl.run_te_gauss(data, gauss_config(cfg, gauss_overrides), seeded(mix["te-gauss"])))
    if "pooled" in methods:
        timed("pooled", lambda: bl.run_pooled(data.cross, data.sizes, scfg, seeded(mix["pooled"])))

    rows = []
    for name in METHODS:
        if name not in preds:
            continue
        for t in range(T):
            rows.append(
                {
                    "method": name,
                    "seed": repeat,
                    "t": t + 1,
                    "ARI": adjusted_rand_index(preds[name][t], truth.labels[t]),
                    "k": int(len(np.unique(preds[name][t]))),
                    "runtime_s": elapsed[name] if timing else None,
                }
            )
    return rows


def per_seed(rows: list[dict]) -> dict:
    """Mean ARI over epochs for every (method, seed)."""
    acc: dict = {}
    for r in rows:
        acc.setdefault(r["method"], {}).setdefault(r["seed"], []).append(r["ARI"])
    return {m: {s: float(np.mean(v)) for s, v in d.items()} for m, d in acc.items()}


def summarize(rows: list[dict], reference: str = "te-tiwd") -> dict:
    """Median per-seed ARI of each method and paired sign tests against ``reference``."""
    ps = per_seed(rows)
    out = {"median_ari": {}, "sign_test": {}}
    for m in METHODS:
        if m in ps:
            out["median_ari"][m] = float(np.median(list(ps[m].values())))
    if reference in ps:
        seeds = sorted(ps[reference])
        x = [ps[reference][s] for s in seeds]
        for m in ps:
            if m == reference:
                continue
            y = [ps[m][s] for s in seeds]
            out["sign_test"][m] = sign_test(x, y)
    return out


def results_csv(rows: list[dict]) -> str:
    lines = ["method,seed,t,ARI,k,runtime_s"]
    for r in rows:
        rt = "" if r["runtime_s"] is None else f"{r['runtime_s']:.3f}"
        lines.append(f"{r['method']},{r['seed']},{r['t']},{r['ARI']!r},{r['k']},{rt}")
    return "\n".join(lines) + "\n"

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import binomtest
from sklearn.metrics import adjusted_rand_score

from oracles import block_lik, seating_logprob
from tetiwd import baselines as bl
from tetiwd.distance import DistanceSeries, sq_distances, validate_negative_type
from tetiwd.experiment import derive_seed, results_csv, run_repeat, sampler_config, summarize
from tetiwd.metrics import adjusted_rand_index, contingency, mean_ari, sign_test
from tetiwd.sampler import Sampler, SamplerConfig, canonical, run_with_annealing
from tetiwd.synth import ExperimentConfig, generate, oracle_accuracy, preset

labels_st = st.lists(st.integers(0, 4), min_size=2, max_size=30)


# -- adjusted Rand index ----------------------------------------------------


@settings(max_examples=200, deadline=None)
@given(st.data())
def test_ari_matches_sklearn(data):
    a = data.draw(labels_st)
    b = data.draw(st.lists(st.integers(0, 4), min_size=len(a), max_size=len(a)))
    assert adjusted_rand_index(a, b) == pytest.approx(adjusted_rand_score(a, b), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(labels_st, st.permutations(range(5)))
def test_ari_identity_and_relabelling(a, perm):
    b = [perm[x] for x in a]
    assert adjusted_rand_index(a, a) == 1.0
    assert adjusted_rand_index(a, b) == pytest.approx(1.0)


def test_ari_one_block_against_two_balanced_blocks():
    # sum_ij = 2, sum_a = 2, sum_b = 6, total = 6: expected 2 = index
    assert adjusted_rand_index([0, 0, 1, 1], [0, 0, 0, 0]) == 0.0


def test_ari_rejects_mismatched_lengths():
    with pytest.raises(ValueError):
        adjusted_rand_index([0, 1], [0, 1, 1])


def test_contingency_counts():
    assert contingency([0, 0, 1], [5, 7, 7]).tolist() == [[1, 1], [0, 1]]


def test_mean_ari():
    assert mean_ari([[0, 0, 1, 1], [0, 1]], [[1, 1, 0, 0], [0, 1]]) == 1.0


# -- sign test ----------------------------------------------------------------


def test_sign_test_counts_and_p_value():
    out = sign_test([0.9, 0.8, 0.7, 0.5, 0.4], [0.1, 0.1, 0.1, 0.6, 0.4])
    assert (out["wins"], out["losses"], out["ties"]) == (3, 1, 1)
    assert out["p_value"] == pytest.approx(binomtest(3, 4, 0.5, alternative="greater").pvalue)
    assert out["p_value"] == pytest.approx(5 / 16)


def test_sign_test_five_of_five():
    assert sign_test([1] * 5, [0] * 5)["p_value"] == pytest.approx(1 / 32)


def test_sign_test_all_ties():
    assert sign_test([1, 1], [1, 1])["p_value"] == 1.0


# -- generators -----------------------------------------------------------------


@pytest.mark.parametrize("kind", ["model", "drift"])
def test_generated_distances_are_exact(kind):
    cfg = ExperimentConfig(T=3, n=[12, 10, 15], dim=[8, 8, 6], clusters=3, generator=kind, wishart_dof=10.0)
    data, truth = generate(cfg, np.random.default_rng(0))
    assert data.sizes == (12, 10, 15)
    offs = np.cumsum([0, *data.sizes])
    for t, (D, X) in enumerate(zip(data.matrices, truth.X)):
        d = X.shape[1]
        assert np.abs(D - sq_distances(X / math.sqrt(d))).max() <= 1e-10
        assert validate_negative_type(D).is_negative_type
        assert np.allclose(data.cross[offs[t] : offs[t + 1], offs[t] : offs[t + 1]], D, atol=1e-10)
        assert len(truth.labels[t]) == data.sizes[t]
    assert validate_negative_type(data.cross).is_negative_type


def test_model_generator_regimes():
    ws = preset("well_separated")
    assert (ws.T, ws.n, ws.clusters, ws.dim, ws.alpha) == (5, 20, 3, 100, 2.0)
    ov = preset("overlapping")
    assert (ov.T, ov.n, ov.clusters, ov.dim) == (5, 200, 5, 40)
    data, truth = generate(ws, np.random.default_rng(1))
    assert len(np.unique(truth.labels[0])) == 3
    assert min(np.bincount(canonical(truth.labels[0]))) >= ws.min_size
    for t in range(ws.T):
        k = len(np.unique(truth.labels[t]))
        assert truth.A[t].shape == (k, k)


def test_model_generator_deterministic():
    cfg = ExperimentConfig(T=2, n=10, dim=5, wishart_dof=10.0)
    a, _ = generate(cfg, np.random.default_rng(3))
    b, _ = generate(cfg, np.random.default_rng(3))
    assert all(np.array_equal(x, y) for x, y in zip(a.matrices, b.matrices))


def test_drift_zero_keeps_centres():
    cfg = ExperimentConfig(T=4, n=30, dim=5, clusters=3, generator="drift", drift=0.0)
    _, truth = generate(cfg, np.random.default_rng(0))
    for C in truth.centers[1:]:
        assert np.array_equal(C, truth.centers[0])


def test_drift_regime_shape_and_oracle():
    cfg = preset("drift")
    assert (cfg.T, cfg.n, cfg.clusters) == (5, 200, 5)
    _, truth = generate(cfg, np.random.default_rng(0))
    assert all(len(l) == 200 for l in truth.labels)
    assert oracle_accuracy(truth) > 1.0 / cfg.clusters


def test_oracle_needs_drift_truth():
    _, truth = generate(ExperimentConfig(T=1, n=6, dim=3, clusters=2, wishart_dof=5.0), np.random.default_rng(0))
    with pytest.raises(ValueError):
        oracle_accuracy(truth)


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(generator="other")
    with pytest.raises(ValueError):
        ExperimentConfig(n=4, clusters=3, min_size=2)
    with pytest.raises(ValueError):
        preset("nope")
    cfg = preset("drift_desk")
    assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg


# -- baselines --------------------------------------------------------------------


def _two_groups(n=10, gap=50.0, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, 3))
    X[n // 2 :, 0] += gap
    return sq_distances(X), np.repeat([0, 1], [n // 2, n - n // 2])


@pytest.mark.parametrize("method", bl.LINKAGES)
def test_linkage_extreme_cuts_and_recovery(method):
    D, truth = _two_groups()
    assert len(np.unique(bl.run_linkage(D, method, 10))) == 10
    assert len(np.unique(bl.run_linkage(D, method, 1))) == 1
    assert adjusted_rand_index(bl.run_linkage(D, method, 2), truth) == 1.0


def test_linkage_errors():
    D, _ = _two_groups()
    with pytest.raises(ValueError):
        bl.run_linkage(D, "average", 2)
    with pytest.raises(ValueError):
        bl.run_linkage(D, "ward", 0)


def test_static_equals_te_tiwd_on_one_epoch():
    D, _ = _two_groups(gap=5.0)
    cfg = SamplerConfig(sweeps=30, burn_in=10, anneal_max=20)
    a = bl.run_static_tiwd(D, cfg, np.random.default_rng(4))
    b = run_with_annealing(DistanceSeries((D,)), cfg, np.random.default_rng(4))
    assert np.array_equal(a, canonical(b.state.reg.labels[0]))


def test_static_well_separated_single_epoch():
    cfg = preset("well_separated", T=1)
    data, truth = generate(cfg, np.random.default_rng(2))
    scfg = SamplerConfig.from_dict({**sampler_config(cfg).to_dict(), "dof": 100.0})
    lab = bl.run_static_tiwd(data[0], scfg, np.random.default_rng(0))
    assert adjusted_rand_index(lab, truth.labels[0]) >= 0.9


def test_fixed_A_gives_equidistant_model():
    # A = beta * I: the log posterior is the dense likelihood with
    # Sigma = alpha I + beta Z Z^T plus the sequential-seating prior
    D, _ = _two_groups(n=6, gap=2.0)
    beta, alpha, dof = 1.5, 0.7, 3.0
    cfg = SamplerConfig(fixed_A=beta, alpha=alpha, sample_alpha=False, dof=dof)
    smp = Sampler(DistanceSeries((D,)), cfg, np.random.default_rng(0))
    for lab in ([0, 0, 0, 1, 1, 1], [0, 1, 2, 0, 1, 2], [0, 0, 0, 0, 0, 1]):
        lab = np.array(lab)
        k = lab.max() + 1
        st_ = smp.set_state([lab], [beta * np.eye(k)], alpha)
        ref = block_lik(D, lab, beta, alpha, dof) + seating_logprob(lab, {}, [], 1.0)
        assert smp.log_posterior(st_) == pytest.approx(ref, abs=1e-9)
    # centroid distances implied by A = beta I are all 2 beta
    Z = np.eye(3)
    A = beta * Z
    d = np.diag(A)[:, None] + np.diag(A)[None] - 2 * A
    assert np.allclose(d[~np.eye(3, dtype=bool)], 2 * beta)


def test_pooled_on_one_epoch_is_static():
    D, _ = _two_groups(gap=5.0)
    cfg = SamplerConfig(sweeps=30, burn_in=10, anneal_max=20, dof=[3.0])
    pooled = bl.run_pooled(D, [D.shape[0]], cfg, np.random.default_rng(1))
    static = bl.run_static_tiwd(D, SamplerConfig.from_dict({**cfg.to_dict(), "dof": 3.0}), np.random.default_rng(1))
    assert len(pooled) == 1 and np.array_equal(pooled[0], static)


def test_pooled_deterministic_and_checked():
    cfg = ExperimentConfig(T=2, n=8, dim=5, clusters=2, wishart_dof=10.0)
    data, _ = generate(cfg, np.random.default_rng(0))
    scfg = SamplerConfig(sweeps=20, burn_in=10, anneal_max=10, wishart_dof=10.0)
    a = bl.run_pooled(data.cross, data.sizes, scfg, np.random.default_rng(2))
    b = bl.run_pooled(data.cross, data.sizes, scfg, np.random.default_rng(2))
    assert [x.tolist() for x in a] == [x.tolist() for x in b]
    assert [len(x) for x in a] == [8, 8]
    with pytest.raises(ValueError):
        bl.run_pooled(data.cross, [8, 7], scfg, np.random.default_rng(2))
    with pytest.raises(ValueError):
        bl.run_pooled(None, data.sizes, scfg, np.random.default_rng(2))


def test_te_gauss_deterministic_and_well_separated():
    cfg = preset("well_separated")
    data, truth = generate(cfg, np.random.default_rng(0))
    gcfg = bl.GaussConfig(sweeps=100, burn_in=50)
    a = bl.run_te_gauss(data, gcfg, np.random.default_rng(5))
    b = bl.run_te_gauss(data, gcfg, np.random.default_rng(5))
    assert [x.tolist() for x in a] == [x.tolist() for x in b]
    assert mean_ari(a, truth.labels) >= 0.9


def test_te_gauss_without_cross_distances(caplog):
    cfg = ExperimentConfig(T=2, n=10, dim=20, clusters=2, wishart_dof=30.0)
    data, _ = generate(cfg, np.random.default_rng(0))
    out = bl.run_te_gauss(DistanceSeries(data.matrices), bl.GaussConfig(sweeps=10, burn_in=5), np.random.default_rng(0))
    assert [len(x) for x in out] == [10, 10]
    assert "embeds every epoch" in caplog.text


def test_gauss_config_roundtrip():
    g = bl.GaussConfig(k=5, b0=0.3)
    assert bl.GaussConfig.from_dict(g.to_dict()) == g
    with pytest.raises(ValueError):
        bl.GaussConfig.from_dict({"sweep": 1})


# -- benchmark plumbing -----------------------------------------------------------------


def test_derive_seed():
    assert derive_seed(7, 1, 2) == derive_seed(7, 1, 2)
    assert len({derive_seed(7, r, m) for r in range(5) for m in range(5)}) == 25
    assert 0 <= derive_seed(0) < 2**63


def test_run_repeat_is_deterministic_and_complete():
    cfg = ExperimentConfig(T=2, n=8, dim=6, clusters=2, wishart_dof=10.0, sweeps=12, burn_in=6)
    over = {"anneal_max": 10}
    a = run_repeat(cfg, 3, 0, sampler_overrides=over, gauss_overrides={"sweeps": 10, "burn_in": 5})
    b = run_repeat(cfg, 3, 0, sampler_overrides=over, gauss_overrides={"sweeps": 10, "burn_in": 5})
    assert results_csv(a) == results_csv(b)
    assert {r["method"] for r in a} == {"te-tiwd", "static", "ward", "complete", "single", "te-gauss", "pooled"}
    assert {r["t"] for r in a} == {1, 2}
    assert all(r["runtime_s"] is None for r in a)
    with pytest.raises(ValueError):
        run_repeat(cfg, 3, 0, methods=("kmeans",))


def test_summarize_pairs_by_seed():
    rows = []
    for seed, (x, y) in enumerate([(0.9, 0.5), (0.8, 0.6), (0.3, 0.4)]):
        rows += [
            {"method": "te-tiwd", "seed": seed, "t": 1, "ARI": x},
            {"method": "ward", "seed": seed, "t": 1, "ARI": y},
        ]
    out = summarize(rows)
    assert out["median_ari"] == {"te-tiwd": 0.8, "ward": 0.5}
    assert out["sign_test"]["ward"]["wins"] == 2 and out["sign_test"]["ward"]["losses"] == 1


def test_results_csv_format():
    rows = [{"method": "ward", "seed": 0, "t": 1, "ARI": 0.5, "k": 3, "runtime_s": 1.23456}]
    assert results_csv(rows) == "method,seed,t,ARI,k,runtime_s\nward,0,1,0.5,3,1.235\n"

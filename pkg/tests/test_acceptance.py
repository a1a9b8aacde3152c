"""Acceptance suite: one test per release criterion, one printed verdict line each.

The ablation experiment (criterion 7) runs the shipped synthetic benchmark
(20 identities x 3 outfits x 25 samples, 16-dim) over seeds 0..9 with the
desk-scale training rate; all clustering, curriculum, gradient, and metric
checks run against the independent oracles in ``oracles.py``.
"""

import contextlib
import time

import numpy as np
import pytest

from cpc import cli
from cpc.bank import ClusterBank, init_bank
from cpc.curriculum import CurriculumState, relaxing_index, scheduler_delta, update_psi
from cpc.dbscan import NOISE, ClusterParams, dbscan, relabel_compact
from cpc.encoder import EncoderParams, contrastive_loss, encoder_forward, loss_gradient
from cpc.evaluation import clustering_quality, evaluate_retrieval
from cpc.store import FeatureMatrix, pairwise_distances
from cpc.synth import SynthConfig, generate, split_query_gallery
from cpc.trainer import TrainConfig, run_baseline, run_cpc

from oracles import (
    dbscan_closure,
    numeric_encoder_gradient,
    relaxing_index_loop,
    retrieval_enumeration,
    same_partition,
)

# benchmark harness: synthetic geometry is the SynthConfig default; the
# training rate is the desk-scale value for the linear toy encoder (the
# deep-backbone reference rate, 3.5e-4, leaves it effectively frozen)
BENCH_TRAIN = dict(eps0=0.26, learning_rate=0.06)


@contextlib.contextmanager
def verdict(tag):
    try:
        yield
    except BaseException:
        print(f"ACCEPTANCE {tag}: FAIL")
        raise
    print(f"ACCEPTANCE {tag}: PASS")


def test_c1_dbscan_matches_closure_oracle():
    with verdict("C1 dbscan-oracle-equivalence"):
        start = time.monotonic()
        rng = np.random.default_rng(1)
        for _ in range(200):
            n = int(rng.integers(2, 16))
            dist = pairwise_distances(FeatureMatrix(rng.random((n, 2))))
            eps = float(rng.uniform(0.05, 0.9))
            min_pts = int(rng.integers(1, 7))
            got = dbscan(dist, ClusterParams(eps, min_pts))
            expected, core = dbscan_closure(dist, eps, min_pts)
            assert same_partition(got.labels, expected)
            within = dist <= eps
            assert np.array_equal(within.sum(axis=1) >= min_pts, core)
        assert time.monotonic() - start < 10.0


def test_c2_partition_refines_as_radius_grows():
    with verdict("C2 eps-monotonicity"):

        def assert_refines(dist, eps1, eps2, min_pts):
            l1 = dbscan(dist, ClusterParams(eps1, min_pts)).labels
            l2 = dbscan(dist, ClusterParams(eps2, min_pts)).labels
            both = (l1 != NOISE) & (l2 != NOISE)
            idx = np.flatnonzero(both)
            same1 = l1[idx][:, None] == l1[idx][None, :]
            same2 = l2[idx][:, None] == l2[idx][None, :]
            assert not np.any(same1 & ~same2)

        # 30 uniform point sets with random radii
        for trial in range(30):
            rng = np.random.default_rng(trial)
            pts = rng.random((int(rng.integers(20, 60)), 2))
            dist = pairwise_distances(FeatureMatrix(pts))
            eps1 = float(rng.uniform(0.04, 0.12))
            eps2 = eps1 + float(rng.uniform(0.02, 0.15))
            assert_refines(dist, eps1, eps2, int(rng.integers(2, 6)))
        # 20 hierarchical sub-blob structures that genuinely merge
        for trial in range(20):
            rng = np.random.default_rng(1000 + trial)
            groups = []
            for gx in (0.0, 40.0, 80.0):
                for sub in range(int(rng.integers(2, 4))):
                    center = np.array([gx + sub * 0.5, 0.0])
                    groups.append(rng.uniform(-0.07, 0.07, (int(rng.integers(4, 8)), 2)) + center)
            pts = np.vstack(groups + [rng.uniform(200, 300, (4, 2))])
            assert_refines(pairwise_distances(FeatureMatrix(pts)), 0.3, 0.7, 4)


def test_c3_curriculum_arithmetic_exact():
    with verdict("C3 curriculum-arithmetic"):
        rng = np.random.default_rng(3)
        # EMA raw result is a coordinatewise convex combination
        for _ in range(200):
            alpha = float(rng.uniform(0, 1))
            m = rng.standard_normal(8)
            f = rng.standard_normal(8)
            bank = ClusterBank(m[None, :].copy(), alpha=alpha, normalize=False)
            bank.ema_update(0, f)
            out = bank.centers[0]
            assert np.all(out >= np.minimum(m, f) - 1e-12)
            assert np.all(out <= np.maximum(m, f) + 1e-12)
        # strict threshold gate
        for _ in range(500):
            ri = float(rng.uniform(-1, 1))
            threshold = float(rng.uniform(-1, 1))
            delta = scheduler_delta(ri, threshold)
            assert delta in (0, 1)
            assert delta == (1 if ri > threshold else 0)
        assert scheduler_delta(0.8, 0.8) == 0
        assert scheduler_delta(np.nextafter(0.8, 1.0), 0.8) == 1
        # trajectory identity on synthetic delta sequences
        for _ in range(50):
            eps0 = float(rng.uniform(0.05, 1.0))
            step = float(rng.uniform(0.001, 0.05))
            state = CurriculumState(eps=eps0, min_pts=4, threshold=0.8, step=step)
            deltas = rng.integers(0, 2, int(rng.integers(1, 80)))
            last = state.eps
            for epoch, delta in enumerate(deltas, start=1):
                update_psi(state, int(delta), epoch=epoch, ri=0.0)
                assert state.eps >= last
                last = state.eps
            assert state.eps == eps0 + step * int(deltas.sum())
        # and on a real run over the benchmark data
        data, _ = generate(SynthConfig(seed=0))
        result = run_cpc(data.data, TrainConfig(epochs=12, seed=0, **BENCH_TRAIN))
        deltas = sum(rec.delta for rec in result.curriculum.history)
        assert result.curriculum.eps == 0.26 + 0.01 * deltas
        eps_trace = [rec.eps for rec in result.curriculum.history]
        assert all(b >= a for a, b in zip(eps_trace, eps_trace[1:]))


def test_c4_relaxing_index_oracle_and_direction():
    with verdict("C4 relaxing-index"):
        rng = np.random.default_rng(4)
        for _ in range(100):
            n = int(rng.integers(5, 60))
            data = rng.standard_normal((n, int(rng.integers(4, 24))))
            labels = rng.integers(-1, 4, n)
            labeling = relabel_compact(labels)
            if labeling.num_clusters == 0:
                continue
            bank = init_bank(FeatureMatrix(data), labeling, alpha=0.2, normalize=True)
            ri = relaxing_index(FeatureMatrix(data), labeling, bank)
            expected = relaxing_index_loop(data, labeling.labels, bank.centers)
            assert ri == pytest.approx(expected, abs=1e-9)
            assert -1.0 <= ri <= 1.0
        increased = 0
        for seed in range(10):
            per_sigma = {}
            for sigma in (0.2, 0.05):
                feats, meta = generate(SynthConfig(
                    num_identities=8, clothes_per_identity=3, samples_per_clothes=12,
                    dim=16, noise_sigma=sigma, seed=seed,
                ))
                labeling = relabel_compact(meta.clothes)
                bank = init_bank(feats, labeling, alpha=0.2, normalize=True)
                per_sigma[sigma] = relaxing_index(feats, labeling, bank)
            increased += per_sigma[0.05] > per_sigma[0.2]
        assert increased >= 9


def test_c5_gradient_matches_finite_differences():
    with verdict("C5 gradient-check"):
        start = time.monotonic()
        rng = np.random.default_rng(5)
        checked = 0
        for normalize in (True, False):
            for _ in range(60):
                d_in, d_out, clusters = 5, 4, 3
                params = EncoderParams(
                    rng.standard_normal((d_in, d_out)), rng.standard_normal(d_out)
                )
                centers = rng.standard_normal((clusters, d_out))
                if normalize:
                    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
                bank = ClusterBank(centers, alpha=0.2, normalize=normalize)
                x = rng.standard_normal(d_in)
                label = int(rng.integers(0, clusters))
                tau = float(rng.uniform(0.1, 1.0))
                grad = loss_gradient(params, x, label, bank, tau, normalize)

                def loss_at(weight, bias):
                    feats = encoder_forward(EncoderParams(weight, bias), x, normalize)
                    return contrastive_loss(feats, label, bank, tau)

                gw, gb = numeric_encoder_gradient(loss_at, params.weight, params.bias, h=1e-5)
                for analytic, numeric in ((grad.weight, gw), (grad.bias, gb)):
                    tol = 1e-4 * np.maximum(np.abs(numeric), 1e-6) + 1e-8
                    assert np.all(np.abs(analytic - numeric) <= tol)
                checked += 1
        assert checked >= 100
        assert time.monotonic() - start < 30.0


def test_c6_retrieval_metrics_match_enumeration():
    with verdict("C6 retrieval-oracle"):
        rng = np.random.default_rng(6)
        max_rank = 15
        for _ in range(100):
            nq, ng = int(rng.integers(2, 10)), int(rng.integers(8, 32))
            qf = FeatureMatrix(rng.standard_normal((nq, 5)))
            gf = FeatureMatrix(rng.standard_normal((ng, 5)))
            from cpc.store import SampleMeta

            qid = rng.integers(0, 4, nq)
            gid = rng.integers(0, 4, ng)
            qmeta = SampleMeta(qid, qid * 10 + rng.integers(0, 3, nq),
                               rng.integers(0, 3, nq), rng.integers(0, 40, nq))
            gmeta = SampleMeta(gid, gid * 10 + rng.integers(0, 3, ng),
                               rng.integers(0, 3, ng), rng.integers(0, 40, ng))
            protocol = "long_term" if rng.integers(0, 2) else "standard"
            got = evaluate_retrieval(qf, qmeta, gf, gmeta, protocol=protocol, max_rank=max_rank)
            qn = qf.data / np.linalg.norm(qf.data, axis=1, keepdims=True)
            gn = gf.data / np.linalg.norm(gf.data, axis=1, keepdims=True)
            cmcs, aps, skipped = [], [], 0
            for i in range(nq):
                same_id = gmeta.identity == qmeta.identity[i]
                if protocol == "long_term":
                    keep = ((gmeta.camera == qmeta.camera[i])
                            & (gmeta.timestamp != qmeta.timestamp[i])
                            & (gmeta.clothes != qmeta.clothes[i]))
                else:
                    keep = ~(same_id & (gmeta.camera == qmeta.camera[i])
                             & (gmeta.timestamp == qmeta.timestamp[i]))
                outcome = retrieval_enumeration(qn[i] @ gn.T, keep, keep & same_id, max_rank)
                if outcome is None:
                    skipped += 1
                else:
                    cmcs.append(outcome[0])
                    aps.append(outcome[1])
            assert got.skipped_queries == skipped
            assert got.num_valid_queries == len(aps)
            if aps:
                assert got.mean_ap == pytest.approx(float(np.mean(aps)), abs=1e-9)
                np.testing.assert_allclose(got.cmc, np.mean(cmcs, axis=0), atol=1e-9)
            assert np.all(np.diff(got.cmc) >= -1e-15)
        # perfect-ranking instance scores exactly 1.0
        from cpc.store import SampleMeta

        ids = np.arange(4)
        qmeta = SampleMeta(ids, ids * 10, np.zeros(4, int), 100 + ids)
        gmeta = SampleMeta(ids, ids * 10 + 1, np.zeros(4, int), np.arange(4))
        perfect = evaluate_retrieval(
            FeatureMatrix(np.eye(4)), qmeta, FeatureMatrix(np.eye(4)), gmeta,
            protocol="long_term",
        )
        assert perfect.mean_ap == 1.0
        assert perfect.cmc[0] == 1.0


def test_c7_curriculum_beats_fixed_radius_baseline():
    with verdict("C7 ablation-direction"):
        start = time.monotonic()
        num_identities = 20
        wins = 0
        cpc_counts, baseline_counts = [], []
        for seed in range(10):
            data, meta = generate(SynthConfig(seed=seed))
            q_idx, g_idx = split_query_gallery(data, meta, ratio=0.5, seed=seed)
            config = TrainConfig(seed=seed, **BENCH_TRAIN)
            scores = {}
            for arm, runner in (("cpc", run_cpc), ("baseline", run_baseline)):
                result = runner(data.data, config)
                quality = clustering_quality(result.labeling, meta)
                feats = result.features(data.data)
                retrieval = evaluate_retrieval(
                    FeatureMatrix(feats.data[q_idx]), meta.take(q_idx),
                    FeatureMatrix(feats.data[g_idx]), meta.take(g_idx),
                    protocol="long_term",
                )
                scores[arm] = (quality.pairwise_f1, retrieval.mean_ap, quality.cluster_count)
            wins += (scores["cpc"][0] > scores["baseline"][0]
                     and scores["cpc"][1] > scores["baseline"][1])
            cpc_counts.append(scores["cpc"][2])
            baseline_counts.append(scores["baseline"][2])
        assert wins >= 8, f"curriculum won only {wins}/10 seeds"
        assert np.median(cpc_counts) <= 2 * num_identities
        assert np.median(baseline_counts) >= 2 * num_identities
        assert time.monotonic() - start < 300.0


def test_c8_unreachable_threshold_is_bitwise_baseline():
    with verdict("C8 equivalence-degeneracy"):
        data, _ = generate(SynthConfig(seed=0))
        config = TrainConfig(epochs=12, seed=0, threshold=1.1, **BENCH_TRAIN)
        cpc = run_cpc(data.data, config)
        baseline = run_baseline(data.data, config)
        assert np.array_equal(cpc.encoder.weight, baseline.encoder.weight)
        assert np.array_equal(cpc.encoder.bias, baseline.encoder.bias)
        assert cpc.curriculum.history == baseline.curriculum.history
        assert cpc.curriculum.eps == baseline.curriculum.eps
        assert np.array_equal(cpc.labeling.labels, baseline.labeling.labels)
        assert cpc.log == baseline.log
        for a, b in zip(cpc.epoch_labelings, baseline.epoch_labelings):
            assert np.array_equal(a.labels, b.labels)


def test_c9_identical_manifests_give_identical_bytes(tmp_path):
    with verdict("C9 determinism"):
        ds = tmp_path / "ds"
        assert cli.main([
            "synth", "--ids", "8", "--clothes", "2", "--per", "10", "--dim", "16",
            "--seed", "5", "--out", str(ds),
        ]) == 0
        outputs = []
        for name in ("one", "two"):
            out = tmp_path / name
            assert cli.main([
                "run", "--data", str(ds), "--out", str(out),
                "--epochs", "6", "--seed", "5", "--no-plots",
            ]) == 0
            outputs.append(out)
        first, second = outputs
        manifest_a = (first / "manifest.json").read_text()
        manifest_b = (second / "manifest.json").read_text()
        assert manifest_a == manifest_b
        assert (first / "ri_history.csv").read_bytes() == (second / "ri_history.csv").read_bytes()
        assert (first / "metrics.json").read_bytes() == (second / "metrics.json").read_bytes()

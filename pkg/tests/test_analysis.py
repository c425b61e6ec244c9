"""Attention-feature analysis on a small untrained model (fast paths).

The trained-model claims (cluster purity orderings, phase-aligned
correspondence, diagonal attention maps) are exercised in the acceptance
suite; here we pin contracts, shapes, determinism, and the purity metric.
"""
import numpy as np
import pytest

from momo.analysis import (
    AnalysisConfig,
    NotCapturedError,
    attention_map,
    capture_layer,
    cluster_purity,
    collect_features,
    correspondence,
    cluster_strip_svg,
    heatmap_svg,
    qk_cluster,
    write_cluster_csv,
    write_matrix_csv,
)
from momo.synthgen import GaitSpec, generate


def _walk(length=10, period=8, motif="neutral", seed=1, phase=0.0):
    return generate(GaitSpec(verb="walk", motif=motif, period=period, phase=phase,
                             speed=0.02, length=length, seed=seed, jitter=0.01))


class TestCollectFeatures:
    def test_one_vector_per_frame(self, tiny_model, schedule20):
        motions = [_walk(length=10), _walk(length=8, seed=2)]
        feats, keys = collect_features(tiny_model, schedule20, motions, 1, 6, "q")
        assert feats.shape == (18, tiny_model.config.dim)
        assert keys[0] == (0, 0)
        assert keys[-1] == (1, 7)

    def test_q_and_k_differ(self, tiny_model, schedule20):
        motions = [_walk(length=8)]
        fq, _ = collect_features(tiny_model, schedule20, motions, 1, 6, "q")
        fk_, _ = collect_features(tiny_model, schedule20, motions, 1, 6, "k")
        assert not np.allclose(fq, fk_)

    def test_features_match_checkpoint_recompute(self, tiny_model, schedule20):
        motion = _walk(length=8)
        io = capture_layer(tiny_model, schedule20, motion, 1, 6)
        wq = tiny_model.weights["l1.sa.wq"]
        bq = tiny_model.weights["l1.sa.bq"]
        assert np.abs(io.q - (io.ih @ wq + bq)).max() < 1e-12
        feats, _ = collect_features(tiny_model, schedule20, [motion], 1, 6, "q")
        assert np.array_equal(feats, io.q[1:])

    def test_missing_capture_errors(self, tiny_model, schedule20):
        with pytest.raises(NotCapturedError):
            capture_layer(tiny_model, schedule20, _walk(), 99, 5)
        with pytest.raises(NotCapturedError):
            capture_layer(tiny_model, schedule20, _walk(), 0, 99)

    def test_deterministic(self, tiny_model, schedule20):
        motions = [_walk(length=8)]
        a, _ = collect_features(tiny_model, schedule20, motions, 0, 3, "q")
        b, _ = collect_features(tiny_model, schedule20, motions, 0, 3, "q")
        assert np.array_equal(a, b)


class TestQkCluster:
    def test_single_cluster(self, tiny_model, schedule20):
        cfg = AnalysisConfig(layer=1, step=6, pca_dims=4, clusters=1, element="q")
        result = qk_cluster(tiny_model, schedule20, [_walk(length=8)], cfg)
        assert set(result.labels) == {0}

    def test_shapes_and_temporal_correlation(self, tiny_model, schedule20):
        cfg = AnalysisConfig(layer=1, step=6, pca_dims=4, clusters=3, element="k")
        result = qk_cluster(tiny_model, schedule20,
                            [_walk(length=10), _walk(length=8, seed=5)], cfg)
        assert result.labels.shape == (18,)
        assert result.pca.components.shape == (4, tiny_model.config.dim)
        assert result.temporal_correlation.shape == (4,)
        assert np.all((result.temporal_correlation >= 0)
                      & (result.temporal_correlation <= 1.0 + 1e-12))


class TestClusterPurity:
    def test_perfect_clusters(self):
        labels = np.array([0, 0, 1, 1])
        assert cluster_purity(labels, ["a", "a", "b", "b"]) == 1.0

    def test_mixed_cluster(self):
        labels = np.array([0, 0, 0, 0])
        assert cluster_purity(labels, ["a", "a", "b", "c"]) == 0.5

    def test_size_weighting(self):
        labels = np.array([0, 0, 0, 0, 1, 1])
        # cluster 0: majority 3/4; cluster 1: pure -> (3 + 2) / 6
        assert cluster_purity(labels, ["a", "a", "a", "b", "c", "c"]) \
            == pytest.approx(5 / 6)


class TestCorrespondence:
    def test_single_follower_frame_all_argmax_zero(self, tiny_model, schedule20):
        leader = _walk(length=10)
        follower = _walk(length=8, seed=9)
        follower = follower.with_features(follower.features[:1])
        corr = correspondence(tiny_model, schedule20, leader, follower, 1, 6)
        assert corr.logits.shape == (10, 1)
        assert np.all(corr.argmax == 0)

    def test_logits_are_pre_softmax(self, tiny_model, schedule20):
        leader = _walk(length=8)
        follower = _walk(length=9, seed=3, phase=0.5)
        corr = correspondence(tiny_model, schedule20, leader, follower, 1, 6)
        q = capture_layer(tiny_model, schedule20, leader, 1, 6).q[1:]
        k = capture_layer(tiny_model, schedule20, follower, 1, 6).k[1:]
        assert np.abs(corr.logits - q @ k.T).max() < 1e-12


class TestAttentionMap:
    def test_rows_sum_to_one(self, tiny_model, schedule20):
        maps = attention_map(tiny_model, schedule20, _walk(length=8),
                             _walk(length=9, seed=4), 1, 6)
        for mat in (maps.leader_self, maps.follower_self, maps.cross):
            assert np.abs(mat.sum(axis=1) - 1.0).max() <= 1e-9
        assert maps.cross.shape == (8, 9)


class TestExports:
    def test_csv_and_svg_outputs(self, tmp_path, tiny_model, schedule20):
        motion = _walk(length=8)
        cfg = AnalysisConfig(layer=1, step=6, pca_dims=3, clusters=2, element="q")
        result = qk_cluster(tiny_model, schedule20, [motion], cfg)
        csv_path = tmp_path / "clusters.csv"
        write_cluster_csv(str(csv_path), result, [0] * 8, ["neutral"] * 8)
        text = csv_path.read_text()
        assert text.startswith("motion,frame,cluster,phase_bin,motif\n")
        assert len(text.strip().splitlines()) == 9

        svg_path = tmp_path / "strip.svg"
        cluster_strip_svg(str(svg_path), motion, result.labels, stride=2)
        assert svg_path.read_text().startswith("<svg")

        heat_path = tmp_path / "map.svg"
        maps = attention_map(tiny_model, schedule20, motion, motion, 1, 6)
        heatmap_svg(str(heat_path), maps.cross)
        assert heat_path.read_text().startswith("<svg")

        mat_path = tmp_path / "mat.csv"
        write_matrix_csv(str(mat_path), np.array([[0.25, 0.75]]))
        assert mat_path.read_text() == "0.25,0.75\n"

"""Benchmark builder and metric suite."""
import numpy as np
import pytest

from momo.evalkit import (
    MotifClassifier,
    aggregate_results,
    build_benchmark,
    evaluate_pair,
    follower_similarity,
    foot_contact_similarity,
    frechet_feature_distance,
    frechet_gaussian,
    jitter,
    motif_precision,
    motion_descriptor,
    read_benchmark,
    read_results_csv,
    run_benchmark,
    write_benchmark,
    write_results_csv,
)
from momo.motion import Motion, feature_layout
from momo.synthgen import GaitSpec, build_corpus, generate


def _walk(length=24, period=8, motif="neutral", seed=1, phase=0.0, speed=0.02):
    return generate(GaitSpec(verb="walk", motif=motif, period=period, phase=phase,
                             speed=speed, length=length, seed=seed, jitter=0.01))


class TestBuildBenchmark:
    def test_two_leaders_three_followers_is_leader_limited(self):
        texts = (["a person walks"] * 2
                 + ["a person walks like a chicken"] * 3
                 + ["someone sits"])
        pairs = build_benchmark(texts, cap=20)
        assert len(pairs) == 2
        assert [p.leader_index for p in pairs] == [0, 1]
        assert all(p.follower_index == 2 for p in pairs)

    def test_follower_cap(self):
        texts = ["a person walks %d" % i for i in range(25)] \
            + ["a person walks like a robot"]
        pairs = build_benchmark(texts, cap=20)
        assert len(pairs) == 20
        leaders = [p.leader_index for p in pairs]
        assert len(set(leaders)) == 20

    def test_paper_scale_cap_arithmetic(self):
        texts = ["a person walks variant %d" % i for i in range(842)]
        texts += ["a person walks like a monkey %d" % i for i in range(55)]
        pairs = build_benchmark(texts, cap=20)
        assert len(pairs) == 842
        follower_counts = {}
        leader_counts = {}
        for p in pairs:
            follower_counts[p.follower_index] = follower_counts.get(p.follower_index, 0) + 1
            leader_counts[p.leader_index] = leader_counts.get(p.leader_index, 0) + 1
        assert max(follower_counts.values()) <= 20
        assert max(leader_counts.values()) == 1

    def test_empty_filter_warns(self):
        with pytest.warns(UserWarning):
            pairs = build_benchmark(["someone sits still"], cap=20)
        assert pairs == []

    def test_limit_truncates_deterministically(self):
        texts = ["a person walks %d" % i for i in range(30)] \
            + ["a person walks like a robot"]
        pairs = build_benchmark(texts, cap=30, limit=7)
        assert len(pairs) == 7
        assert [p.pair_id for p in pairs] == [f"pair{i:04d}" for i in range(7)]

    def test_round_trip(self, tmp_path):
        texts = ["a person walks", "a person walks like a robot"]
        pairs = build_benchmark(texts, cap=5)
        path = str(tmp_path / "pairs.json")
        write_benchmark(path, pairs)
        assert read_benchmark(path) == pairs


class TestFootContactSimilarity:
    def test_identical_labels(self):
        motion = _walk()
        assert foot_contact_similarity(motion, motion) == 1.0

    def test_complement_labels(self):
        motion = _walk()
        lay = feature_layout(motion.skeleton.joint_count)
        flipped = motion.features.copy()
        flipped[:, lay["contacts"]] = 1.0 - flipped[:, lay["contacts"]]
        other = motion.with_features(flipped)
        assert foot_contact_similarity(other, motion) == 0.0

    def test_partial_match_counts_labels(self):
        motion = _walk(length=8, period=8)
        lay = feature_layout(motion.skeleton.joint_count)
        modified = motion.features.copy()
        block = modified[:2, lay["contacts"]]
        block[0, :4] = 1.0 - block[0, :4]
        block[1, :4] = 1.0 - block[1, :4]
        modified[:2, lay["contacts"]] = block
        other = motion.with_features(modified)
        expected = 1.0 - 8 / (8 * 4)
        assert foot_contact_similarity(other, motion) == pytest.approx(expected)


class TestFollowerSimilarity:
    def test_copied_follower_rows_score_one(self):
        leader = _walk(seed=1)
        follower = _walk(motif="arms-up", seed=2, phase=0.4)
        out = follower.with_features(follower.features[:leader.length])
        for channel in ("rotations", "locations"):
            assert follower_similarity(out, leader, follower, channel) == 1.0

    def test_copied_leader_rows_score_zero(self):
        leader = _walk(seed=1)
        follower = _walk(motif="arms-up", seed=2, phase=0.4)
        out = leader.with_features(leader.features.copy())
        for channel in ("rotations", "locations"):
            assert follower_similarity(out, leader, follower, channel) == 0.0

    def test_tie_gets_half_credit(self):
        leader = _walk(seed=1, length=10)
        follower = _walk(motif="arms-up", seed=2, length=10, phase=0.4)
        # one output row appears identically in both sources: exact tie
        tied = follower.features.copy()
        tied[0] = leader.features[0]
        follower_tied = follower.with_features(tied)
        out = follower_tied.with_features(tied.copy())
        score = follower_similarity(out, leader, follower_tied, "rotations")
        assert score == pytest.approx((9 + 0.5) / 10)


class TestJitter:
    def test_static_motion_has_zero_jitter(self):
        motion = generate(GaitSpec(verb="stand", motif="neutral", period=8,
                                   phase=0.0, speed=0.0, length=12, seed=1,
                                   jitter=0.0))
        assert jitter(motion) == pytest.approx(0.0, abs=1e-20)

    def test_frame_shuffled_copy_is_jitterier(self, rng):
        motion = _walk(length=24, seed=3)
        shuffled = motion.with_features(motion.features[rng.permutation(24)])
        assert jitter(shuffled) > jitter(motion)


class TestFrechet:
    def test_same_set_is_zero(self):
        motions = [_walk(seed=s, phase=s * 0.17) for s in range(6)]
        assert frechet_feature_distance(motions, motions) <= 1e-6

    def test_mean_shift_closed_form(self, rng):
        cov = np.eye(3) * 0.5
        mu = np.zeros(3)
        delta = np.array([1.0, -2.0, 0.5])
        d = frechet_gaussian(mu, cov, mu + delta, cov)
        assert d == pytest.approx(float(delta @ delta), abs=1e-6)

    def test_matches_direct_formula_on_fitted_moments(self, rng):
        a = rng.standard_normal((200, 4)) @ rng.standard_normal((4, 4))
        b = rng.standard_normal((220, 4)) @ rng.standard_normal((4, 4)) + 0.3
        mu_a, cov_a = a.mean(axis=0), np.cov(a, rowvar=False)
        mu_b, cov_b = b.mean(axis=0), np.cov(b, rowvar=False)
        mine = frechet_gaussian(mu_a, cov_a, mu_b, cov_b)
        # independent oracle via eigen-decomposition of the product
        evals = np.linalg.eigvals(cov_a @ cov_b)
        cross = np.sqrt(np.maximum(evals.real, 0)).sum()
        direct = float((mu_a - mu_b) @ (mu_a - mu_b)
                       + np.trace(cov_a) + np.trace(cov_b) - 2 * cross)
        assert mine == pytest.approx(direct, abs=1e-8)

    def test_symmetry(self, rng):
        a = [_walk(seed=s) for s in range(5)]
        b = [_walk(seed=s + 10, motif="wave") for s in range(5)]
        assert frechet_feature_distance(a, b) == \
            pytest.approx(frechet_feature_distance(b, a), abs=1e-8)
        assert frechet_feature_distance(a, b) > 0

    def test_singular_covariance_gets_ridge(self):
        mu = np.zeros(2)
        cov = np.zeros((2, 2))
        assert frechet_gaussian(mu, cov, mu, cov) == pytest.approx(0.0, abs=1e-9)


class TestMotifClassifier:
    def test_descriptor_is_32_dim(self):
        assert motion_descriptor(_walk()).shape == (32,)

    def test_classifier_on_raw_motions(self, corpus240):
        train = [s for s in corpus240.samples if s.split == "train"]
        clf = MotifClassifier.fit([s.motion for s in train],
                                  [s.spec.motif for s in train])
        test = [s for s in corpus240.samples if s.split == "test"]
        top1, top3 = motif_precision([s.motion for s in test],
                                     [s.spec.motif for s in test], clf)
        assert top1 >= 0.95
        assert top3 >= top1

    def test_random_labels_near_chance(self, corpus240, rng):
        train = [s for s in corpus240.samples if s.split == "train"]
        clf = MotifClassifier.fit([s.motion for s in train],
                                  [s.spec.motif for s in train])
        test = [s for s in corpus240.samples if s.split == "test"]
        motifs = sorted({s.spec.motif for s in train})
        shuffled = [motifs[i] for i in rng.integers(0, len(motifs), size=len(test))]
        top1, _ = motif_precision([s.motion for s in test], shuffled, clf)
        assert abs(top1 - 1.0 / len(motifs)) <= 0.25


class TestResultsIo:
    def test_csv_round_trip(self, tmp_path):
        rows = [{"pair_id": "pair0000", "method": "momo",
                 "foot_contact_sim": 0.8, "follower_rot_sim": 0.9,
                 "follower_loc_sim": 0.85, "frechet_desc": None,
                 "motif_top1": 1.0, "motif_top3": 1.0, "jitter": 0.0125}]
        path = str(tmp_path / "r.csv")
        write_results_csv(path, rows)
        assert read_results_csv(path) == rows

    def test_aggregate_is_exact_mean(self):
        rows = [
            {"pair_id": "a", "method": "m", "foot_contact_sim": 0.5,
             "follower_rot_sim": 1.0, "follower_loc_sim": 0.0,
             "frechet_desc": None, "motif_top1": 1.0, "motif_top3": 1.0,
             "jitter": 2.0},
            {"pair_id": "b", "method": "m", "foot_contact_sim": 0.7,
             "follower_rot_sim": 0.5, "follower_loc_sim": 1.0,
             "frechet_desc": None, "motif_top1": 0.0, "motif_top3": 1.0,
             "jitter": 4.0},
        ]
        agg = aggregate_results(rows, frechet=1.25)
        assert agg["foot_contact_sim"] == (0.5 + 0.7) / 2
        assert agg["follower_rot_sim"] == 0.75
        assert agg["jitter"] == 3.0
        assert agg["frechet_desc"] == 1.25
        assert agg["pairs"] == 2

    def test_empty_pairs_no_error(self, tmp_path, corpus240):
        rows, agg = run_benchmark([], "nn-motion", corpus240, str(tmp_path))
        assert rows == []
        assert agg["pairs"] == 0


class TestRunBenchmark:
    def test_nn_motion_run_and_resume(self, tmp_path, corpus240):
        texts = [s.text for s in corpus240.samples]
        pairs = build_benchmark(texts, cap=2, limit=4)
        assert len(pairs) == 4
        out_a = str(tmp_path / "a")
        rows_a, agg_a = run_benchmark(pairs, "nn-motion", corpus240, out_a)
        assert all(r["follower_rot_sim"] == 1.0 for r in rows_a)
        assert all(r["follower_loc_sim"] == 1.0 for r in rows_a)

        # partial run then resume must reproduce the uninterrupted results
        out_b = str(tmp_path / "b")
        run_benchmark(pairs[:2], "nn-motion", corpus240, out_b)
        rows_b, agg_b = run_benchmark(pairs, "nn-motion", corpus240, out_b)
        assert rows_b == rows_a
        agg_a.pop("pairs"), agg_b.pop("pairs")
        assert agg_b == agg_a
        csv_a = (tmp_path / "a" / "results.csv").read_text()
        csv_b = (tmp_path / "b" / "results.csv").read_text()
        assert csv_a == csv_b
        agg_file_a = (tmp_path / "a" / "aggregate.json").read_text()
        agg_file_b = (tmp_path / "b" / "aggregate.json").read_text()
        assert agg_file_a == agg_file_b


def test_evaluate_pair_fields(corpus240):
    train = [s for s in corpus240.samples if s.split == "train"]
    clf = MotifClassifier.fit([s.motion for s in train[:60]],
                              [s.spec.motif for s in train[:60]])
    leader = _walk(seed=1)
    follower = _walk(motif="arms-up", seed=2)
    out = follower.with_features(follower.features[:leader.length])
    row = evaluate_pair(out, leader, follower, "arms-up", clf)
    assert set(row) == {"foot_contact_sim", "follower_rot_sim", "follower_loc_sim",
                        "frechet_desc", "motif_top1", "motif_top3", "jitter"}
    assert row["follower_rot_sim"] == 1.0

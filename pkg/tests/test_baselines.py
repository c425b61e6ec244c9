"""Nearest-neighbor baselines."""
import numpy as np
import pytest

from momo.baselines import nn_latent, nn_motion_space, nn_softmax
from momo.diffusion import SamplerConfig
from momo.synthgen import GaitSpec, generate
from momo.transfer import TransferSource


def _walk(length=12, period=8, motif="neutral", seed=1, phase=0.0):
    return generate(GaitSpec(verb="walk", motif=motif, period=period, phase=phase,
                             speed=0.02, length=length, seed=seed, jitter=0.01))


class TestNnMotionSpace:
    def test_identical_motions_copy_through(self):
        motion = _walk()
        out = nn_motion_space(motion, motion)
        assert np.array_equal(out.features, motion.features)

    def test_single_follower_frame_repeats(self):
        leader = _walk(length=12)
        follower = leader.with_features(leader.features[3:4])
        out = nn_motion_space(leader, follower)
        assert out.length == 12
        assert np.array_equal(out.features, np.tile(leader.features[3:4], (12, 1)))

    def test_exhaustive_scan_oracle(self, rng):
        leader = _walk(length=12, seed=5)
        follower = _walk(length=15, motif="wave", seed=6, phase=0.4)
        out = nn_motion_space(leader, follower)
        lf = leader.features[:, 3:]
        ff = follower.features[:, 3:]
        for n in range(12):
            dists = ((ff - lf[n]) ** 2).sum(axis=1)
            best = dists.min()
            chosen = ((out.features[n, 3:] - lf[n]) ** 2).sum()
            assert chosen <= best + 1e-12

    def test_output_rows_are_follower_rows(self):
        leader = _walk(length=10, seed=2)
        follower = _walk(length=13, motif="chicken", seed=3)
        out = nn_motion_space(leader, follower)
        rows = {tuple(r) for r in follower.features}
        assert all(tuple(r) in rows for r in out.features)


class TestNnSoftmax:
    def test_small_temperature_converges_to_hard_nn(self):
        leader = _walk(length=10, seed=2)
        follower = _walk(length=13, motif="arms-up", seed=3, phase=0.3)
        hard = nn_motion_space(leader, follower)
        soft = nn_softmax(leader, follower, temperature=1e-6)
        assert np.abs(soft.features - hard.features).max() < 1e-6

    def test_large_temperature_converges_to_mean(self):
        leader = _walk(length=10, seed=2)
        follower = _walk(length=13, motif="arms-up", seed=3)
        soft = nn_softmax(leader, follower, temperature=1e9)
        mean = follower.features.mean(axis=0)
        assert np.abs(soft.features - mean).max() < 1e-6

    def test_matches_direct_weighted_sum(self):
        leader = _walk(length=8, seed=4)
        follower = _walk(length=11, motif="wave", seed=5)
        out = nn_softmax(leader, follower, temperature=1.0)
        lf = leader.features[:, 3:]
        ff = follower.features[:, 3:]
        d = ((lf[:, None, :] - ff[None, :, :]) ** 2).sum(axis=2)
        logits = -d / 1.0
        e = np.exp(logits - logits.max(axis=1, keepdims=True))
        w = e / e.sum(axis=1, keepdims=True)
        assert np.abs(out.features - w @ follower.features).max() < 1e-9

    def test_convex_hull_property(self):
        leader = _walk(length=9, seed=7)
        follower = _walk(length=12, motif="crouch", seed=8)
        out = nn_softmax(leader, follower, temperature=2.0)
        lo = follower.features.min(axis=0) - 1e-12
        hi = follower.features.max(axis=0) + 1e-12
        assert np.all(out.features >= lo)
        assert np.all(out.features <= hi)

    def test_temperature_positive(self):
        with pytest.raises(ValueError):
            nn_softmax(_walk(), _walk(), temperature=0.0)


class TestNnLatent:
    def test_single_follower_frame_equals_soft_injection(self, tiny_model, schedule20):
        leader = TransferSource(prompt="a person walks", seed=1, length=8)
        follower_motion = _walk(length=12, motif="arms-up", seed=2)
        follower = TransferSource(motion=follower_motion.with_features(
            follower_motion.features[4:5]))
        out = nn_latent(tiny_model, schedule20, leader, follower, layer=1, step=6,
                        sampler=SamplerConfig(guidance_scale=2.5, seed=1))
        assert out.length == 8

    def test_layer_step_bounds(self, tiny_model, schedule20):
        leader = TransferSource(prompt="a person walks", seed=1, length=6)
        follower = TransferSource(prompt="a person runs", seed=2, length=6)
        with pytest.raises(ValueError):
            nn_latent(tiny_model, schedule20, leader, follower, layer=99, step=5)
        with pytest.raises(ValueError):
            nn_latent(tiny_model, schedule20, leader, follower, layer=0, step=99)

    def test_deterministic(self, tiny_model, schedule20):
        leader = TransferSource(prompt="a person walks", seed=3, length=7)
        follower = TransferSource(prompt="a person runs", seed=4, length=9)
        a = nn_latent(tiny_model, schedule20, leader, follower, layer=1, step=6)
        b = nn_latent(tiny_model, schedule20, leader, follower, layer=1, step=6)
        assert np.array_equal(a.features, b.features)

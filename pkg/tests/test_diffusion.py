"""Diffusion: schedule, forward process, guidance, DDIM loops, training."""
import math

import numpy as np
import pytest

from momo.denoiser import Denoiser, DenoiserConfig, init_weights
from momo.diffusion import (
    NoiseSchedule,
    SamplerConfig,
    TrainConfig,
    build_schedule,
    ddim_invert,
    ddim_invert_step,
    ddim_step,
    forward_diffuse,
    guide,
    invert_x0,
    model_predictor,
    sample,
    sample_x0,
    train,
)
from momo.motion import default_skeleton, feature_size
from momo.synthgen import GaitSpec, build_corpus, corpus_vocab, generate


class TestSchedule:
    def test_alpha_near_one_at_step_zero(self):
        s = build_schedule(100, "cosine")
        assert s.alphas[0] > 0.99
        assert s.alpha_bars[0] == pytest.approx(s.alphas[0])

    @pytest.mark.parametrize("steps", [10, 100, 1000])
    def test_alpha_bar_strictly_decreasing(self, steps):
        s = build_schedule(steps, "cosine")
        assert np.all(np.diff(s.alpha_bars) < 0)
        assert np.all((s.alphas > 0) & (s.alphas < 1))

    def test_alpha_bar_matches_closed_form(self):
        s = build_schedule(100, "cosine")
        s0 = 0.008

        def f(t):
            return math.cos(((t / 100) + s0) / (1 + s0) * math.pi / 2) ** 2

        assert s.alpha_bars[50] == pytest.approx(f(51) / f(0), abs=1e-12)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            build_schedule(100, "quadratic")

    def test_linear_supported(self):
        s = build_schedule(50, "linear")
        assert np.all(np.diff(s.alpha_bars) < 0)


class TestForwardDiffuse:
    def test_alpha_bar_one_returns_x0(self, rng):
        s = NoiseSchedule(kind="test", alphas=np.array([1.0]),
                          alpha_bars=np.array([1.0]))
        x0 = rng.standard_normal((3, 4))
        assert np.array_equal(forward_diffuse(x0, 0, np.zeros_like(x0) + 9.0, s), x0)

    def test_alpha_bar_zero_returns_noise(self, rng):
        s = NoiseSchedule(kind="test", alphas=np.array([0.0]),
                          alpha_bars=np.array([0.0]))
        x0 = rng.standard_normal((3, 4))
        eps = rng.standard_normal((3, 4))
        assert np.array_equal(forward_diffuse(x0, 0, eps, s), eps)

    def test_monte_carlo_moments(self, rng):
        s = build_schedule(100, "cosine")
        t = 40
        draws = 10_000
        x0 = np.full((1, 3), 0.7)
        noise = rng.standard_normal((draws, 3))
        xt = np.stack([forward_diffuse(x0, t, noise[i:i + 1], s)[0]
                       for i in range(draws)])
        ab = s.alpha_bars[t]
        se_mean = math.sqrt((1 - ab) / draws)
        se_var = (1 - ab) * math.sqrt(2.0 / draws)
        assert np.abs(xt.mean(axis=0) - math.sqrt(ab) * 0.7).max() <= 3 * se_mean
        assert np.abs(xt.var(axis=0) - (1 - ab)).max() <= 3 * se_var

    def test_shape_mismatch(self, rng):
        s = build_schedule(10, "cosine")
        with pytest.raises(ValueError):
            forward_diffuse(np.zeros((2, 3)), 1, np.zeros((3, 2)), s)


class TestGuide:
    def test_scale_one_returns_cond_exactly(self, rng):
        c, u = rng.standard_normal((4, 4)), rng.standard_normal((4, 4))
        assert np.array_equal(guide(c, u, 1.0), c)

    def test_scale_zero_returns_uncond_exactly(self, rng):
        c, u = rng.standard_normal((4, 4)), rng.standard_normal((4, 4))
        assert np.array_equal(guide(c, u, 0.0), u)

    def test_matches_linear_formula(self, rng):
        c, u = rng.standard_normal((4, 4)), rng.standard_normal((4, 4))
        assert np.allclose(guide(c, u, 2.5), u + 2.5 * (c - u), atol=1e-15)


class TestDdimStep:
    def test_equal_alpha_bars_is_identity(self, rng):
        s = NoiseSchedule(kind="test", alphas=np.array([0.9, 1.0]),
                          alpha_bars=np.array([0.5, 0.5]))
        x = rng.standard_normal((3, 3))
        x0 = rng.standard_normal((3, 3))
        assert np.abs(ddim_step(x, x0, 1, s) - x).max() < 1e-12

    def test_matches_direct_formula(self, rng):
        s = build_schedule(100, "cosine")
        t = 37
        x = rng.standard_normal((5, 4))
        x0 = rng.standard_normal((5, 4))
        eps = (x - math.sqrt(s.alpha_bars[t]) * x0) / math.sqrt(1 - s.alpha_bars[t])
        expected = math.sqrt(s.alpha_bars[t - 1]) * x0 \
            + math.sqrt(1 - s.alpha_bars[t - 1]) * eps
        assert np.allclose(ddim_step(x, x0, t, s), expected, atol=1e-15)

    def test_true_x0_oracle_lands_exactly(self, rng):
        s = build_schedule(100, "cosine")
        x0_true = rng.standard_normal((6, 5))
        out = sample_x0(lambda x, t: (x0_true, x0_true), s,
                        rng.standard_normal((6, 5)), guidance_scale=2.5)
        assert np.abs(out - x0_true).max() <= 1e-9

    def test_alpha_bar_one_guarded(self, rng):
        s = NoiseSchedule(kind="test", alphas=np.array([1.0, 1.0]),
                          alpha_bars=np.array([1.0, 1.0]))
        with pytest.raises(ValueError):
            ddim_step(np.zeros((2, 2)), np.zeros((2, 2)), 1, s)
        with pytest.raises(ValueError):
            ddim_invert_step(np.zeros((2, 2)), np.zeros((2, 2)), 0, s)

    def test_t_zero_rejected(self, rng):
        s = build_schedule(10, "cosine")
        with pytest.raises(ValueError):
            ddim_step(np.zeros((2, 2)), np.zeros((2, 2)), 0, s)


class TestInversion:
    def test_constant_predictor_round_trip_exact(self, rng):
        s = build_schedule(100, "cosine")
        c = rng.standard_normal((7, 5))
        x0 = rng.standard_normal((7, 5))
        trajectory = invert_x0(lambda x, t: c, s, x0)
        assert len(trajectory) == 100
        back = sample_x0(lambda x, t: (c, c), s, trajectory[-1],
                         guidance_scale=1.0, final_denoise=False)
        assert np.abs(back - x0).max() <= 1e-9

    def test_true_x0_oracle_round_trip_with_final_denoise(self, rng):
        s = build_schedule(100, "cosine")
        x0 = rng.standard_normal((7, 5))
        trajectory = invert_x0(lambda x, t: x0, s, x0)
        back = sample_x0(lambda x, t: (x0, x0), s, trajectory[-1], guidance_scale=1.0)
        assert np.abs(back - x0).max() <= 1e-9

    def test_generation_inversion_consistency_oracle(self, rng):
        # sampling with stride 1 then inverting recovers the top noise level
        s = build_schedule(100, "cosine")
        c = rng.standard_normal((4, 3))
        x_top = rng.standard_normal((4, 3))
        x0 = sample_x0(lambda x, t: (c, c), s, x_top, guidance_scale=1.0,
                       final_denoise=False)
        trajectory = invert_x0(lambda x, t: c, s, x0)
        rel = np.linalg.norm(trajectory[-1] - x_top) / np.linalg.norm(x_top)
        assert rel <= 1e-9


class TestSampling:
    def test_same_seed_bitwise_identical(self, tiny_model, schedule20):
        a = sample(tiny_model, schedule20, "a person walks", 8, SamplerConfig(seed=4))
        b = sample(tiny_model, schedule20, "a person walks", 8, SamplerConfig(seed=4))
        assert np.array_equal(a.features, b.features)

    def test_given_noise_ignores_seed(self, tiny_model, schedule20, rng):
        x_T = rng.standard_normal((8, tiny_model.config.feature_size))
        a = sample(tiny_model, schedule20, "a person walks", 8,
                   SamplerConfig(seed=1), x_T=x_T)
        b = sample(tiny_model, schedule20, "a person walks", 8,
                   SamplerConfig(seed=2), x_T=x_T)
        assert np.array_equal(a.features, b.features)

    def test_guidance_one_equals_cond_only_run(self, tiny_model, schedule20, rng):
        x_T = rng.standard_normal((6, tiny_model.config.feature_size))
        enc = tiny_model.encode_prompt("a person runs")
        full = sample_x0(model_predictor(tiny_model, enc), schedule20, x_T,
                         guidance_scale=1.0)

        def cond_only(x, t):
            out, _ = tiny_model.denoise(x, t, enc)
            return out, out

        alone = sample_x0(cond_only, schedule20, x_T, guidance_scale=1.0)
        assert np.abs(full - alone).max() <= 1e-9


class TestTraining:
    def test_overfit_single_sample(self):
        motion = generate(GaitSpec(verb="walk", motif="arms-up", period=12,
                                   phase=0.0, speed=0.02, length=24, seed=3,
                                   jitter=0.0))
        config = DenoiserConfig(vocab=corpus_vocab(), feature_size=feature_size(8),
                                layers=2, dim=32, heads=4, ff_dim=48, steps=20)
        model = Denoiser(config, init_weights(config, seed=2), default_skeleton())
        schedule = build_schedule(20, "cosine")
        result = train(model, [(motion, motion.text)], schedule,
                       TrainConfig(batch_size=4, lr=1e-3, steps=500,
                                   cond_dropout=0.1, seed=0),
                       log_every=10)
        losses = [v for _, v in result.loss_curve]
        initial = losses[0]
        final = float(np.mean(losses[-5:]))
        assert final < 0.10 * initial

    def test_zero_dropout_null_embedding_untouched(self, corpus240):
        config = DenoiserConfig(vocab=corpus_vocab(), feature_size=feature_size(8),
                                layers=2, dim=16, heads=2, ff_dim=24, steps=10)
        model = Denoiser(config, init_weights(config, seed=2), default_skeleton())
        null_row_before = model.weights["tok_emb"][0].copy()
        schedule = build_schedule(10, "cosine")
        data = [(s.motion, s.text) for s in corpus240.samples[:4]]
        train(model, data, schedule,
              TrainConfig(batch_size=2, lr=1e-3, steps=5, cond_dropout=0.0, seed=0))
        assert np.array_equal(model.weights["tok_emb"][0], null_row_before)

    def test_fixed_seed_identical_loss_curve(self, corpus240):
        def run():
            config = DenoiserConfig(vocab=corpus_vocab(), feature_size=feature_size(8),
                                    layers=2, dim=16, heads=2, ff_dim=24, steps=10)
            model = Denoiser(config, init_weights(config, seed=2), default_skeleton())
            schedule = build_schedule(10, "cosine")
            data = [(s.motion, s.text) for s in corpus240.samples[:6]]
            result = train(model, data, schedule,
                           TrainConfig(batch_size=2, lr=1e-3, steps=8,
                                       cond_dropout=0.2, seed=11), log_every=1)
            return result.loss_curve

        assert run() == run()

    def test_empty_corpus_rejected(self, tiny_model, schedule20):
        with pytest.raises(ValueError):
            train(tiny_model, [], schedule20, TrainConfig(steps=1))


class TestModelInversion:
    def test_inversion_uses_motion_prompt_and_stores_trajectory(
            self, tiny_model, schedule20):
        motion = generate(GaitSpec(verb="walk", motif="neutral", period=12,
                                   phase=0.0, speed=0.02, length=12, seed=1,
                                   jitter=0.0))
        trajectory = ddim_invert(tiny_model, schedule20, motion)
        assert len(trajectory) == schedule20.steps
        assert trajectory[0].shape == (12, tiny_model.config.feature_size)
        again = ddim_invert(tiny_model, schedule20, motion)
        for a, b in zip(trajectory, again):
            assert np.array_equal(a, b)

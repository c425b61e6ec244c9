"""Nearest-neighbor transfer baselines: motion space, softmax, latent space.

Distances for the motion-space variants run over pose features with the root
velocity channels excluded, so trajectory differences do not dominate. The
latent variant picks, per leader frame, the follower frame with the highest
query-key activation at one (layer, step) and substitutes that frame's value
row during a single hard injection, then finishes standard denoising.
"""
from __future__ import annotations

import numpy as np

from .denoiser import Denoiser, Injection
from .diffusion import NoiseSchedule, SamplerConfig, ddim_step, guide, invert_x0
from .motion import Motion
from .numerics import Array, softmax
from .transfer import TransferSource


def _pose_distance_features(motion: Motion) -> Array:
    # drop root yaw/linear velocity channels (0..2)
    return motion.features[:, 3:]


def _pairwise_sq_dists(a: Array, b: Array) -> Array:
    a2 = (a * a).sum(axis=1, keepdims=True)
    b2 = (b * b).sum(axis=1)
    return np.maximum(a2 + b2 - 2.0 * a @ b.T, 0.0)


def nn_motion_space(leader: Motion, follower: Motion) -> Motion:
    """Copy, per leader frame, the closest follower frame (exact rows)."""
    d = _pairwise_sq_dists(_pose_distance_features(leader),
                           _pose_distance_features(follower))
    nearest = d.argmin(axis=1)
    feats = follower.features[nearest].copy()
    return Motion(features=feats, fps=leader.fps, skeleton=leader.skeleton,
                  text=follower.text)


def nn_softmax(leader: Motion, follower: Motion, temperature: float = 1.0) -> Motion:
    """Convex combination of follower frames weighted by softmax(-d^2 / tau)."""
    if temperature <= 0:
        raise ValueError("temperature must be > 0")
    d = _pairwise_sq_dists(_pose_distance_features(leader),
                           _pose_distance_features(follower))
    weights = softmax(-d / temperature)
    feats = weights @ follower.features
    return Motion(features=feats, fps=leader.fps, skeleton=leader.skeleton,
                  text=follower.text)


def _captured_source(model: Denoiser, schedule: NoiseSchedule,
                     source: TransferSource, layer: int, step: int,
                     sampler: SamplerConfig):
    """Top-level noise plus the (layer, step) self-attention capture.

    Inverted sources capture during the inversion pass; generated ones during
    their own guided generation (conditional branch).
    """
    captured: dict = {}
    enc = model.encode_prompt(source.text())
    null = model.null_encoding()

    if source.inverted:
        def predict_cond(x: Array, t: int) -> Array:
            out, _ = model.denoise(x, t, enc)
            return out

        trajectory = invert_x0(predict_cond, schedule, model.encode_motion(source.motion))
        _, ios = model.denoise(trajectory[step], step, enc, capture={layer})
        return trajectory[-1], ios[layer]

    rng = np.random.default_rng(source.seed)
    x = rng.standard_normal((source.length, model.config.feature_size))
    x_T = x.copy()
    for t in range(schedule.steps - 1, -1, -1):
        cond, ios = model.denoise(x, t, enc, capture={layer} if t == step else None)
        if t == step:
            captured.update(ios)
        uncond, _ = model.denoise(x, t, null)
        x0 = guide(cond, uncond, sampler.guidance_scale)
        x = x0 if t == 0 else ddim_step(x, x0, t, schedule)
    return x_T, captured[layer]


def nn_latent(model: Denoiser, schedule: NoiseSchedule,
              leader: TransferSource, follower: TransferSource,
              layer: int, step: int,
              sampler: SamplerConfig = SamplerConfig()) -> Motion:
    """Hard latent nearest-neighbor value substitution at one (layer, step)."""
    if not 0 <= layer < model.config.layers:
        raise ValueError(f"layer {layer} outside [0, {model.config.layers})")
    if not 0 <= step < schedule.steps:
        raise ValueError(f"step {step} outside [0, {schedule.steps})")

    x_T, ldr_io = _captured_source(model, schedule, leader, layer, step, sampler)
    _, flw_io = _captured_source(model, schedule, follower, layer, step, sampler)

    logits = ldr_io.q[1:] @ flw_io.k[1:].T
    hard = logits.argmax(axis=1)

    out_text = follower.text()
    enc = model.encode_prompt(out_text)
    null = model.null_encoding()
    x = x_T.copy()
    for t in range(schedule.steps - 1, -1, -1):
        inj = None
        if t == step:
            inj = {layer: Injection(q=ldr_io.q, k=flw_io.k, v=flw_io.v,
                                    hard_index=hard)}
        cond, _ = model.denoise(x, t, enc, inject=inj)
        uncond, _ = model.denoise(x, t, null, inject=inj)
        x0 = guide(cond, uncond, sampler.guidance_scale)
        x = x0 if t == 0 else ddim_step(x, x0, t, schedule)
    return model.decode_features(x, text=out_text)

"""Noise schedule, x0-prediction training, and deterministic DDIM machinery.

The model predicts the clean sample, so the DDIM update is written in x0
form: eps_hat = (x_t - sqrt(abar_t) x0_hat) / sqrt(1 - abar_t), then
x_prev = sqrt(abar_prev) x0_hat + sqrt(1 - abar_prev) eps_hat (eta = 0).
Inversion runs the same recursion upward with the guidance scale fixed at 1
(conditional prediction only), storing the full trajectory.

Samplers take a predictor callable (x_t, t) -> (x0_cond, x0_uncond) so the
integrators can be exercised with closed-form oracle predictors.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .denoiser import Denoiser, PromptEncoding
from .motion import Motion
from .numerics import Array, AdamState, Tape, Tensor, adam_step
from .numerics import add as tensor_add
from .numerics import scale as tensor_scale
from . import denoiser as _dn

Predictor = Callable[[Array, int], tuple[Array, Array]]


@dataclass(frozen=True)
class NoiseSchedule:
    kind: str
    alphas: Array        # (T,) per-step alpha_t in (0, 1)
    alpha_bars: Array    # (T,) cumulative products, strictly decreasing

    @property
    def steps(self) -> int:
        return len(self.alphas)


def build_schedule(steps: int, kind: str = "cosine") -> NoiseSchedule:
    """Cosine (squared-cosine ratio, s0=0.008) or linear schedule.

    The cosine ratio f(t)/f(0) equals 1 at t=0 by construction; per-step
    alphas are the consecutive ratios f(t+1)/f(t), clipped to >= 0.001, and
    alpha-bar is their running product, so alpha_bar_0 = alpha_0 < 1.
    """
    if steps < 2:
        raise ValueError("need at least 2 diffusion steps")
    if kind == "cosine":
        s0 = 0.008
        t = np.arange(steps + 1)
        f = np.cos(((t / steps) + s0) / (1.0 + s0) * math.pi / 2.0) ** 2
        alphas = np.clip(f[1:] / f[:-1], 0.001, None)
    elif kind == "linear":
        betas = np.linspace(1e-4, 0.05, steps)
        alphas = 1.0 - betas
    else:
        raise ValueError(f"unknown schedule kind {kind!r}")
    return NoiseSchedule(kind=kind, alphas=alphas, alpha_bars=np.cumprod(alphas))


def forward_diffuse(x0: Array, t: int, noise: Array, schedule: NoiseSchedule) -> Array:
    """Closed-form x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) noise."""
    x0 = np.asarray(x0, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != x0.shape:
        raise ValueError(f"noise shape {noise.shape} != x0 shape {x0.shape}")
    ab = schedule.alpha_bars[t]
    return math.sqrt(ab) * x0 + math.sqrt(1.0 - ab) * noise


def guide(x0_cond: Array, x0_uncond: Array, s: float) -> Array:
    """Classifier-free guidance: uncond + s * (cond - uncond); exact at s in {0, 1}."""
    if np.asarray(x0_cond).shape != np.asarray(x0_uncond).shape:
        raise ValueError("guidance inputs must have equal shapes")
    if s == 1.0:
        return np.asarray(x0_cond, dtype=np.float64)
    if s == 0.0:
        return np.asarray(x0_uncond, dtype=np.float64)
    return x0_uncond + s * (x0_cond - x0_uncond)


def ddim_step(x_t: Array, x0_hat: Array, t: int, schedule: NoiseSchedule) -> Array:
    """Deterministic update from level t to t-1 (t >= 1)."""
    if t < 1:
        raise ValueError("ddim_step requires t >= 1; the final level is x0_hat itself")
    ab_t = schedule.alpha_bars[t]
    if ab_t >= 1.0:
        raise ValueError("alpha_bar at t equals 1; epsilon recovery would divide by zero")
    ab_prev = schedule.alpha_bars[t - 1]
    eps = (x_t - math.sqrt(ab_t) * x0_hat) / math.sqrt(1.0 - ab_t)
    return math.sqrt(ab_prev) * x0_hat + math.sqrt(1.0 - ab_prev) * eps


def ddim_invert_step(x_t: Array, x0_hat: Array, t: int, schedule: NoiseSchedule) -> Array:
    """Deterministic update from level t up to t+1 (t <= T-2)."""
    if t >= schedule.steps - 1:
        raise ValueError("cannot invert beyond the top noise level")
    ab_t = schedule.alpha_bars[t]
    if ab_t >= 1.0:
        raise ValueError("alpha_bar at t equals 1; epsilon recovery would divide by zero")
    ab_next = schedule.alpha_bars[t + 1]
    eps = (x_t - math.sqrt(ab_t) * x0_hat) / math.sqrt(1.0 - ab_t)
    return math.sqrt(ab_next) * x0_hat + math.sqrt(1.0 - ab_next) * eps


@dataclass(frozen=True)
class SamplerConfig:
    guidance_scale: float = 2.5
    stride: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.guidance_scale < 0:
            raise ValueError("guidance scale must be >= 0")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")


def _step_sequence(steps: int, stride: int) -> list[int]:
    seq = list(range(steps - 1, -1, -stride))
    if seq[-1] != 0:
        seq.append(0)
    return seq


def sample_x0(predictor: Predictor, schedule: NoiseSchedule, x_T: Array,
              guidance_scale: float = 2.5, stride: int = 1,
              final_denoise: bool = True,
              on_step: "Callable[[int, Array], None] | None" = None) -> Array:
    """Run the DDIM loop from the top noise level down to a clean sample.

    With final_denoise, the last step replaces the level-0 state with the
    guided prediction (the standard generation loop). Without it, the pure
    recursion result at level 0 is returned, which is the exact inverse of
    ddim_invert's upward recursion.
    """
    x = np.asarray(x_T, dtype=np.float64)
    seq = _step_sequence(schedule.steps, stride)
    for i, t in enumerate(seq):
        if t == 0 and not final_denoise:
            break
        cond, uncond = predictor(x, t)
        x0_hat = guide(cond, uncond, guidance_scale)
        if on_step is not None:
            on_step(t, x)
        if t == 0:
            x = x0_hat
        else:
            t_prev = seq[i + 1] if i + 1 < len(seq) else 0
            # strided jump: re-noise x0_hat to the next kept level
            if t_prev == t - 1:
                x = ddim_step(x, x0_hat, t, schedule)
            else:
                ab_t = schedule.alpha_bars[t]
                eps = (x - math.sqrt(ab_t) * x0_hat) / math.sqrt(1.0 - ab_t)
                ab_prev = schedule.alpha_bars[t_prev]
                x = math.sqrt(ab_prev) * x0_hat + math.sqrt(1.0 - ab_prev) * eps
    return x


def invert_x0(predictor_cond: Callable[[Array, int], Array],
              schedule: NoiseSchedule, x0: Array,
              mode: str = "exact",
              fixed_point_iters: int = 8,
              tol: float = 1e-8,
              on_step: "Callable[[int, Array], None] | None" = None) -> list[Array]:
    """DDIM inversion trajectory [x_0, x_1, ..., x_{T-1}], guidance fixed at 1.

    mode "recursion" runs the plain upward recursion (epsilon re-estimated at
    the current level). mode "exact" refines each upward step by a damped
    fixed-point iteration so that the downward sampler step maps the result
    back onto the current state, making inversion the exact inverse of
    stride-1 sampling up to the iteration residual. For state-independent
    predictors (the closed-form oracles) both modes coincide.
    """
    if mode not in ("exact", "recursion"):
        raise ValueError(f"unknown inversion mode {mode!r}")
    ab = schedule.alpha_bars
    x = np.asarray(x0, dtype=np.float64)
    trajectory = [x.copy()]
    for t in range(schedule.steps - 1):
        if on_step is not None:
            on_step(t, x)
        x0_hat = predictor_cond(x, t)
        x_next = ddim_invert_step(x, x0_hat, t, schedule)
        if mode == "exact":
            x_next = _solve_preimage(predictor_cond, x, x_next, t, ab,
                                     fixed_point_iters, tol)
        x = x_next
        trajectory.append(x.copy())
    return trajectory


def _solve_preimage(predictor_cond, y: Array, init: Array, t: int, ab: Array,
                    iters: int, tol: float) -> Array:
    """Damped fixed-point solve of ddim_step(x, m(x), t+1) = y for x.

    Proposals always start from the best iterate found so far; the step size
    grows on improvement and shrinks when the sampler residual worsens.
    """
    sq_t = math.sqrt(ab[t])
    sq_n = math.sqrt(ab[t + 1])
    ratio = math.sqrt(1.0 - ab[t + 1]) / math.sqrt(1.0 - ab[t])

    def residual_and_model(x: Array) -> tuple[float, Array]:
        m = predictor_cond(x, t + 1)
        down = sq_t * m + (x - sq_n * m) / ratio
        return float(np.sqrt(np.mean((down - y) ** 2))), m

    best_x = init
    best_res, best_m = residual_and_model(init)
    lam = 0.5
    for _ in range(iters - 1):
        if best_res < tol:
            break
        proposal = ratio * (y - sq_t * best_m) + sq_n * best_m
        x = best_x + lam * (proposal - best_x)
        res, m = residual_and_model(x)
        if res < best_res:
            best_x, best_res, best_m = x, res, m
            lam = min(1.0, lam * 1.5)
        else:
            lam *= 0.5
    return best_x


# -- model-backed convenience wrappers -------------------------------------


def model_predictor(model: Denoiser, enc: PromptEncoding) -> Predictor:
    null = model.null_encoding()

    def predict(x: Array, t: int) -> tuple[Array, Array]:
        cond, _ = model.denoise(x, t, enc)
        uncond, _ = model.denoise(x, t, null)
        return cond, uncond

    return predict


def sample(model: Denoiser, schedule: NoiseSchedule, prompt: str, length: int,
           config: SamplerConfig = SamplerConfig(),
           x_T: Array | None = None) -> Motion:
    """Generate a motion from a prompt (or a given top-level noise tensor)."""
    if x_T is None:
        rng = np.random.default_rng(config.seed)
        x_T = rng.standard_normal((length, model.config.feature_size))
    enc = model.encode_prompt(prompt)
    x0 = sample_x0(model_predictor(model, enc), schedule, x_T,
                   guidance_scale=config.guidance_scale, stride=config.stride)
    return model.decode_features(x0, text=prompt)


def ddim_invert(model: Denoiser, schedule: NoiseSchedule, motion: Motion,
                prompt: str | None = None, mode: str = "exact",
                fixed_point_iters: int = 8, tol: float = 1e-8) -> list[Array]:
    """Invert a real motion to its noise trajectory using its own prompt."""
    enc = model.encode_prompt(motion.text if prompt is None else prompt)

    def predict(x: Array, t: int) -> Array:
        out, _ = model.denoise(x, t, enc)
        return out

    return invert_x0(predict, schedule, model.encode_motion(motion), mode=mode,
                     fixed_point_iters=fixed_point_iters, tol=tol)


# -- training ---------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 16
    lr: float = 3e-4
    steps: int = 8000
    cond_dropout: float = 0.1
    seed: int = 10
    # last portion of training runs at lr * final_lr_scale to settle the
    # Adam parameter noise floor (cuts the low-noise-level prediction error)
    decay_at: float = 0.8
    final_lr_scale: float = 0.1

    def __post_init__(self) -> None:
        if not 0.0 <= self.cond_dropout < 1.0:
            raise ValueError("condition dropout must be in [0, 1)")
        if not 0.0 < self.decay_at <= 1.0:
            raise ValueError("decay_at must be in (0, 1]")

    def lr_at(self, step: int) -> float:
        if step >= self.decay_at * self.steps:
            return self.lr * self.final_lr_scale
        return self.lr


@dataclass
class TrainResult:
    model: Denoiser
    loss_curve: list[tuple[int, float]] = field(default_factory=list)


def fit_normalization(motions: list[Motion]) -> tuple[Array, Array]:
    stacked = np.concatenate([m.features for m in motions], axis=0)
    mean = stacked.mean(axis=0, keepdims=True)
    std = stacked.std(axis=0, keepdims=True)
    return mean, np.maximum(std, 1e-6)


def train(model: Denoiser, corpus: "list[tuple[Motion, str]]",
          schedule: NoiseSchedule, config: TrainConfig,
          log_every: int = 50,
          on_log: "Callable[[int, float], None] | None" = None) -> TrainResult:
    """Minimize the x0-prediction loss over the corpus; mutates model weights."""
    if not corpus:
        raise ValueError("corpus must be non-empty")
    rng = np.random.default_rng(config.seed)
    mean, std = fit_normalization([m for m, _ in corpus])
    model.weights["feat_mean"][:] = mean
    model.weights["feat_std"][:] = std

    encoded = [( (m.features - mean) / std, model.encode_prompt(text).token_ids)
               for m, text in corpus]
    trainable = {k: v for k, v in model.weights.items() if k not in _dn.NON_TRAINED}
    state = AdamState(trainable)
    curve: list[tuple[int, float]] = []

    for step in range(config.steps):
        tape = Tape()
        params = {k: Tensor(v, requires_grad=True) for k, v in trainable.items()}
        batch = []
        for _ in range(config.batch_size):
            x0, token_ids = encoded[rng.integers(len(encoded))]
            t = int(rng.integers(schedule.steps))
            noise = rng.standard_normal(x0.shape)
            x_t = forward_diffuse(x0, t, noise, schedule)
            if config.cond_dropout > 0.0 and rng.random() < config.cond_dropout:
                token_ids = ()
            batch.append((x0, x_t, t, token_ids))
        batch_loss = _dn.training_loss_batch(model.config, params, model.tables,
                                             batch, tape)
        value = float(batch_loss.value[0, 0])
        if not math.isfinite(value):
            raise RuntimeError(f"training aborted: non-finite loss at step {step}")
        tape.backward(batch_loss)
        adam_step(trainable, {k: params[k].grad for k in trainable}, state,
                  config.lr_at(step))
        if step % log_every == 0 or step == config.steps - 1:
            curve.append((step, value))
            if on_log is not None:
                on_log(step, value)
    return TrainResult(model=model, loss_curve=curve)


def write_loss_curve(path: str, curve: list[tuple[int, float]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("step,loss\n")
        for step, loss in curve:
            fh.write(f"{step},{loss!r}\n")

"""Zero-shot motion transfer: leader queries against follower keys/values.

Three streams (leader, follower, output) pass through the frozen denoiser at
every diffusion step. The output stream starts from the leader's noise and
carries the follower's prompt; inside the configured layer/step ranges its
self-attention frame rows are computed from injected leader Q and follower
K/V (condition-token attention stays standard by default). Guidance branches
are matched: the conditional output pass injects from conditional captures,
the unconditional pass from unconditional captures.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .denoiser import AttentionIO, Denoiser, Injection, InjectionError
from .diffusion import NoiseSchedule, SamplerConfig, ddim_step, guide, invert_x0
from .motion import Motion, rotate_about_vertical
from .numerics import Array, softmax


def mixed_attention(q_ldr: Array, k_flw: Array, v_flw: Array, ih_out: Array,
                    heads: int = 1) -> Array:
    """Residual attention of leader queries over follower keys/values.

    Returns ih_out + concat-over-heads of softmax(Q K^T / sqrt(C/heads)) V.
    Token counts of Q and K/V may differ; feature widths must match.
    """
    q = np.asarray(q_ldr, dtype=np.float64)
    k = np.asarray(k_flw, dtype=np.float64)
    v = np.asarray(v_flw, dtype=np.float64)
    ih = np.asarray(ih_out, dtype=np.float64)
    c = q.shape[1]
    if k.shape[1] != c or v.shape[1] != c or ih.shape[1] != c:
        raise InjectionError(f"mixed attention width mismatch: q {q.shape}, "
                             f"k {k.shape}, v {v.shape}, ih {ih.shape}")
    if k.shape[0] != v.shape[0]:
        raise InjectionError("follower K and V must have equal token counts")
    if ih.shape[0] != q.shape[0]:
        raise InjectionError("output hidden must match query token count")
    if c % heads != 0:
        raise InjectionError(f"width {c} not divisible by {heads} heads")
    dh = c // heads
    parts = []
    for h in range(heads):
        sl = slice(h * dh, (h + 1) * dh)
        scores = q[:, sl] @ k[:, sl].T / math.sqrt(dh)
        parts.append(softmax(scores) @ v[:, sl])
    return ih + np.concatenate(parts, axis=1)


@dataclass(frozen=True)
class TransferConfig:
    """Injection ranges are inclusive; an end below its start disables injection.

    Layers are 1-based (layer 1 is the first); steps are diffusion levels in
    [0, T-1], visited descending. Defaults mirror the reference recipe
    proportionally: layers 2..L and the middle 80% of the steps.
    """
    s_layer: int
    e_layer: int
    s_step: int
    e_step: int
    prompt_policy: str = "follower"           # follower | none | fixed:<text>
    direction: str = "off"                    # off | root-yaw-copy |
                                              # follower-rotation-augment | follower-multi-seed
    direction_angles: tuple[float, ...] = (0.0, math.pi / 2, -math.pi / 2)
    direction_seeds: int = 3
    scope: str = "frame-tokens-only"          # or all-tokens

    @staticmethod
    def defaults(layers: int, steps: int, **kwargs) -> "TransferConfig":
        return TransferConfig(
            s_layer=min(2, layers), e_layer=layers,
            s_step=math.ceil(0.1 * steps), e_step=min(math.ceil(0.9 * steps), steps - 1),
            **kwargs)

    @staticmethod
    def disabled(**kwargs) -> "TransferConfig":
        return TransferConfig(s_layer=1, e_layer=0, s_step=1, e_step=0, **kwargs)

    def validate(self, layers: int, steps: int) -> None:
        if self.s_layer <= self.e_layer and not (1 <= self.s_layer and self.e_layer <= layers):
            raise ValueError(f"layer range [{self.s_layer}, {self.e_layer}] outside [1, {layers}]")
        if self.s_step <= self.e_step and not (0 <= self.s_step and self.e_step <= steps - 1):
            raise ValueError(f"step range [{self.s_step}, {self.e_step}] outside [0, {steps - 1}]")
        if self.prompt_policy != "follower" and self.prompt_policy != "none" \
                and not self.prompt_policy.startswith("fixed:"):
            raise ValueError(f"unknown prompt policy {self.prompt_policy!r}")
        if self.direction not in ("off", "root-yaw-copy", "follower-rotation-augment",
                                  "follower-multi-seed"):
            raise ValueError(f"unknown direction mode {self.direction!r}")

    def inject_layers(self, layers: int) -> set[int]:
        """0-based layer indices receiving injection."""
        if self.s_layer > self.e_layer:
            return set()
        return set(range(self.s_layer - 1, min(self.e_layer, layers)))

    def inject_at(self, t: int) -> bool:
        return self.s_step <= t <= self.e_step


@dataclass(frozen=True)
class TransferSource:
    """Either a real motion (inverted) or a prompt + seed (generated)."""
    motion: Motion | None = None
    prompt: str | None = None
    seed: int = 0
    length: int = 48

    def __post_init__(self) -> None:
        if (self.motion is None) == (self.prompt is None):
            raise ValueError("source needs exactly one of motion or prompt")

    @property
    def inverted(self) -> bool:
        return self.motion is not None

    def text(self) -> str:
        return self.motion.text or "" if self.inverted else self.prompt


@dataclass
class _Stream:
    name: str
    x: Array
    enc: object
    scale: float


@dataclass
class TransferResult:
    output: Motion
    leader: Motion
    follower: Motion
    trace: dict = field(default_factory=dict)


def _source_noise(model: Denoiser, schedule: NoiseSchedule, source: TransferSource,
                  guidance_scale: float) -> tuple[Array, str, float]:
    """Top-level noise, prompt text, and stream guidance scale for a source."""
    if source.inverted:
        trajectory = invert_x0(_cond_predictor(model, source.text()), schedule,
                               model.encode_motion(source.motion))
        return trajectory[-1], source.text(), 1.0
    rng = np.random.default_rng(source.seed)
    x_T = rng.standard_normal((source.length, model.config.feature_size))
    return x_T, source.prompt, guidance_scale


def _cond_predictor(model: Denoiser, text: str):
    enc = model.encode_prompt(text)

    def predict(x: Array, t: int) -> Array:
        out, _ = model.denoise(x, t, enc)
        return out

    return predict


def _output_prompt(policy: str, follower_text: str) -> str:
    if policy == "follower":
        return follower_text
    if policy == "none":
        return ""
    return policy[len("fixed:"):]


def apply_root_yaw_copy(output: Motion, leader: Motion) -> Motion:
    if output.length != leader.length:
        raise ValueError(f"root-yaw-copy needs equal lengths, "
                         f"got {output.length} vs {leader.length}")
    feats = output.features.copy()
    feats[:, 0] = leader.features[:, 0]
    return output.with_features(feats)


def augment_follower_rotations(follower: Motion, angles) -> Motion:
    """Temporal concatenation of vertically rotated copies of the follower."""
    copies = [rotate_about_vertical(follower, float(a)) for a in angles]
    feats = np.concatenate([c.features for c in copies], axis=0)
    return Motion(features=feats, fps=follower.fps, skeleton=follower.skeleton,
                  text=follower.text)


def transfer(model: Denoiser, schedule: NoiseSchedule,
             leader: TransferSource, follower: TransferSource,
             config: TransferConfig, sampler: SamplerConfig = SamplerConfig(),
             trace_steps: "set[int] | None" = None) -> TransferResult:
    """Run the three-stream transfer loop and decode the output motion."""
    config.validate(model.config.layers, schedule.steps)
    layers = config.inject_layers(model.config.layers)

    if config.direction == "follower-rotation-augment":
        if not follower.inverted:
            raise ValueError("rotation augmentation needs an inverted follower motion")
        follower = TransferSource(motion=augment_follower_rotations(
            follower.motion, config.direction_angles))

    multi_seed = config.direction == "follower-multi-seed"
    if multi_seed and follower.inverted:
        raise ValueError("multi-seed direction control needs a generated follower")

    x_ldr, ldr_text, s_ldr = _source_noise(model, schedule, leader, sampler.guidance_scale)
    flw_sources = [follower] if not multi_seed else [
        TransferSource(prompt=follower.prompt, seed=follower.seed + i,
                       length=follower.length)
        for i in range(config.direction_seeds)]
    flw_states = []
    for src in flw_sources:
        x_f, f_text, s_f = _source_noise(model, schedule, src, sampler.guidance_scale)
        flw_states.append(_Stream("flw", x_f, model.encode_prompt(f_text), s_f))

    out_text = _output_prompt(config.prompt_policy, flw_sources[0].text())
    null = model.null_encoding()
    ldr = _Stream("ldr", x_ldr.copy(), model.encode_prompt(ldr_text), s_ldr)
    out = _Stream("out", x_ldr.copy(), model.encode_prompt(out_text),
                  sampler.guidance_scale)

    trace: dict = {}
    x0_ldr = x0_out = None
    x0_flw: Array | None = None
    for t in range(schedule.steps - 1, -1, -1):
        injecting = bool(layers) and config.inject_at(t)
        cap = layers if injecting else set()

        ldr_c, ios_lc = model.denoise(ldr.x, t, ldr.enc, capture=cap)
        ldr_u, ios_lu = model.denoise(ldr.x, t, null, capture=cap)
        flw_caps = []
        flw_x0 = []
        for stream in flw_states:
            f_c, ios_fc = model.denoise(stream.x, t, stream.enc, capture=cap)
            f_u, ios_fu = model.denoise(stream.x, t, null, capture=cap)
            flw_caps.append((ios_fc, ios_fu))
            flw_x0.append((f_c, f_u))

        inj_c = inj_u = None
        if injecting:
            inj_c = {l: Injection(q=ios_lc[l].q,
                                  k=_stack_kv(flw_caps, l, "k", 0),
                                  v=_stack_kv(flw_caps, l, "v", 0),
                                  scope=config.scope) for l in layers}
            inj_u = {l: Injection(q=ios_lu[l].q,
                                  k=_stack_kv(flw_caps, l, "k", 1),
                                  v=_stack_kv(flw_caps, l, "v", 1),
                                  scope=config.scope) for l in layers}
        out_c, _ = model.denoise(out.x, t, out.enc, inject=inj_c)
        out_u, _ = model.denoise(out.x, t, null, inject=inj_u)

        if trace_steps and t in trace_steps and injecting:
            for l in layers:
                for element in ("q", "k", "v"):
                    trace[("ldr", l, t, "cond", element)] = getattr(ios_lc[l], element)
                    trace[("flw", l, t, "cond", element)] = getattr(flw_caps[0][0][l], element)

        x0_ldr = guide(ldr_c, ldr_u, ldr.scale)
        x0_out = guide(out_c, out_u, out.scale)
        if t == 0:
            ldr.x, out.x = x0_ldr, x0_out
        else:
            ldr.x = ddim_step(ldr.x, x0_ldr, t, schedule)
            out.x = ddim_step(out.x, x0_out, t, schedule)
        for stream, (f_c, f_u) in zip(flw_states, flw_x0):
            x0_f = guide(f_c, f_u, stream.scale)
            stream.x = x0_f if t == 0 else ddim_step(stream.x, x0_f, t, schedule)
        if not np.all(np.isfinite(out.x)):
            raise RuntimeError(f"transfer aborted: non-finite output stream at step {t}")

    output = model.decode_features(out.x, text=out_text)
    leader_motion = leader.motion if leader.inverted \
        else model.decode_features(ldr.x, text=ldr_text)
    follower_motion = flw_sources[0].motion if flw_sources[0].inverted \
        else model.decode_features(flw_states[0].x, text=flw_sources[0].prompt)

    if config.direction == "root-yaw-copy":
        output = apply_root_yaw_copy(output, leader_motion)
    return TransferResult(output=output, leader=leader_motion,
                          follower=follower_motion, trace=trace)


def _stack_kv(flw_caps: list[tuple[dict[int, AttentionIO], dict[int, AttentionIO]]],
              layer: int, element: str, branch: int) -> Array:
    """Condition row of the first follower stream plus all frame rows."""
    mats = [getattr(caps[branch][layer], element) for caps in flw_caps]
    if len(mats) == 1:
        return mats[0]
    return np.concatenate([mats[0][:1]] + [m[1:] for m in mats], axis=0)

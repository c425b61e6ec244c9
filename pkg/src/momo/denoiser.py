"""Text-conditioned transformer denoiser with self-attention capture/injection.

Predicts the clean motion x0_hat from (x_t, t, prompt). The token sequence is one
condition token (pooled prompt embedding plus a projected timestep embedding)
followed by N frame tokens with sinusoidal positions. Each layer applies
self-attention (tap-aware), cross-attention over prompt word tokens, and a
feed-forward block, every sublayer residual with a trailing layer norm.

Self-attention follows the residual form OH = IH + concat-over-heads of
softmax(Q K^T / sqrt(C/h)) V, with Q = IH @ Wq + bq (and likewise K, V);
there is no extra output projection, so captured tensors satisfy those
equations exactly. All math runs in float64; checkpoints store float32.
"""
from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass

import numpy as np

from .motion import Motion, Skeleton
from .numerics import (
    Array,
    Tape,
    Tensor,
    add,
    concat_cols,
    concat_rows,
    embed,
    layer_norm_rows,
    matmul,
    mean_rows,
    mse,
    multihead_attention,
    relu,
    scale,
    slice_cols,
    slice_rows,
    softmax_rows,
    transpose,
)

CHECKPOINT_MAGIC = b"MOMO"
CHECKPOINT_VERSION = 1

NULL_TOKEN = 0
UNK_TOKEN = 1
RESERVED_TOKENS = ("<null>", "<unk>")


class InjectionError(ValueError):
    """Tap source does not fit the layer it is injected into."""


@dataclass(frozen=True)
class DenoiserConfig:
    vocab: tuple[str, ...]
    feature_size: int
    layers: int = 4
    dim: int = 64
    heads: int = 4
    ff_dim: int = 256
    max_frames: int = 256
    steps: int = 100

    def __post_init__(self) -> None:
        if self.layers < 2:
            raise ValueError("need at least 2 layers")
        if self.dim % self.heads != 0:
            raise ValueError(f"dim {self.dim} not divisible by heads {self.heads}")
        if self.vocab[:2] != RESERVED_TOKENS:
            raise ValueError("vocab must start with the reserved <null>, <unk> tokens")

    @property
    def head_dim(self) -> int:
        return self.dim // self.heads


@dataclass
class PromptEncoding:
    token_ids: tuple[int, ...]   # empty for the null condition
    pooled: Array                # (1, C) condition vector
    tokens: Array                # (K, C) per-token condition matrix

    @property
    def is_null(self) -> bool:
        return len(self.token_ids) == 0


@dataclass
class AttentionIO:
    """Captured self-attention tensors of one layer (condition row first)."""
    ih: Array                    # (1+N, C)
    q: Array
    k: Array
    v: Array
    oh: Array
    attn: Array | None           # (heads, 1+N, keys) row-stochastic, None under injection


@dataclass
class Injection:
    """Replacement sources for one layer's self-attention.

    q/k/v are full captured matrices (condition row + frame rows). With scope
    "frame-tokens-only" the condition row keeps its own standard attention and
    frame rows mix leader queries against [own condition key] + follower frame
    keys; with "all-tokens" every row uses the injected tensors directly.

    hard_index, when given, bypasses the softmax for frame rows: row n's
    attention result is v frame row hard_index[n] (the latent nearest-neighbor
    substitution); the condition row still computes standard self-attention.
    """
    q: Array
    k: Array
    v: Array
    scope: str = "frame-tokens-only"
    hard_index: "np.ndarray | None" = None


def sinusoid_table(length: int, dim: int) -> Array:
    pos = np.arange(length)[:, None]
    i = np.arange(dim // 2)[None, :]
    ang = pos / np.power(10000.0, 2.0 * i / dim)
    table = np.zeros((length, dim))
    table[:, 0::2] = np.sin(ang)
    table[:, 1::2] = np.cos(ang)
    return table


def tokenize(text: str, vocab_index: dict[str, int]) -> tuple[int, ...]:
    return tuple(vocab_index.get(w, UNK_TOKEN) for w in text.lower().split())


def _linear(rng: np.random.Generator, fan_in: int, fan_out: int) -> Array:
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def init_weights(config: DenoiserConfig, seed: int = 0) -> dict[str, Array]:
    rng = np.random.default_rng(seed)
    c, ff, f = config.dim, config.ff_dim, config.feature_size
    w: dict[str, Array] = {}
    w["tok_emb"] = rng.normal(0.0, 0.2, size=(len(config.vocab), c))
    w["time_w"] = _linear(rng, c, c)
    w["time_b"] = np.zeros((1, c))
    w["in_w"] = _linear(rng, f, c)
    w["in_b"] = np.zeros((1, c))
    for l in range(config.layers):
        for blk in ("sa", "ca"):
            for proj in ("wq", "wk", "wv"):
                w[f"l{l}.{blk}.{proj}"] = _linear(rng, c, c)
            for b in ("bq", "bk", "bv"):
                w[f"l{l}.{blk}.{b}"] = np.zeros((1, c))
        w[f"l{l}.ff.w1"] = _linear(rng, c, ff)
        w[f"l{l}.ff.b1"] = np.zeros((1, ff))
        w[f"l{l}.ff.w2"] = _linear(rng, ff, c)
        w[f"l{l}.ff.b2"] = np.zeros((1, c))
        for ln in ("ln1", "ln2", "ln3"):
            w[f"l{l}.{ln}.g"] = np.ones((1, c))
            w[f"l{l}.{ln}.b"] = np.zeros((1, c))
    w["out_w"] = rng.normal(0.0, 0.02, size=(c, f))
    w["out_b"] = np.zeros((1, f))
    return w


NON_TRAINED = ("feat_mean", "feat_std")


class Denoiser:
    """Frozen-weight inference wrapper; training drives _forward directly."""

    def __init__(self, config: DenoiserConfig, weights: dict[str, Array],
                 skeleton: Skeleton, fps: int = 20) -> None:
        self.config = config
        self.weights = {k: np.ascontiguousarray(np.asarray(v, dtype=np.float64))
                        for k, v in weights.items()}
        self.weights.setdefault("feat_mean", np.zeros((1, config.feature_size)))
        self.weights.setdefault("feat_std", np.ones((1, config.feature_size)))
        self.skeleton = skeleton
        self.fps = fps
        self.vocab_index = {w: i for i, w in enumerate(config.vocab)}
        self.tables = make_tables(config)
        self._params = {k: Tensor(v) for k, v in self.weights.items()}

    # -- prompts ---------------------------------------------------------

    def encode_prompt(self, text: str) -> PromptEncoding:
        ids = tokenize(text, self.vocab_index)
        emb = self.weights["tok_emb"]
        if ids:
            tokens = emb[list(ids)]
        else:
            tokens = emb[[NULL_TOKEN]]
        pooled = tokens.mean(axis=0, keepdims=True)
        return PromptEncoding(token_ids=ids, pooled=pooled.copy(), tokens=tokens.copy())

    def null_encoding(self) -> PromptEncoding:
        return self.encode_prompt("")

    # -- motion <-> model space -----------------------------------------

    def encode_motion(self, motion: Motion) -> Array:
        return (motion.features - self.weights["feat_mean"]) / self.weights["feat_std"]

    def decode_features(self, x: Array, text: str | None = None) -> Motion:
        feats = x * self.weights["feat_std"] + self.weights["feat_mean"]
        return Motion(features=feats, fps=self.fps, skeleton=self.skeleton, text=text)

    # -- denoising -------------------------------------------------------

    def denoise(self, x_t: Array, t: int, prompt: "PromptEncoding | str",
                capture: "set[int] | None" = None,
                inject: "dict[int, Injection] | None" = None,
                ) -> tuple[Array, dict[int, AttentionIO]]:
        """One x0_hat prediction pass. capture holds layer indices to record."""
        enc = self.encode_prompt(prompt) if isinstance(prompt, str) else prompt
        out, ios = _forward(self.config, self._params, self.tables, x_t, t,
                            enc.token_ids, tape=None, capture=capture,
                            inject=inject)
        return out.value, ios

    def checkpoint_hash(self) -> str:
        h = hashlib.sha256()
        for name in sorted(self.weights):
            h.update(name.encode())
            h.update(self.weights[name].astype("<f4").tobytes())
        return h.hexdigest()


def make_tables(config: DenoiserConfig) -> tuple[Array, Array]:
    """Constant sinusoidal tables: frame positions and timestep embeddings."""
    return (sinusoid_table(config.max_frames, config.dim),
            sinusoid_table(config.steps, config.dim))


def _forward(config: DenoiserConfig, params: dict[str, Tensor],
             tables: tuple[Array, Array],
             x_t: Array, t: int, token_ids: tuple[int, ...],
             tape: Tape | None = None,
             capture: "set[int] | None" = None,
             inject: "dict[int, Injection] | None" = None,
             ) -> tuple[Tensor, dict[int, AttentionIO]]:
    pe, time_table = tables
    n = np.asarray(x_t).shape[0]
    if n > pe.shape[0]:
        raise ValueError(f"motion length {n} exceeds max frames {pe.shape[0]}")
    if not 0 <= t < config.steps:
        raise ValueError(f"step {t} outside [0, {config.steps})")
    heads, dh = config.heads, config.head_dim
    inv_sqrt = 1.0 / math.sqrt(dh)
    inject = inject or {}
    capture = capture or set()

    ids = list(token_ids) if token_ids else [NULL_TOKEN]
    mem = embed(params["tok_emb"], ids, tape)                       # (K, C)
    pooled = mean_rows(mem, tape)                                    # (1, C)
    t_emb = add(matmul(Tensor(time_table[t:t + 1]), params["time_w"], tape),
                params["time_b"], tape)
    cond = add(pooled, t_emb, tape)                                  # (1, C)

    frames = add(matmul(Tensor(x_t), params["in_w"], tape), params["in_b"], tape)
    frames = add(frames, Tensor(pe[:n]), tape)
    x = concat_rows([cond, frames], tape)                            # (1+N, C)

    ios: dict[int, AttentionIO] = {}
    for l in range(config.layers):
        x = _self_attention(config, params, x, l, t, tape, capture, inject, ios,
                            heads, dh, inv_sqrt)
        x = _cross_attention(params, x, mem, l, tape, heads, dh, inv_sqrt)
        ff1 = relu(add(matmul(x, params[f"l{l}.ff.w1"], tape), params[f"l{l}.ff.b1"], tape), tape)
        ff2 = add(matmul(ff1, params[f"l{l}.ff.w2"], tape), params[f"l{l}.ff.b2"], tape)
        x = layer_norm_rows(add(x, ff2, tape), params[f"l{l}.ln3.g"], params[f"l{l}.ln3.b"], tape)

    frame_rows = slice_rows(x, 1, n + 1, tape)
    out = add(matmul(frame_rows, params["out_w"], tape), params["out_b"], tape)
    return out, ios


def _heads_of(m: Tensor, heads: int, dh: int, tape: Tape | None) -> list[Tensor]:
    return [slice_cols(m, h * dh, (h + 1) * dh, tape) for h in range(heads)]


def _self_attention(config: DenoiserConfig, params: dict[str, Tensor], x: Tensor,
                    l: int, t: int, tape: Tape | None, capture: set[int],
                    inject: dict[int, Injection], ios: dict[int, AttentionIO],
                    heads: int, dh: int, inv_sqrt: float) -> Tensor:
    ih = x
    q = add(matmul(ih, params[f"l{l}.sa.wq"], tape), params[f"l{l}.sa.bq"], tape)
    k = add(matmul(ih, params[f"l{l}.sa.wk"], tape), params[f"l{l}.sa.bk"], tape)
    v = add(matmul(ih, params[f"l{l}.sa.wv"], tape), params[f"l{l}.sa.bv"], tape)

    inj = inject.get(l)
    probs: Array | None = None
    if inj is None:
        attn_out, probs = multihead_attention(q, k, v, heads, tape)
    else:
        attn_out = _injected_attention(q, k, v, inj, l, t, heads, dh, inv_sqrt, tape)

    oh = add(ih, attn_out, tape)
    if l in capture:
        ios[l] = AttentionIO(
            ih=ih.value.copy(), q=q.value.copy(), k=k.value.copy(),
            v=v.value.copy(), oh=oh.value.copy(),
            attn=None if probs is None else probs.copy())
    return layer_norm_rows(oh, params[f"l{l}.ln1.g"], params[f"l{l}.ln1.b"], tape)


def _injected_attention(q: Tensor, k: Tensor, v: Tensor, inj: Injection,
                        l: int, t: int, heads: int, dh: int, inv_sqrt: float,
                        tape: Tape | None) -> Tensor:
    m = q.value.shape[0]                      # 1 + N_out tokens
    c = q.value.shape[1]
    for name, mat in (("q", inj.q), ("k", inj.k), ("v", inj.v)):
        if np.asarray(mat).ndim != 2 or np.asarray(mat).shape[1] != c:
            raise InjectionError(
                f"injection error at layer {l}, step {t}: {name} source shape "
                f"{np.asarray(mat).shape} incompatible with width {c}")
    if inj.k.shape[0] != inj.v.shape[0]:
        raise InjectionError(
            f"injection error at layer {l}, step {t}: K/V row counts differ")
    if inj.scope not in ("frame-tokens-only", "all-tokens"):
        raise InjectionError(f"injection error at layer {l}, step {t}: "
                             f"unknown scope {inj.scope!r}")

    if inj.hard_index is not None:
        idx = np.asarray(inj.hard_index, dtype=np.int64)
        if idx.shape != (m - 1,):
            raise InjectionError(
                f"injection error at layer {l}, step {t}: hard index length "
                f"{idx.shape} != frame count {m - 1}")
        if idx.min() < 0 or idx.max() >= inj.v.shape[0] - 1:
            raise InjectionError(
                f"injection error at layer {l}, step {t}: hard index out of range")
        cond_parts = []
        q_cond = slice_rows(q, 0, 1, tape)
        for h in range(heads):
            j0, j1 = h * dh, (h + 1) * dh
            kh_own = slice_cols(k, j0, j1, tape)
            vh_own = slice_cols(v, j0, j1, tape)
            qh_cond = slice_cols(q_cond, j0, j1, tape)
            a = softmax_rows(scale(matmul(qh_cond, _t(kh_own, tape), tape), inv_sqrt, tape), tape)
            cond_parts.append(matmul(a, vh_own, tape))
        cond_row = concat_cols(cond_parts, tape)
        frame_rows = Tensor(inj.v[1:][idx])
        return concat_rows([cond_row, frame_rows], tape)

    if inj.q.shape[0] != m:
        raise InjectionError(
            f"injection error at layer {l}, step {t}: query source has "
            f"{inj.q.shape[0]} rows, output stream has {m}")

    if inj.scope == "all-tokens":
        q_use = Tensor(inj.q)
        k_use = Tensor(inj.k)
        v_use = Tensor(inj.v)
        parts = []
        for qh, kh, vh in zip(_heads_of(q_use, heads, dh, tape),
                              _heads_of(k_use, heads, dh, tape),
                              _heads_of(v_use, heads, dh, tape)):
            a = softmax_rows(scale(matmul(qh, _t(kh, tape), tape), inv_sqrt, tape), tape)
            parts.append(matmul(a, vh, tape))
        return concat_cols(parts, tape)

    # frame-tokens-only: condition row keeps standard self-attention over the
    # output stream's own tokens; frame rows use leader queries against the
    # own condition key plus follower frame keys/values.
    q_frames = Tensor(inj.q[1:])
    k_mix = concat_rows([slice_rows(k, 0, 1, tape), Tensor(inj.k[1:])], tape)
    v_mix = concat_rows([slice_rows(v, 0, 1, tape), Tensor(inj.v[1:])], tape)

    cond_parts = []
    frame_parts = []
    q_cond = slice_rows(q, 0, 1, tape)
    for h in range(heads):
        j0, j1 = h * dh, (h + 1) * dh
        kh_own = slice_cols(k, j0, j1, tape)
        vh_own = slice_cols(v, j0, j1, tape)
        qh_cond = slice_cols(q_cond, j0, j1, tape)
        a_cond = softmax_rows(scale(matmul(qh_cond, _t(kh_own, tape), tape), inv_sqrt, tape), tape)
        cond_parts.append(matmul(a_cond, vh_own, tape))

        qh_f = slice_cols(q_frames, j0, j1, tape)
        kh_mix = slice_cols(k_mix, j0, j1, tape)
        vh_mix = slice_cols(v_mix, j0, j1, tape)
        a_f = softmax_rows(scale(matmul(qh_f, _t(kh_mix, tape), tape), inv_sqrt, tape), tape)
        frame_parts.append(matmul(a_f, vh_mix, tape))
    cond_row = concat_cols(cond_parts, tape)
    frame_rows = concat_cols(frame_parts, tape)
    return concat_rows([cond_row, frame_rows], tape)


def _cross_attention(params: dict[str, Tensor], x: Tensor, mem: Tensor, l: int,
                     tape: Tape | None, heads: int, dh: int, inv_sqrt: float) -> Tensor:
    cq = add(matmul(x, params[f"l{l}.ca.wq"], tape), params[f"l{l}.ca.bq"], tape)
    ck = add(matmul(mem, params[f"l{l}.ca.wk"], tape), params[f"l{l}.ca.bk"], tape)
    cv = add(matmul(mem, params[f"l{l}.ca.wv"], tape), params[f"l{l}.ca.bv"], tape)
    out, _ = multihead_attention(cq, ck, cv, heads, tape)
    return layer_norm_rows(add(x, out, tape), params[f"l{l}.ln2.g"], params[f"l{l}.ln2.b"], tape)


def _t(m: Tensor, tape: Tape | None) -> Tensor:
    return transpose(m, tape)


def training_loss(config: DenoiserConfig, params: dict[str, Tensor],
                  tables: tuple[Array, Array], x0: Array, x_t: Array, t: int,
                  token_ids: tuple[int, ...], tape: Tape) -> Tensor:
    """Mean-square x0-prediction loss for one sample."""
    pred, _ = _forward(config, params, tables, x_t, t, token_ids, tape=tape)
    return mse(pred, Tensor(x0), tape)


def training_loss_batch(config: DenoiserConfig, params: dict[str, Tensor],
                        tables: tuple[Array, Array],
                        batch: "list[tuple[Array, Array, int, tuple[int, ...]]]",
                        tape: Tape) -> Tensor:
    """Mean over the batch of per-sample x0-prediction losses.

    Samples are row-stacked so projections, layer norms and feed-forward
    blocks run as single matrix products; attention and cross-attention stay
    per sample, computing exactly the same math as the single-sample forward.
    batch entries are (x0, x_t, t, token_ids).
    """
    from .numerics import add as t_add
    from .numerics import scale as t_scale

    pe, time_table = tables
    heads, dh = config.heads, config.head_dim
    inv_sqrt = 1.0 / math.sqrt(dh)

    x_all = np.concatenate([b[1] for b in batch], axis=0)
    pe_all = np.concatenate([pe[:b[1].shape[0]] for b in batch], axis=0)
    frames_all = add(matmul(Tensor(x_all), params["in_w"], tape), params["in_b"], tape)
    frames_all = add(frames_all, Tensor(pe_all), tape)

    mems = []
    parts = []
    offset = 0
    for x0, x_t, t, token_ids in batch:
        if not 0 <= t < config.steps:
            raise ValueError(f"step {t} outside [0, {config.steps})")
        ids = list(token_ids) if token_ids else [NULL_TOKEN]
        mem = embed(params["tok_emb"], ids, tape)
        mems.append(mem)
        t_emb = add(matmul(Tensor(time_table[t:t + 1]), params["time_w"], tape),
                    params["time_b"], tape)
        parts.append(add(mean_rows(mem, tape), t_emb, tape))
        n = x_t.shape[0]
        parts.append(slice_rows(frames_all, offset, offset + n, tape))
        offset += n

    bounds = []
    start = 0
    for x0, x_t, _, _ in batch:
        m = 1 + x_t.shape[0]
        bounds.append((start, start + m))
        start += m
    x = concat_rows(parts, tape)

    for l in range(config.layers):
        ih = x
        q = add(matmul(ih, params[f"l{l}.sa.wq"], tape), params[f"l{l}.sa.bq"], tape)
        k = add(matmul(ih, params[f"l{l}.sa.wk"], tape), params[f"l{l}.sa.bk"], tape)
        v = add(matmul(ih, params[f"l{l}.sa.wv"], tape), params[f"l{l}.sa.bv"], tape)
        sample_outs = []
        for i0, i1 in bounds:
            qi = slice_rows(q, i0, i1, tape)
            ki = slice_rows(k, i0, i1, tape)
            vi = slice_rows(v, i0, i1, tape)
            out_i, _ = multihead_attention(qi, ki, vi, heads, tape)
            sample_outs.append(out_i)
        oh = add(ih, concat_rows(sample_outs, tape), tape)
        x = layer_norm_rows(oh, params[f"l{l}.ln1.g"], params[f"l{l}.ln1.b"], tape)

        cq = add(matmul(x, params[f"l{l}.ca.wq"], tape), params[f"l{l}.ca.bq"], tape)
        sample_outs = []
        for (i0, i1), mem in zip(bounds, mems):
            cqi = slice_rows(cq, i0, i1, tape)
            ck = add(matmul(mem, params[f"l{l}.ca.wk"], tape), params[f"l{l}.ca.bk"], tape)
            cv = add(matmul(mem, params[f"l{l}.ca.wv"], tape), params[f"l{l}.ca.bv"], tape)
            out_i, _ = multihead_attention(cqi, ck, cv, heads, tape)
            sample_outs.append(out_i)
        x = layer_norm_rows(add(x, concat_rows(sample_outs, tape), tape),
                            params[f"l{l}.ln2.g"], params[f"l{l}.ln2.b"], tape)

        ff1 = relu(add(matmul(x, params[f"l{l}.ff.w1"], tape), params[f"l{l}.ff.b1"], tape), tape)
        ff2 = add(matmul(ff1, params[f"l{l}.ff.w2"], tape), params[f"l{l}.ff.b2"], tape)
        x = layer_norm_rows(add(x, ff2, tape), params[f"l{l}.ln3.g"], params[f"l{l}.ln3.b"], tape)

    frame_parts = [slice_rows(x, i0 + 1, i1, tape) for i0, i1 in bounds]
    pred_all = add(matmul(concat_rows(frame_parts, tape), params["out_w"], tape),
                   params["out_b"], tape)
    total: Tensor | None = None
    offset = 0
    for x0, x_t, _, _ in batch:
        n = x_t.shape[0]
        pred = slice_rows(pred_all, offset, offset + n, tape)
        offset += n
        loss = mse(pred, Tensor(x0), tape)
        total = loss if total is None else t_add(total, loss, tape)
    return t_scale(total, 1.0 / len(batch), tape)


# -- checkpoint io --------------------------------------------------------


def config_to_dict(config: DenoiserConfig, skeleton: Skeleton, fps: int) -> dict:
    return {
        "vocab": list(config.vocab),
        "feature_size": config.feature_size,
        "layers": config.layers,
        "dim": config.dim,
        "heads": config.heads,
        "ff_dim": config.ff_dim,
        "max_frames": config.max_frames,
        "steps": config.steps,
        "fps": fps,
        "skeleton": {
            "parents": list(skeleton.parents),
            "offsets": [[float(v) for v in row] for row in skeleton.offsets],
            "foot_joints": list(skeleton.foot_joints),
        },
    }


def save_checkpoint(path: str, model: Denoiser) -> None:
    header = {
        "config": config_to_dict(model.config, model.skeleton, model.fps),
        "tensors": [{"name": name, "shape": list(model.weights[name].shape)}
                    for name in sorted(model.weights)],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for entry in header["tensors"]:
            fh.write(model.weights[entry["name"]].astype("<f4").tobytes())


def load_checkpoint(path: str) -> Denoiser:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"not a checkpoint: bad magic {magic!r}")
        version, = struct.unpack("<I", fh.read(4))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        hlen, = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        weights = {}
        for entry in header["tensors"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape))
            data = np.frombuffer(fh.read(count * 4), dtype="<f4")
            weights[entry["name"]] = data.reshape(shape).astype(np.float64)
    cfgd = header["config"]
    skel = Skeleton(parents=tuple(cfgd["skeleton"]["parents"]),
                    offsets=np.asarray(cfgd["skeleton"]["offsets"]),
                    foot_joints=tuple(cfgd["skeleton"]["foot_joints"]))
    config = DenoiserConfig(
        vocab=tuple(cfgd["vocab"]), feature_size=cfgd["feature_size"],
        layers=cfgd["layers"], dim=cfgd["dim"], heads=cfgd["heads"],
        ff_dim=cfgd["ff_dim"], max_frames=cfgd["max_frames"], steps=cfgd["steps"])
    return Denoiser(config, weights, skel, fps=cfgd["fps"])


def file_sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()

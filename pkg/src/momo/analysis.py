"""Attention-feature analysis: Q/K clustering, correspondence, attention maps.

Features come from the conditional branch of capture runs along DDIM
inversion trajectories (one C-vector per frame token). Clustering applies
PCA then K-Means with fixed seeds; purity compares majority-label fractions
weighted by cluster size. Correspondence reports, per leader frame, the
follower frame with the highest pre-softmax query-key activation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .denoiser import AttentionIO, Denoiser
from .diffusion import NoiseSchedule, invert_x0
from .motion import Motion
from .numerics import Array, KMeansModel, PcaModel, kmeans_fit, pca_fit, pca_project, softmax


class NotCapturedError(ValueError):
    """Requested layer/step has no capture available."""


@dataclass(frozen=True)
class AnalysisConfig:
    layer: int              # 0-based self-attention layer index
    step: int               # diffusion step t
    pca_dims: int = 10
    clusters: int = 10
    element: str = "q"      # "q" or "k"
    seed: int = 0

    @staticmethod
    def defaults(layers: int, steps: int, element: str = "q",
                 **kwargs) -> "AnalysisConfig":
        """Per-element clustering defaults.

        At desk scale the query/key role dominances peak at different depths:
        the outline (phase) structure of Q is strongest mid-stack at moderate
        noise, while the motif structure of K is strongest at the first
        layer, whose keys project near-raw frame content, at mid noise.
        """
        if element == "k":
            return AnalysisConfig(layer=0, step=round(0.5 * steps),
                                  element=element, **kwargs)
        return AnalysisConfig(layer=max(layers - 2, 0), step=round(0.3 * steps),
                              element=element, **kwargs)


def correspondence_defaults(layers: int, steps: int) -> tuple[int, int]:
    """(layer, step) for correspondence/attention maps: last layer, low noise."""
    return layers - 1, round(0.1 * steps)


def capture_layer(model: Denoiser, schedule: NoiseSchedule, motion: Motion,
                  layer: int, step: int) -> AttentionIO:
    """Conditional-branch self-attention capture at (layer, step) along inversion."""
    if not 0 <= layer < model.config.layers:
        raise NotCapturedError(f"layer {layer} outside [0, {model.config.layers})")
    if not 0 <= step < schedule.steps:
        raise NotCapturedError(f"step {step} outside [0, {schedule.steps})")
    enc = model.encode_prompt(motion.text or "")

    def predict(x: Array, t: int) -> Array:
        out, _ = model.denoise(x, t, enc)
        return out

    trajectory = invert_x0(predict, schedule, model.encode_motion(motion))
    _, ios = model.denoise(trajectory[step], step, enc, capture={layer})
    if layer not in ios:
        raise NotCapturedError(f"no capture recorded at layer {layer}, step {step}")
    return ios[layer]


def collect_features(model: Denoiser, schedule: NoiseSchedule,
                     motions: list[Motion], layer: int, step: int,
                     element: str = "q") -> tuple[Array, list[tuple[int, int]]]:
    """Per-frame feature vectors (frame tokens only) with (motion, frame) keys."""
    if element not in ("q", "k"):
        raise ValueError(f"element must be 'q' or 'k', got {element!r}")
    vectors = []
    keys = []
    for mi, motion in enumerate(motions):
        io = capture_layer(model, schedule, motion, layer, step)
        mat = getattr(io, element)[1:]   # drop the condition token row
        vectors.append(mat)
        keys.extend((mi, fi) for fi in range(mat.shape[0]))
    return np.concatenate(vectors, axis=0), keys


@dataclass
class ClusterResult:
    labels: np.ndarray                 # (total frames,)
    keys: list[tuple[int, int]]
    pca: PcaModel
    kmeans: KMeansModel
    temporal_correlation: Array        # |corr(component score, frame index)| per dim


def qk_cluster(model: Denoiser, schedule: NoiseSchedule, motions: list[Motion],
               config: AnalysisConfig) -> ClusterResult:
    features, keys = collect_features(model, schedule, motions,
                                      config.layer, config.step, config.element)
    pca = pca_fit(features, min(config.pca_dims, features.shape[1]))
    projected = pca_project(pca, features)
    km = kmeans_fit(projected, config.clusters, seed=config.seed)
    frame_idx = np.array([fi for _, fi in keys], dtype=np.float64)
    corr = np.zeros(projected.shape[1])
    fc = frame_idx - frame_idx.mean()
    denom_f = np.sqrt((fc * fc).sum())
    for d in range(projected.shape[1]):
        col = projected[:, d] - projected[:, d].mean()
        denom = np.sqrt((col * col).sum()) * denom_f
        corr[d] = abs(float((col * fc).sum()) / denom) if denom > 0 else 0.0
    return ClusterResult(labels=km.assignments, keys=keys, pca=pca, kmeans=km,
                         temporal_correlation=corr)


def cluster_purity(labels: np.ndarray, reference: list) -> float:
    """Size-weighted majority-label fraction over clusters."""
    reference = np.asarray(reference)
    total = len(labels)
    if total == 0:
        return 0.0
    score = 0
    for c in np.unique(labels):
        members = reference[labels == c]
        _, counts = np.unique(members, return_counts=True)
        score += counts.max()
    return score / total


@dataclass
class Correspondence:
    argmax: np.ndarray      # per leader frame, follower frame with top activation
    logits: Array           # (N_ldr, N_flw) pre-softmax scores


def correspondence(model: Denoiser, schedule: NoiseSchedule,
                   leader: Motion, follower: Motion, layer: int, step: int) -> Correspondence:
    q = capture_layer(model, schedule, leader, layer, step).q[1:]
    k = capture_layer(model, schedule, follower, layer, step).k[1:]
    logits = q @ k.T
    return Correspondence(argmax=logits.argmax(axis=1), logits=logits)


@dataclass
class AttentionMaps:
    leader_self: Array      # (N_ldr, N_ldr) softmax-normalized
    follower_self: Array
    cross: Array            # (N_ldr, N_flw)


def attention_map(model: Denoiser, schedule: NoiseSchedule,
                  leader: Motion, follower: Motion, layer: int, step: int) -> AttentionMaps:
    ldr = capture_layer(model, schedule, leader, layer, step)
    flw = capture_layer(model, schedule, follower, layer, step)
    c = ldr.q.shape[1]
    scale_ = 1.0 / math.sqrt(c)

    def maps(q: Array, k: Array) -> Array:
        return softmax(q[1:] @ k[1:].T * scale_)

    return AttentionMaps(leader_self=maps(ldr.q, ldr.k),
                         follower_self=maps(flw.q, flw.k),
                         cross=maps(ldr.q, flw.k))


# -- exports ------------------------------------------------------------------


def write_cluster_csv(path: str, result: ClusterResult,
                      phase_bins: list[int], motifs: list[str]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("motion,frame,cluster,phase_bin,motif\n")
        for (mi, fi), label, pb, motif in zip(result.keys, result.labels,
                                              phase_bins, motifs):
            fh.write(f"{mi},{fi},{label},{pb},{motif}\n")


def write_matrix_csv(path: str, matrix: Array) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in np.asarray(matrix):
            fh.write(",".join(repr(float(v)) for v in row))
            fh.write("\n")


_PALETTE = ("#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3",
            "#937860", "#da8bc3", "#8c8c8c", "#ccb974", "#64b5cd")


def heatmap_svg(path: str, matrix: Array, cell: int = 4) -> None:
    """Grayscale heatmap; intensity scaled to the matrix maximum."""
    m = np.asarray(matrix, dtype=np.float64)
    peak = m.max() if m.size and m.max() > 0 else 1.0
    rows, cols = m.shape
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" '
             f'width="{cols * cell}" height="{rows * cell}">']
    for i in range(rows):
        for j in range(cols):
            v = int(255 * (1.0 - m[i, j] / peak))
            parts.append(f'<rect x="{j * cell}" y="{i * cell}" width="{cell}" '
                         f'height="{cell}" fill="rgb({v},{v},{v})"/>')
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts))
        fh.write("\n")


def cluster_strip_svg(path: str, motion: Motion, labels: np.ndarray,
                      stride: int = 4, scale_px: float = 60.0) -> None:
    """Stick figures at regular frame intervals, bones colored by cluster."""
    from .motion import fk
    pos = fk(motion)
    frames = list(range(0, motion.length, stride))
    width = 90 * len(frames)
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="160">']
    parents = motion.skeleton.parents
    for col, f in enumerate(frames):
        color = _PALETTE[int(labels[f]) % len(_PALETTE)]
        ox = 45 + 90 * col
        pts = pos[f] - pos[f, 0]
        for j in range(1, motion.skeleton.joint_count):
            x1, y1 = ox + scale_px * pts[parents[j], 0], 120 - scale_px * pts[parents[j], 1]
            x2, y2 = ox + scale_px * pts[j, 0], 120 - scale_px * pts[j, 1]
            parts.append(f'<line x1="{x1:.1f}" y1="{y1:.1f}" x2="{x2:.1f}" '
                         f'y2="{y2:.1f}" stroke="{color}" stroke-width="3"/>')
        parts.append(f'<text x="{ox}" y="150" font-size="10" '
                     f'text-anchor="middle">{f}</text>')
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts))
        fh.write("\n")

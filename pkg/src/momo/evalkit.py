"""Benchmark construction and the transfer metric suite.

Per-pair metrics: foot-contact similarity to the leader (binary channel hits
after 0.5-thresholding), follower rotation/location similarity (fraction of
output frames whose nearest neighbor in the chosen channel block lies in the
follower rather than the leader), motif top-1/top-3 hits from a least-squares
descriptor classifier, and jitter (mean squared frame-to-frame acceleration
of global joint positions). Set-level: Frechet distance between Gaussians
fitted to 32-dim hand-crafted motion descriptors; this substitutes for a
pretrained-feature FID and is labelled "frechet-desc" in all outputs.
"""
from __future__ import annotations

import csv
import json
import os
import warnings
from dataclasses import dataclass

import numpy as np

from .motion import Motion, fk
from .numerics import Array

LEADER_KEYWORDS = ("run", "walk", "jump", "danc")
FOLLOWER_KEYWORDS = ("gorilla", "drunk", "robot", "chicken", "frog", "monkey",
                     "style", "like", "old", "child", "raise", "clap", "wav",
                     "kick", "punch", "push", "pull")

METRIC_COLUMNS = ("foot_contact_sim", "follower_rot_sim", "follower_loc_sim",
                  "frechet_desc", "motif_top1", "motif_top3", "jitter")


@dataclass(frozen=True)
class BenchmarkPair:
    pair_id: str
    leader_index: int
    follower_index: int


def _contains_any(text: str, keywords) -> bool:
    low = text.lower()
    return any(k in low for k in keywords)


def build_benchmark(texts: list[str],
                    leader_keywords=LEADER_KEYWORDS,
                    follower_keywords=FOLLOWER_KEYWORDS,
                    cap: int = 20,
                    limit: int | None = None) -> list[BenchmarkPair]:
    """Keyword-filtered pairs: leaders used at most once, followers at most cap.

    Followers contain a leader keyword plus a motif keyword; leaders contain a
    leader keyword only, so the pools are disjoint and nothing pairs with
    itself. Leaders are consumed in corpus index order; each takes the first
    follower (also in corpus index order) still under the repetition cap.
    """
    followers = [i for i, t in enumerate(texts)
                 if _contains_any(t, leader_keywords)
                 and _contains_any(t, follower_keywords)]
    follower_set = set(followers)
    leaders = [i for i, t in enumerate(texts)
               if _contains_any(t, leader_keywords) and i not in follower_set]
    if not leaders or not followers:
        warnings.warn("benchmark filter produced no pairs", stacklevel=2)
        return []
    pairs: list[BenchmarkPair] = []
    used = {f: 0 for f in followers}
    for leader in leaders:
        if limit is not None and len(pairs) >= limit:
            break
        for follower in followers:
            if used[follower] < cap:
                used[follower] += 1
                pairs.append(BenchmarkPair(
                    pair_id=f"pair{len(pairs):04d}",
                    leader_index=leader, follower_index=follower))
                break
    return pairs


def write_benchmark(path: str, pairs: list[BenchmarkPair]) -> None:
    data = {"pairs": [{"pair_id": p.pair_id, "leader": p.leader_index,
                       "follower": p.follower_index} for p in pairs]}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, sort_keys=True, indent=1)
        fh.write("\n")


def read_benchmark(path: str) -> list[BenchmarkPair]:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    return [BenchmarkPair(pair_id=row["pair_id"], leader_index=row["leader"],
                          follower_index=row["follower"]) for row in data["pairs"]]


# -- per-pair metrics -------------------------------------------------------


def foot_contact_similarity(out: Motion, leader: Motion) -> float:
    if out.length != leader.length:
        raise ValueError("foot contact similarity needs equal frame counts")
    a = out.channel("contacts") > 0.5
    b = leader.channel("contacts") > 0.5
    return float((a == b).mean())


def follower_similarity(out: Motion, leader: Motion, follower: Motion,
                        channel: str = "rotations") -> float:
    """Fraction of output frames closer to the follower than to the leader."""
    block = {"rotations": "joint_rot", "locations": "joint_pos"}[channel]
    o = out.channel(block)
    l = leader.channel(block)
    f = follower.channel(block)
    d_l = _min_dists(o, l)
    d_f = _min_dists(o, f)
    score = np.where(np.abs(d_f - d_l) <= 1e-9, 0.5, (d_f < d_l).astype(np.float64))
    return float(score.mean())


def _min_dists(a: Array, b: Array) -> Array:
    a2 = (a * a).sum(axis=1, keepdims=True)
    b2 = (b * b).sum(axis=1)
    d = np.maximum(a2 + b2 - 2.0 * a @ b.T, 0.0)
    return np.sqrt(d.min(axis=1))


def jitter(motion: Motion) -> float:
    """Mean squared frame-to-frame acceleration of global joint positions."""
    pos = fk(motion)
    if pos.shape[0] < 3:
        return 0.0
    acc = pos[2:] - 2.0 * pos[1:-1] + pos[:-2]
    return float((acc ** 2).sum(axis=2).mean())


# -- descriptors, frechet, motif classifier ---------------------------------


def motion_descriptor(motion: Motion) -> Array:
    """32-dim summary: per-joint speed mean/std (16), contact duty cycles (4),
    bone elevation means (7), root height mean/std (2), mean |yaw velocity| (1),
    overall contact duty (1), contact switch rate (1).

    Speeds are taken on 3-frame-averaged positions so per-frame synthesis
    noise does not dominate the variance statistics."""
    pos = fk(motion)
    n, j, _ = pos.shape
    if n > 2:
        smooth = (pos[:-2] + pos[1:-1] + pos[2:]) / 3.0
        vel = np.linalg.norm(smooth[1:] - smooth[:-1], axis=2)
    elif n > 1:
        vel = np.linalg.norm(pos[1:] - pos[:-1], axis=2)
    else:
        vel = np.zeros((1, j))
    contacts = (motion.channel("contacts") > 0.5).astype(np.float64)
    parents = motion.skeleton.parents
    elev = []
    for joint in range(1, j):
        bone = pos[:, joint] - pos[:, parents[joint]]
        norm = np.maximum(np.linalg.norm(bone, axis=1), 1e-9)
        elev.append(float(np.arcsin(np.clip(bone[:, 1] / norm, -1.0, 1.0)).mean()))
    switch = np.abs(np.diff(contacts, axis=0)).mean() if n > 1 else 0.0
    parts = [
        vel.mean(axis=0), vel.std(axis=0),
        contacts.mean(axis=0),
        np.array(elev),
        np.array([pos[:, 0, 1].mean(), pos[:, 0, 1].std()]),
        np.array([np.abs(motion.features[:, 0]).mean()]),
        np.array([contacts.mean()]),
        np.array([switch]),
    ]
    return np.concatenate(parts)


def frechet_feature_distance(set_a: list[Motion], set_b: list[Motion]) -> float:
    da = np.stack([motion_descriptor(m) for m in set_a])
    db = np.stack([motion_descriptor(m) for m in set_b])
    return frechet_gaussian(da.mean(axis=0), np.cov(da, rowvar=False),
                            db.mean(axis=0), np.cov(db, rowvar=False))


def frechet_gaussian(mu_a: Array, cov_a: Array, mu_b: Array, cov_b: Array) -> float:
    """||mu_a - mu_b||^2 + tr(cov_a + cov_b - 2 (cov_a cov_b)^{1/2}).

    The cross term uses the symmetric square root identity
    tr((cov_a cov_b)^{1/2}) = tr((S cov_b S)^{1/2}) with S = cov_a^{1/2}.
    Singular covariances get a 1e-6 ridge on both sides.
    """
    cov_a = np.atleast_2d(np.asarray(cov_a, dtype=np.float64))
    cov_b = np.atleast_2d(np.asarray(cov_b, dtype=np.float64))
    eva = np.linalg.eigvalsh(cov_a)
    evb = np.linalg.eigvalsh(cov_b)
    if eva.min() < 1e-12 or evb.min() < 1e-12:
        ridge = 1e-6 * np.eye(cov_a.shape[0])
        cov_a = cov_a + ridge
        cov_b = cov_b + ridge
    w, u = np.linalg.eigh(cov_a)
    sqrt_a = (u * np.sqrt(np.maximum(w, 0.0))) @ u.T
    inner = sqrt_a @ cov_b @ sqrt_a
    cross = np.sqrt(np.maximum(np.linalg.eigvalsh(inner), 0.0)).sum()
    diff = np.asarray(mu_a, dtype=np.float64) - np.asarray(mu_b, dtype=np.float64)
    return float(diff @ diff + np.trace(cov_a) + np.trace(cov_b) - 2.0 * cross)


class MotifClassifier:
    """Least-squares one-hot regression on quadratically lifted descriptors.

    Standardized descriptors are clipped to +-4 standard deviations so that a
    single out-of-distribution dimension (e.g. the speed variance of a noisy
    synthesized motion) cannot hijack the ranking.
    """

    CLIP = 4.0

    def __init__(self, classes: tuple[str, ...], weights: Array,
                 mean: Array, scale_: Array) -> None:
        self.classes = classes
        self.weights = weights
        self.mean = mean
        self.scale = scale_

    @staticmethod
    def fit(motions: list[Motion], labels: list[str]) -> "MotifClassifier":
        classes = tuple(sorted(set(labels)))
        raw = np.stack([motion_descriptor(m) for m in motions])
        mean = raw.mean(axis=0)
        std = raw.std(axis=0)
        # dimensions that are constant over the corpus carry no class signal;
        # an infinite scale zeroes them instead of manufacturing noise columns
        scale_ = np.where(std > 1e-6 * (1.0 + np.abs(mean)), std, np.inf)
        x = _lift(np.clip((raw - mean) / scale_, -MotifClassifier.CLIP,
                          MotifClassifier.CLIP))
        y = np.zeros((len(labels), len(classes)))
        for i, lab in enumerate(labels):
            y[i, classes.index(lab)] = 1.0
        weights, *_ = np.linalg.lstsq(x, y, rcond=None)
        return MotifClassifier(classes, weights, mean, scale_)

    def scores(self, motion: Motion) -> Array:
        d = (motion_descriptor(motion) - self.mean) / self.scale
        d = np.clip(d, -self.CLIP, self.CLIP)
        return _lift(d[None, :]) @ self.weights

    def ranked(self, motion: Motion) -> list[str]:
        order = np.argsort(self.scores(motion)[0])[::-1]
        return [self.classes[i] for i in order]


def _lift(x: Array) -> Array:
    return np.concatenate([x, x * x, np.ones((x.shape[0], 1))], axis=1)


def motif_precision(outputs: list[Motion], follower_motifs: list[str],
                    classifier: MotifClassifier) -> tuple[float, float]:
    """Top-1 and top-3 fraction of outputs classified as their follower's motif."""
    hits1 = hits3 = 0
    for motion, motif in zip(outputs, follower_motifs):
        ranked = classifier.ranked(motion)
        hits1 += ranked[0] == motif
        hits3 += motif in ranked[:3]
    n = max(len(outputs), 1)
    return hits1 / n, hits3 / n


# -- benchmark runner --------------------------------------------------------


def write_results_csv(path: str, rows: list[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("pair_id", "method") + METRIC_COLUMNS)
        for row in rows:
            writer.writerow([row["pair_id"], row["method"]]
                            + [_fmt(row.get(c)) for c in METRIC_COLUMNS])


def _fmt(value) -> str:
    return "" if value is None else repr(float(value))


def read_results_csv(path: str) -> list[dict]:
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for record in csv.DictReader(fh):
            row: dict = {"pair_id": record["pair_id"], "method": record["method"]}
            for c in METRIC_COLUMNS:
                row[c] = float(record[c]) if record[c] else None
            rows.append(row)
    return rows


def aggregate_results(rows: list[dict], frechet: float | None = None) -> dict:
    """Exact means of the per-pair metric columns, plus the set-level Frechet."""
    agg: dict = {"pairs": len(rows)}
    for c in METRIC_COLUMNS:
        values = [r[c] for r in rows if r.get(c) is not None]
        agg[c] = sum(values) / len(values) if values else None
    if frechet is not None:
        agg["frechet_desc"] = frechet
    return agg


def evaluate_pair(output: Motion, leader: Motion, follower: Motion,
                  follower_motif: str, classifier: MotifClassifier) -> dict:
    ranked = classifier.ranked(output)
    return {
        "foot_contact_sim": foot_contact_similarity(output, leader),
        "follower_rot_sim": follower_similarity(output, leader, follower, "rotations"),
        "follower_loc_sim": follower_similarity(output, leader, follower, "locations"),
        "frechet_desc": None,
        "motif_top1": float(ranked[0] == follower_motif),
        "motif_top3": float(follower_motif in ranked[:3]),
        "jitter": jitter(output),
    }


def run_benchmark(pairs: list[BenchmarkPair], method: str, corpus, out_dir: str,
                  model=None, schedule=None, transfer_config=None, sampler=None,
                  nn_temperature: float = 1.0,
                  latent_layer: int | None = None,
                  latent_step: int | None = None,
                  log=None) -> tuple[list[dict], dict]:
    """Execute one method over all pairs; resumable by pair id.

    Writes per-pair output motions, results.csv, and aggregate.json under
    out_dir. Re-running with the same arguments skips pairs whose rows and
    output files already exist and reproduces identical final files.
    """
    from .baselines import nn_latent, nn_motion_space, nn_softmax
    from .diffusion import SamplerConfig
    from .motion import read_motion, write_motion
    from .transfer import TransferConfig, TransferSource, transfer as run_transfer

    os.makedirs(os.path.join(out_dir, "outputs"), exist_ok=True)
    csv_path = os.path.join(out_dir, "results.csv")
    done: dict[str, dict] = {}
    if os.path.exists(csv_path):
        done = {r["pair_id"]: r for r in read_results_csv(csv_path) if r["method"] == method}

    train_samples = [s for s in corpus.samples if s.split == "train"]
    classifier = MotifClassifier.fit([s.motion for s in train_samples],
                                     [s.spec.motif for s in train_samples])
    sampler = sampler or SamplerConfig()

    rows: list[dict] = []
    outputs: list[Motion] = []
    for pair in sorted(pairs, key=lambda p: p.pair_id):
        out_path = os.path.join(out_dir, "outputs", f"{pair.pair_id}.json")
        leader = corpus.samples[pair.leader_index].motion
        follower = corpus.samples[pair.follower_index].motion
        if pair.pair_id in done and os.path.exists(out_path):
            row = done[pair.pair_id]
            output = read_motion(out_path)
        else:
            if method == "momo":
                cfg = transfer_config or TransferConfig.defaults(
                    model.config.layers, schedule.steps, direction="root-yaw-copy")
                result = run_transfer(model, schedule,
                                      TransferSource(motion=leader),
                                      TransferSource(motion=follower), cfg, sampler)
                output = result.output
            elif method == "nn-motion":
                output = nn_motion_space(leader, follower)
            elif method == "nn-softmax":
                output = nn_softmax(leader, follower, nn_temperature)
            elif method == "nn-latent":
                layer = latent_layer if latent_layer is not None \
                    else max(model.config.layers - 2, 0)
                step = latent_step if latent_step is not None \
                    else round(0.3 * schedule.steps)
                output = nn_latent(model, schedule, TransferSource(motion=leader),
                                   TransferSource(motion=follower), layer, step, sampler)
            else:
                raise ValueError(f"unknown method {method!r}")
            write_motion(output, out_path)
            motif = corpus.samples[pair.follower_index].spec.motif
            row = {"pair_id": pair.pair_id, "method": method,
                   **evaluate_pair(output, leader, follower, motif, classifier)}
            if log is not None:
                log(pair.pair_id, row)
        rows.append(row)
        outputs.append(output)
        write_results_csv(csv_path, rows)

    reference = [s.motion for s in corpus.samples]
    frechet = frechet_feature_distance(outputs, reference) if outputs else None
    agg = aggregate_results(rows, frechet=frechet)
    agg["method"] = method
    with open(os.path.join(out_dir, "aggregate.json"), "w", encoding="utf-8") as fh:
        json.dump(agg, fh, sort_keys=True, indent=1)
        fh.write("\n")
    return rows, agg

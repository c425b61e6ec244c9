"""Procedural gait corpus: labeled walking/running/jumping/standing motions.

Outline controls (period, phase, speed, duration) shape the legs; motif
controls (arm pose, head pitch, gesture oscillations) shape the upper body.
Legs follow a plant-point scheme: during stance the ankle target is a fixed
world-space point, projected onto the sphere of reachable positions, so the
foot is genuinely slow and low under forward kinematics; during swing the
target advances to the next plant point at constant speed, arriving on the
last swing frame. Ground-truth contact labels come from the phase mask.

Labels are templated over a closed vocabulary and deliberately contain the
benchmark filter keywords (walk/run/jump, chicken, like, raise, ...).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np

from .motion import (
    HEAD,
    L_ANKLE,
    L_HAND,
    L_TOE,
    Motion,
    R_ANKLE,
    R_HAND,
    R_TOE,
    contacts_from_positions,
    default_skeleton,
    feature_layout,
    fk,
    rot6d_from_matrix,
    rotation_between,
)

VERBS = ("walk", "run", "jump", "stand")
MOTIFS = ("neutral", "arms-up", "crouch", "wide-arms", "wave", "chicken")

ROOT_HEIGHT = 0.88
FPS = 20

# stance fraction of the step cycle per verb
_DUTY = {"walk": 0.6, "run": 0.4, "jump": 0.5, "stand": 1.0}
_LIFT = {"walk": 0.06, "run": 0.09, "jump": 0.12, "stand": 0.0}

_VERB_WORD = {"walk": "walks", "run": "runs", "jump": "jumps", "stand": "stands"}
_MOTIF_PHRASE = {
    "neutral": "",
    "arms-up": "with raised arms",
    "crouch": "crouching like an old man",
    "wide-arms": "with arms wide in a robot style",
    "wave": "waving one hand overhead",
    "chicken": "flapping like a chicken",
}


@dataclass(frozen=True)
class GaitSpec:
    verb: str
    motif: str
    period: int          # step cycle length P in frames
    phase: float         # phase offset, fraction of a cycle in [0, 1)
    speed: float         # forward root speed, m/frame
    length: int          # frame count N
    seed: int
    jitter: float        # bound on the feature perturbation between seeds

    def __post_init__(self) -> None:
        if self.verb not in VERBS:
            raise ValueError(f"unknown verb {self.verb!r}, expected one of {VERBS}")
        if self.motif not in MOTIFS:
            raise ValueError(f"unknown motif {self.motif!r}, expected one of {MOTIFS}")
        if self.verb != "stand" and self.period < 4:
            raise ValueError(f"period {self.period} < 4 for locomotion verb {self.verb!r}")
        if self.length < self.period:
            raise ValueError(f"length {self.length} < period {self.period}")
        if self.jitter < 0:
            raise ValueError("jitter must be nonnegative")


def corpus_vocab() -> tuple[str, ...]:
    """Closed vocabulary: reserved tokens plus every word the templates emit."""
    words: list[str] = []
    seen = set()
    fragments = ["a person slowly quickly"] + \
        [w for w in _VERB_WORD.values()] + \
        [p for p in _MOTIF_PHRASE.values() if p]
    for fragment in fragments:
        for word in fragment.lower().split():
            if word not in seen:
                seen.add(word)
                words.append(word)
    return ("<null>", "<unk>") + tuple(words)


def label_text(spec: GaitSpec) -> str:
    adverb = ""
    if spec.verb in ("walk", "run"):
        if spec.period >= 22:
            adverb = " slowly"
        elif spec.period <= 13:
            adverb = " quickly"
    phrase = _MOTIF_PHRASE[spec.motif]
    text = f"a person {_VERB_WORD[spec.verb]}{adverb}"
    if phrase:
        text += " " + phrase
    return text


def gait_phase(spec: GaitSpec, n) -> np.ndarray:
    """Left-leg gait phase in [0, 1) per frame (phase 0 = left plant)."""
    frames = np.atleast_1d(np.asarray(n, dtype=np.float64))
    if spec.verb == "stand":
        return np.zeros_like(frames)
    return np.mod(frames / spec.period + spec.phase, 1.0)


def _leg_targets(spec: GaitSpec, side_x: float, leg_offset: float
                 ) -> tuple[np.ndarray, np.ndarray]:
    """World-space ankle targets (N, 3) and stance mask (N,) for one leg.

    Swing targets advance over the window's integer frames with uniform steps,
    arriving at the next plant point on the last swing frame, so swing-frame
    foot speed stays well above the contact velocity threshold regardless of
    the fractional phase offset.
    """
    n = spec.length
    targets = np.zeros((n, 3))
    if spec.verb == "stand":
        targets[:, 0] = side_x
        return targets, np.ones(n, dtype=bool)

    p = float(spec.period)
    stance_len = _DUTY[spec.verb] * p
    lift = _LIFT[spec.verb]
    shift = (spec.phase + leg_offset) * p

    def plant_z(cycle: float) -> float:
        # mid-stance instant of the cycle, in root-z terms
        mid = cycle * p + stance_len / 2.0 - shift
        return spec.speed * mid

    stance = np.zeros(n, dtype=bool)
    for i in range(n):
        u = i + shift
        cycle = math.floor(u / p)
        pos = u - cycle * p
        if pos < stance_len:
            stance[i] = True
            targets[i] = (side_x, 0.0, plant_z(cycle))
        else:
            first = math.ceil(cycle * p + stance_len - shift)
            last = math.ceil((cycle + 1) * p - shift) - 1
            count = max(last - first + 1, 1)
            progress = (i - first + 1) / count
            z0, z1 = plant_z(cycle), plant_z(cycle + 1)
            targets[i] = (side_x,
                          lift * math.sin(math.pi * progress),
                          z0 + (z1 - z0) * progress)
    return targets, stance


# gesture oscillation frequencies (cycles/frame), deliberately incommensurate
# with the gait periods so motif content is not reducible to gait phase
_MOTIF_FREQ = {"arms-up": 0.033, "wide-arms": 0.027, "crouch": 0.021,
               "wave": 0.11, "chicken": 0.09}


def _arm_head_dirs(spec: GaitSpec, rng: np.random.Generator
                   ) -> dict[int, np.ndarray]:
    """Per-frame desired world directions for hands and head, motif-shaped.

    Gestures oscillate at motif-specific rates independent of the gait phase
    (except the neutral arm swing, which is phase-locked like real walking),
    so motif content varies within a motion and stays identifiable per frame.
    """
    n = spec.length
    phases = gait_phase(spec, np.arange(n))
    two_pi = 2.0 * math.pi
    jit = spec.jitter / 8.0
    freq = _MOTIF_FREQ.get(spec.motif, 0.0)
    gesture = np.sin(two_pi * (freq * np.arange(n) + spec.phase))

    def hang(side: float) -> np.ndarray:
        return np.tile(np.array([side * 0.18, -0.45, 0.0]) / 0.4846, (n, 1))

    def lifted(side: float, elev: np.ndarray) -> np.ndarray:
        d = np.stack([side * np.cos(elev) * 0.9, np.sin(elev), np.zeros(n)], axis=1)
        return d / np.linalg.norm(d, axis=1, keepdims=True)

    def pitched(angle: np.ndarray) -> np.ndarray:
        return np.stack([np.zeros(n), np.cos(angle), np.sin(angle)], axis=1)

    left = hang(1.0)
    right = hang(-1.0)
    head = np.tile(np.array([0.0, 1.0, 0.0]), (n, 1))

    if spec.motif == "neutral":
        swing = 0.30 * np.sin(two_pi * phases)
        left = left + np.outer(swing, [0.0, 0.0, 1.0])
        right = right - np.outer(swing, [0.0, 0.0, 1.0])
    elif spec.motif == "arms-up":
        elev = 1.52 + 0.07 * gesture            # noise floor stays above 1.2 rad
        left = lifted(1.0, elev)
        right = lifted(-1.0, elev)
    elif spec.motif == "wide-arms":
        elev = 0.25 * gesture                    # around horizontal
        left = lifted(1.0, elev)
        right = lifted(-1.0, elev)
    elif spec.motif == "crouch":
        fwd = np.array([0.3, -0.55, 0.65])
        left = np.tile(fwd * [1, 1, 1] / np.linalg.norm(fwd), (n, 1))
        right = np.tile(fwd * [-1, 1, 1] / np.linalg.norm(fwd), (n, 1))
        head = pitched(0.9 + 0.3 * gesture)
    elif spec.motif == "wave":
        elev = 1.25 + 0.40 * gesture
        right = np.stack([-0.25 * np.cos(elev), np.sin(elev),
                          0.2 * np.cos(two_pi * freq * np.arange(n))], axis=1)
    elif spec.motif == "chicken":
        elev = -0.55 + 0.35 * gesture
        left = lifted(0.95, elev)
        right = lifted(-0.95, elev)
        head = pitched(0.18 + 0.10 * gesture)

    dirs = {L_HAND: left, R_HAND: right, HEAD: head}
    for joint in dirs:
        noise = rng.uniform(-jit, jit, size=(n, 3))
        d = dirs[joint] + noise
        dirs[joint] = d / np.linalg.norm(d, axis=1, keepdims=True)
    return dirs


def generate(spec: GaitSpec) -> Motion:
    """Deterministically synthesize one labeled gait motion from its spec.

    Locomotion verbs add a small gait-locked pelvic sway (lateral, one cycle
    per step pair) and vertical bob (two cycles), so the root channels encode
    the phase continuously; stance feet stay planted via the sphere
    projection regardless.
    """
    skel = default_skeleton()
    j = skel.joint_count
    n = spec.length
    lay = feature_layout(j)
    rng = np.random.default_rng(spec.seed)

    speed = 0.0 if spec.verb == "stand" else float(spec.speed)
    phases = gait_phase(spec, np.arange(n))
    if spec.verb == "stand":
        sway = np.zeros(n)
        bob = np.full(n, ROOT_HEIGHT)
    else:
        sway = 0.012 * np.sin(2.0 * math.pi * phases)
        bob = ROOT_HEIGHT + 0.0025 * np.cos(4.0 * math.pi * phases)
    root_z = speed * np.arange(n)
    root_pos = np.stack([sway, bob, root_z], axis=1)

    left_off = 0.0
    right_off = 0.0 if spec.verb == "jump" else 0.5
    l_targets, l_stance = _leg_targets(spec, 0.10, left_off)
    r_targets, r_stance = _leg_targets(spec, -0.10, right_off)

    dirs = _arm_head_dirs(spec, rng)

    rot6 = np.zeros((n, j - 1, 6))
    identity6 = rot6d_from_matrix(np.eye(3))
    for i in range(n):
        for ankle, targets in ((L_ANKLE, l_targets), (R_ANKLE, r_targets)):
            v = targets[i] - root_pos[i]
            bone = skel.offsets[ankle]
            r = rotation_between(bone / np.linalg.norm(bone), v / np.linalg.norm(v))
            rot6[i, ankle - 1] = rot6d_from_matrix(r)
        rot6[i, L_TOE - 1] = identity6
        rot6[i, R_TOE - 1] = identity6
        for joint in (L_HAND, R_HAND, HEAD):
            bone = skel.offsets[joint]
            r = rotation_between(bone / np.linalg.norm(bone), dirs[joint][i])
            rot6[i, joint - 1] = rot6d_from_matrix(r)

    feats = np.zeros((n, skel.feature_size))
    feats[:-1, 1] = np.diff(sway)            # lateral velocity, heading frame
    feats[:, 2] = speed                      # forward velocity, heading frame
    feats[:, 3] = bob
    feats[:, lay["joint_rot"]] = rot6.reshape(n, -1)

    # Fill positions, velocities and contacts from the realized kinematics.
    motion = Motion(features=feats, fps=FPS, skeleton=skel, text=label_text(spec))
    pos = fk(motion)
    rel = pos[:, 1:, :] - pos[:, :1, :]      # root-relative (heading is zero)
    feats[:, lay["joint_pos"]] = rel.reshape(n, -1)
    vel = np.zeros_like(pos)
    if n > 1:
        vel[:-1] = pos[1:] - pos[:-1]
        vel[-1] = vel[-2]
    feats[:, lay["joint_vel"]] = vel.reshape(n, -1)
    contacts = np.stack([l_stance, l_stance, r_stance, r_stance], axis=1).astype(np.float64)
    # Frame 0 has no preceding frame, so its phase-mask label can contradict
    # the backward-difference speed convention; adopt the detector's view there.
    contacts[0] = contacts_from_positions(pos[:2], skel.foot_joints)[0]
    feats[:, lay["contacts"]] = contacts
    return Motion(features=feats, fps=FPS, skeleton=skel, text=label_text(spec))


@dataclass(frozen=True)
class CorpusSample:
    motion: Motion
    text: str
    spec: GaitSpec
    split: str           # "train" | "test"


@dataclass
class Corpus:
    samples: list[CorpusSample]
    seed: int

    def split(self, name: str) -> list[CorpusSample]:
        return [s for s in self.samples if s.split == name]

    def __len__(self) -> int:
        return len(self.samples)


_PERIOD_BINS = {
    "walk": (24, 20, 16),
    "run": (14, 12, 10),
    "jump": (20, 16, 14),
    "stand": (16, 16, 16),
}
_SPEED_RANGE = {
    "walk": (0.018, 0.028),
    "run": (0.030, 0.042),
    "jump": (0.008, 0.016),
    "stand": (0.0, 0.0),
}


def build_corpus(size: int, seed: int = 0, jitter: float = 1.2) -> Corpus:
    """Stratified corpus over verb x motif cells with a 90/10 train/test split.

    Samples are emitted rep-major (cycling through all cells each rep) so any
    corpus-order prefix spans the full verb/motif grid.
    """
    if size < 1:
        raise ValueError("size must be >= 1")
    cells = [(v, m) for v in VERBS for m in MOTIFS]
    reps = -(-size // len(cells))            # ceil
    rng = np.random.default_rng(seed)
    specs: list[GaitSpec] = []
    for rep in range(reps):
        for verb, motif in cells:
            if len(specs) >= size:
                break
            period = _PERIOD_BINS[verb][rep % 3]
            lo, hi = _SPEED_RANGE[verb]
            speed = float(rng.uniform(lo, hi)) if hi > lo else 0.0
            spec = GaitSpec(
                verb=verb, motif=motif, period=period,
                phase=float(rng.uniform(0.0, 1.0)),
                speed=speed,
                length=int(40 + rng.integers(0, 33)),
                seed=int(rng.integers(0, 2 ** 31)),
                jitter=jitter,
            )
            specs.append(spec)

    per_cell_reps = {cell: 0 for cell in cells}
    counts = {cell: sum(1 for s in specs if (s.verb, s.motif) == cell) for cell in cells}
    samples: list[CorpusSample] = []
    for spec in specs:
        cell = (spec.verb, spec.motif)
        rep_idx = per_cell_reps[cell]
        per_cell_reps[cell] += 1
        train_count = math.ceil(0.9 * counts[cell])
        split = "train" if rep_idx < train_count else "test"
        motion = generate(spec)
        samples.append(CorpusSample(motion=motion, text=motion.text, spec=spec, split=split))
    return Corpus(samples=samples, seed=seed)


def spec_to_dict(spec: GaitSpec) -> dict:
    return asdict(spec)


def spec_from_dict(data: dict) -> GaitSpec:
    return GaitSpec(verb=data["verb"], motif=data["motif"], period=int(data["period"]),
                    phase=float(data["phase"]), speed=float(data["speed"]),
                    length=int(data["length"]), seed=int(data["seed"]),
                    jitter=float(data["jitter"]))


def save_corpus(corpus: Corpus, directory: str) -> str:
    """Write one motion file per sample plus an index JSON; returns index path."""
    import json
    import os

    from .motion import write_motion

    motions_dir = os.path.join(directory, "motions")
    os.makedirs(motions_dir, exist_ok=True)
    index = {"seed": corpus.seed, "samples": []}
    for i, sample in enumerate(corpus.samples):
        rel = os.path.join("motions", f"sample{i:04d}.json")
        write_motion(sample.motion, os.path.join(directory, rel))
        index["samples"].append({"path": rel, "text": sample.text,
                                 "spec": spec_to_dict(sample.spec),
                                 "split": sample.split})
    index_path = os.path.join(directory, "index.json")
    with open(index_path, "w", encoding="utf-8") as fh:
        json.dump(index, fh, sort_keys=True, indent=1)
        fh.write("\n")
    return index_path


def load_corpus(directory: str) -> Corpus:
    import json
    import os

    from .motion import read_motion

    with open(os.path.join(directory, "index.json"), "r", encoding="utf-8") as fh:
        index = json.load(fh)
    samples = []
    for row in index["samples"]:
        motion = read_motion(os.path.join(directory, row["path"]))
        samples.append(CorpusSample(motion=motion, text=row["text"],
                                    spec=spec_from_dict(row["spec"]),
                                    split=row["split"]))
    return Corpus(samples=samples, seed=index.get("seed", 0))

"""Skeletal motion representation and kinematics.

A motion is an N x F matrix of per-frame pose features laid out as
(root yaw velocity, root xz linear velocity, root height, local joint
positions, 6-D joint rotations, joint velocities, foot contact labels),
so F = 4 + 3(J-1) + 6(J-1) + 3J + 4.

Conventions (fixed here, relied on everywhere else):
 - Parents precede children; joint 0 is the root.
 - A joint's stored rotation orients its own offset from its parent, and
   rotations accumulate down the chain, so bone lengths are always preserved.
 - Heading uses an inclusive cumulative sum of the yaw velocity channel:
   heading[n] = sum(yaw_vel[0..n]). Frame 0 starts at the origin, and the
   pre-integration heading is 0, so adding an angle to yaw_vel[0] rotates
   the whole trajectory about the vertical axis.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .numerics import Array

MOTION_FORMAT_VERSION = "momo-motion-1"


class SchemaError(ValueError):
    """Motion data violating the pose feature schema."""


class DecodeError(ValueError):
    """Degenerate 6-D rotation block."""


@dataclass(frozen=True)
class Skeleton:
    parents: tuple[int, ...]           # per joint, -1 for the root
    offsets: Array                     # (J, 3) meters, parent-relative
    foot_joints: tuple[int, int, int, int]  # two per leg

    def __post_init__(self) -> None:
        j = len(self.parents)
        offsets = np.ascontiguousarray(np.asarray(self.offsets, dtype=np.float64))
        object.__setattr__(self, "offsets", offsets)
        if offsets.shape != (j, 3):
            raise SchemaError(f"offsets shape {offsets.shape} != ({j}, 3)")
        if not np.all(np.isfinite(offsets)):
            raise SchemaError("offsets contain non-finite entries")
        if j < 2 or self.parents[0] != -1:
            raise SchemaError("skeleton needs a root (-1) plus at least one child")
        for i, p in enumerate(self.parents[1:], start=1):
            if not 0 <= p < i:
                raise SchemaError(f"parent of joint {i} must precede it, got {p}")
        if len(self.foot_joints) != 4 or any(not 0 < f < j for f in self.foot_joints):
            raise SchemaError("exactly 4 foot joints expected, all non-root")

    @property
    def joint_count(self) -> int:
        return len(self.parents)

    @property
    def feature_size(self) -> int:
        return feature_size(self.joint_count)


def feature_size(joints: int) -> int:
    return 4 + 3 * (joints - 1) + 6 * (joints - 1) + 3 * joints + 4


def feature_layout(joints: int) -> dict[str, slice]:
    """Named channel slices of one frame vector."""
    j = joints
    p0 = 4
    r0 = p0 + 3 * (j - 1)
    v0 = r0 + 6 * (j - 1)
    c0 = v0 + 3 * j
    return {
        "root_yaw_vel": slice(0, 1),
        "root_lin_vel": slice(1, 3),
        "root_height": slice(3, 4),
        "joint_pos": slice(p0, r0),
        "joint_rot": slice(r0, v0),
        "joint_vel": slice(v0, c0),
        "contacts": slice(c0, c0 + 4),
    }


@dataclass
class PoseParts:
    """Unpacked channels of a single frame."""
    root_yaw_vel: float
    root_lin_vel: Array        # (2,) x, z
    root_height: float
    joint_pos: Array           # (J-1, 3)
    joint_rot: Array           # (J-1, 6)
    joint_vel: Array           # (J, 3)
    contacts: Array            # (4,)


def pack(parts: PoseParts, joints: int) -> Array:
    """Concatenate pose parts into one frame vector of length F."""
    j = joints
    pos = np.asarray(parts.joint_pos, dtype=np.float64).reshape(-1)
    rot = np.asarray(parts.joint_rot, dtype=np.float64).reshape(-1)
    vel = np.asarray(parts.joint_vel, dtype=np.float64).reshape(-1)
    con = np.asarray(parts.contacts, dtype=np.float64).reshape(-1)
    if pos.size != 3 * (j - 1):
        raise SchemaError(f"joint_pos size {pos.size} != {3 * (j - 1)}")
    if rot.size != 6 * (j - 1):
        raise SchemaError(f"joint_rot size {rot.size} != {6 * (j - 1)}")
    if vel.size != 3 * j:
        raise SchemaError(f"joint_vel size {vel.size} != {3 * j}")
    if con.size != 4:
        raise SchemaError(f"contacts size {con.size} != 4")
    lin = np.asarray(parts.root_lin_vel, dtype=np.float64).reshape(-1)
    if lin.size != 2:
        raise SchemaError(f"root_lin_vel size {lin.size} != 2")
    return np.concatenate([
        np.array([parts.root_yaw_vel], dtype=np.float64), lin,
        np.array([parts.root_height], dtype=np.float64), pos, rot, vel, con,
    ])


def unpack(frame: Array, joints: int) -> PoseParts:
    """Split one frame vector back into named pose parts (exact inverse of pack)."""
    f = np.asarray(frame, dtype=np.float64).reshape(-1)
    if f.size != feature_size(joints):
        raise SchemaError(f"frame length {f.size} != F={feature_size(joints)} for J={joints}")
    lay = feature_layout(joints)
    return PoseParts(
        root_yaw_vel=float(f[0]),
        root_lin_vel=f[lay["root_lin_vel"]].copy(),
        root_height=float(f[3]),
        joint_pos=f[lay["joint_pos"]].reshape(joints - 1, 3).copy(),
        joint_rot=f[lay["joint_rot"]].reshape(joints - 1, 6).copy(),
        joint_vel=f[lay["joint_vel"]].reshape(joints, 3).copy(),
        contacts=f[lay["contacts"]].copy(),
    )


@dataclass
class Motion:
    features: Array            # (N, F)
    fps: int
    skeleton: Skeleton
    text: str | None = None

    def __post_init__(self) -> None:
        feats = np.ascontiguousarray(np.asarray(self.features, dtype=np.float64))
        if feats.ndim != 2 or feats.shape[0] < 1:
            raise SchemaError(f"features must be (N>=1, F), got {feats.shape}")
        if feats.shape[1] != self.skeleton.feature_size:
            raise SchemaError(
                f"frame length {feats.shape[1]} != F={self.skeleton.feature_size}")
        if not np.all(np.isfinite(feats)):
            raise SchemaError("features contain non-finite entries")
        self.features = feats

    @property
    def length(self) -> int:
        return self.features.shape[0]

    def channel(self, name: str) -> Array:
        return self.features[:, feature_layout(self.skeleton.joint_count)[name]]

    def with_features(self, features: Array) -> "Motion":
        return Motion(features=features, fps=self.fps, skeleton=self.skeleton, text=self.text)


def rot6d_from_matrix(r: Array) -> Array:
    """First two columns of a rotation matrix, flattened to 6 values."""
    return np.concatenate([r[:, 0], r[:, 1]])


def rot6d_to_matrix(block: Array) -> Array:
    """Gram-Schmidt decode of a 6-D rotation block; third column by cross product."""
    a1 = np.asarray(block[:3], dtype=np.float64)
    a2 = np.asarray(block[3:6], dtype=np.float64)
    n1 = np.linalg.norm(a1)
    if n1 < 1e-8:
        raise DecodeError("degenerate 6-D rotation: first column norm < 1e-8")
    b1 = a1 / n1
    a2p = a2 - (b1 @ a2) * b1
    n2 = np.linalg.norm(a2p)
    if n2 < 1e-8:
        raise DecodeError("degenerate 6-D rotation: columns nearly parallel")
    b2 = a2p / n2
    b3 = np.cross(b1, b2)
    return np.stack([b1, b2, b3], axis=1)


def yaw_matrix(angle: float) -> Array:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rotation_between(a: Array, b: Array) -> Array:
    """Rotation matrix taking unit vector a to unit vector b (minimal twist)."""
    a = a / np.linalg.norm(a)
    b = b / np.linalg.norm(b)
    v = np.cross(a, b)
    c = float(a @ b)
    s = float(np.linalg.norm(v))
    if s < 1e-12:
        if c > 0.0:
            return np.eye(3)
        # Opposite vectors: rotate pi about any axis orthogonal to a.
        helper = np.array([1.0, 0.0, 0.0])
        if abs(a[0]) > 0.9:
            helper = np.array([0.0, 1.0, 0.0])
        axis = np.cross(a, helper)
        axis /= np.linalg.norm(axis)
        vx = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
        return np.eye(3) + 2.0 * vx @ vx
    vx = np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0]])
    return np.eye(3) + vx + vx @ vx * ((1.0 - c) / (s * s))


def root_trajectory(motion: Motion) -> tuple[Array, Array]:
    """Integrated root positions (N, 3) and headings (N,) from the velocity channels."""
    feats = motion.features
    yaw_vel = feats[:, 0]
    headings = np.cumsum(yaw_vel)
    n = motion.length
    pos = np.zeros((n, 3))
    pos[:, 1] = feats[:, 3]
    for k in range(1, n):
        h = headings[k - 1]
        vx, vz = feats[k - 1, 1], feats[k - 1, 2]
        c, s = math.cos(h), math.sin(h)
        pos[k, 0] = pos[k - 1, 0] + c * vx + s * vz
        pos[k, 2] = pos[k - 1, 2] - s * vx + c * vz
    return pos, headings


def fk(motion: Motion) -> Array:
    """Global joint positions (N, J, 3) from root channels and 6-D rotations."""
    skel = motion.skeleton
    j = skel.joint_count
    n = motion.length
    root_pos, headings = root_trajectory(motion)
    out = np.zeros((n, j, 3))
    rot_slice = feature_layout(j)["joint_rot"]
    for fidx in range(n):
        rots6 = motion.features[fidx, rot_slice].reshape(j - 1, 6)
        global_rot = [yaw_matrix(headings[fidx])]
        out[fidx, 0] = root_pos[fidx]
        for joint in range(1, j):
            local = rot6d_to_matrix(rots6[joint - 1])
            g = global_rot[skel.parents[joint]] @ local
            global_rot.append(g)
            out[fidx, joint] = out[fidx, skel.parents[joint]] + g @ skel.offsets[joint]
    return out


def contacts_from_positions(positions: Array, foot_joints,
                            velocity_threshold: float = 0.01,
                            height_threshold: float = 0.05) -> Array:
    """Binary (N, 4) labels: foot slower than velocity_threshold and lower than
    height_threshold. Speeds use backward differences, first frame copies the second."""
    vt = max(float(velocity_threshold), 1e-12)
    ht = max(float(height_threshold), 1e-12)
    feet = positions[:, list(foot_joints), :]  # (N, 4, 3)
    disp = np.zeros_like(feet)
    if feet.shape[0] > 1:
        disp[1:] = feet[1:] - feet[:-1]
        disp[0] = disp[1]
    speed = np.linalg.norm(disp, axis=2)
    return ((speed < vt) & (feet[:, :, 1] < ht)).astype(np.float64)


def rotate_about_vertical(motion: Motion, angle: float) -> Motion:
    """Rotate the global trajectory about the vertical axis.

    Under the inclusive-heading convention this only shifts the integrated
    heading origin: all local channels are untouched.
    """
    feats = motion.features.copy()
    feats[0, 0] += float(angle)
    return motion.with_features(feats)


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise SchemaError(message)


def motion_to_dict(motion: Motion) -> dict:
    skel = motion.skeleton
    return {
        "version": MOTION_FORMAT_VERSION,
        "fps": int(motion.fps),
        "joints": skel.joint_count,
        "parents": list(skel.parents),
        "offsets": [[float(v) for v in row] for row in skel.offsets],
        "foot_joints": list(skel.foot_joints),
        "text": motion.text,
        "frames": [[float(v) for v in row] for row in motion.features],
    }


def motion_from_dict(data: dict) -> Motion:
    for key in ("version", "fps", "joints", "parents", "offsets",
                "foot_joints", "text", "frames"):
        _require(key in data, f"parse error: missing field \"{key}\"")
    _require(data["version"] == MOTION_FORMAT_VERSION,
             f"parse error: unsupported version {data['version']!r}")
    _require(isinstance(data["fps"], int) and data["fps"] > 0,
             "parse error: field \"fps\" must be a positive integer")
    joints = data["joints"]
    _require(isinstance(joints, int) and joints >= 2,
             "parse error: field \"joints\" must be an integer >= 2")
    try:
        skel = Skeleton(parents=tuple(data["parents"]),
                        offsets=np.asarray(data["offsets"], dtype=np.float64),
                        foot_joints=tuple(data["foot_joints"]))
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"parse error: skeleton: {exc}") from exc
    _require(skel.joint_count == joints,
             f"parse error: field \"parents\" length {skel.joint_count} != joints {joints}")
    f = feature_size(joints)
    frames = data["frames"]
    _require(isinstance(frames, list) and len(frames) >= 1,
             "parse error: field \"frames\" must be a non-empty list")
    for i, row in enumerate(frames):
        _require(isinstance(row, list) and len(row) == f,
                 f"parse error: frame {i} has length {len(row) if isinstance(row, list) else '?'}, expected {f}")
    feats = np.asarray(frames, dtype=np.float64)
    _require(bool(np.all(np.isfinite(feats))), "parse error: non-finite frame values")
    return Motion(features=feats, fps=data["fps"], skeleton=skel, text=data["text"])


def write_motion(motion: Motion, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(motion_to_dict(motion), fh, sort_keys=True)
        fh.write("\n")


def read_motion(path) -> Motion:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"parse error: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise SchemaError("parse error: top-level value must be an object")
    return motion_from_dict(data)


def default_skeleton() -> Skeleton:
    """Desk-scale 8-joint skeleton: root, two ankle+toe legs, two arms, head."""
    parents = (-1, 0, 1, 0, 3, 0, 0, 0)
    offsets = np.array([
        [0.00, 0.00, 0.00],    # 0 root (placed by the root height channel)
        [0.10, -0.88, 0.00],   # 1 left ankle
        [0.00, -0.03, 0.06],   # 2 left toe (short so stance sweep stays slow)
        [-0.10, -0.88, 0.00],  # 3 right ankle
        [0.00, -0.03, 0.06],   # 4 right toe
        [0.18, -0.45, 0.00],   # 5 left hand (arm hangs from the shoulder line)
        [-0.18, -0.45, 0.00],  # 6 right hand
        [0.00, 0.55, 0.00],    # 7 head
    ])
    return Skeleton(parents=parents, offsets=offsets, foot_joints=(1, 2, 3, 4))


JOINT_NAMES_8 = ("root", "l_ankle", "l_toe", "r_ankle", "r_toe", "l_hand", "r_hand", "head")
L_ANKLE, L_TOE, R_ANKLE, R_TOE, L_HAND, R_HAND, HEAD = 1, 2, 3, 4, 5, 6, 7

"""Kinematic validity checks: singularity, joint limits, self-collision."""
from __future__ import annotations

from typing import NamedTuple, Sequence

import numpy as np

from .chain import link_transforms
from .model import Capsule, RobotModel


def manipulability(J: np.ndarray, rows: Sequence[int] | None = None) -> float:
    """Yoshikawa measure sqrt(det(J J^T)) over the selected task rows.

    Evaluated as the product of |R_ii| from a QR factorisation of J^T, which
    keeps rank-deficient Jacobians at round-off level instead of squaring
    the conditioning the way forming J J^T does.
    """
    J = np.asarray(J, dtype=float)
    if rows is not None:
        J = J[list(rows)]
    m, n = J.shape
    if m > n:
        return 0.0
    R = np.linalg.qr(J.T, mode="r")
    return float(abs(np.prod(np.diag(R))))


class JointLimitViolation(NamedTuple):
    joint: str
    value: float
    bound: str  # "lower" or "upper"


def check_joint_limits(model: RobotModel, q, margin: float = 0.0) -> list[JointLimitViolation]:
    q = model.check_config(q)
    out = []
    for j, v in zip(model.active_joints, q):
        if v < j.limit_lower + margin:
            out.append(JointLimitViolation(j.name, float(v), "lower"))
        elif v > j.limit_upper - margin:
            out.append(JointLimitViolation(j.name, float(v), "upper"))
    return out


def _point_segment(x, p, d, dd) -> float:
    t = min(max(float((x - p) @ d) / dd, 0.0), 1.0)
    return float(np.linalg.norm(x - (p + d * t)))


def segment_distance(p1, q1, p2, q2) -> float:
    """Minimum distance between segments [p1, q1] and [p2, q2].

    Closest-point parametrisation with clamping; handles degenerate
    (zero-length) segments on either side.
    """
    p1 = np.asarray(p1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    d1 = np.asarray(q1, dtype=float) - p1
    d2 = np.asarray(q2, dtype=float) - p2
    r = p1 - p2
    a = float(d1 @ d1)
    e = float(d2 @ d2)
    f = float(d2 @ r)
    eps = 1e-300
    if a <= eps and e <= eps:
        return float(np.linalg.norm(r))
    if a <= eps:
        s = 0.0
        t = min(max(f / e, 0.0), 1.0)
    else:
        c = float(d1 @ r)
        if e <= eps:
            t = 0.0
            s = min(max(-c / a, 0.0), 1.0)
        else:
            b = float(d1 @ d2)
            denom = a * e - b * b
            if denom <= 1e-12 * a * e:
                # (near-)parallel: the minimum is attained at an endpoint
                return min(_point_segment(p1, p2, d2, e), _point_segment(p1 + d1, p2, d2, e),
                           _point_segment(p2, p1, d1, a), _point_segment(p2 + d2, p1, d1, a))
            s = min(max((b * f - c * e) / denom, 0.0), 1.0)
            t = (b * s + f) / e
            if t < 0.0:
                t = 0.0
                s = min(max(-c / a, 0.0), 1.0)
            elif t > 1.0:
                t = 1.0
                s = min(max((b - c) / a, 0.0), 1.0)
    return float(np.linalg.norm((p1 + d1 * s) - (p2 + d2 * t)))


def capsule_distance(A: Capsule, B: Capsule) -> float:
    """Surface distance between two capsules (negative when they overlap)."""
    return segment_distance(A.a, A.b, B.a, B.b) - A.radius - B.radius


def _world_capsules(link_T: np.ndarray, caps: Sequence[Capsule]) -> list[Capsule]:
    R, p = link_T[:3, :3], link_T[:3, 3]
    return [Capsule(tuple(R @ c.a + p), tuple(R @ c.b + p), c.radius) for c in caps]


def check_self_collision(model: RobotModel, q) -> list[tuple[str, str]]:
    """Collision pairs whose capsules interpenetrate at configuration ``q``."""
    frames = link_transforms(model, q)
    world: dict[str, list[Capsule]] = {}
    hits = []
    for a, b in model.collision_pairs:
        for name in (a, b):
            if name not in world:
                world[name] = _world_capsules(frames[name], model.link(name).collision_capsules)
        if any(capsule_distance(ca, cb) < 0.0 for ca in world[a] for cb in world[b]):
            hits.append((a, b))
    return hits

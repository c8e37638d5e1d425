"""Forward kinematics and geometric Jacobians."""
from __future__ import annotations

import numpy as np

from ..transforms import Pose6D, axis_angle_matrix
from .model import RobotModel


def _motion(kind: str, axis: np.ndarray, value: float) -> np.ndarray:
    M = np.eye(4)
    if kind == "revolute":
        M[:3, :3] = axis_angle_matrix(axis, value)
    elif kind == "prismatic":
        M[:3, 3] = axis * value
    return M


def link_transform(model: RobotModel, q: np.ndarray, link: str) -> np.ndarray:
    """4x4 transform of ``link`` in the base frame, chaining only the joints on its path."""
    q = model.check_config(q)
    c = model._cache
    T = np.eye(4)
    for ji in model.path_to(link):
        j = model.joints[ji]
        T = T @ c["origins"][ji]
        if j.is_active:
            T = T @ _motion(j.kind, c["axes"][ji], q[c["col_of"][ji]])
    return T


def link_transforms(model: RobotModel, q: np.ndarray) -> dict[str, np.ndarray]:
    """Transforms of every link, in one topological sweep."""
    q = model.check_config(q)
    c = model._cache
    out = {model.base_frame: np.eye(4)}
    for ji, j in enumerate(model.joints):
        T = out[j.parent] @ c["origins"][ji]
        if j.is_active:
            T = T @ _motion(j.kind, c["axes"][ji], q[c["col_of"][ji]])
        out[j.child] = T
    return out


def forward_kinematics(model: RobotModel, q, link: str) -> Pose6D:
    return Pose6D.from_matrix(link_transform(model, q, link))


def _jacobian_and_pose(model: RobotModel, q: np.ndarray, link: str) -> tuple[np.ndarray, np.ndarray]:
    c = model._cache
    path = model.path_to(link)
    frames = []
    T = np.eye(4)
    for ji in path:
        j = model.joints[ji]
        T = T @ c["origins"][ji]
        if j.is_active:
            # joint axis lives in the frame after the origin, before the motion
            frames.append((ji, T[:3, :3] @ c["axes"][ji], T[:3, 3].copy()))
            T = T @ _motion(j.kind, c["axes"][ji], q[c["col_of"][ji]])
    p_end = T[:3, 3]
    J = np.zeros((6, model.dof))
    for ji, z, p in frames:
        col = c["col_of"][ji]
        if model.joints[ji].kind == "revolute":
            J[:3, col] = np.cross(z, p_end - p)
            J[3:, col] = z
        else:
            J[:3, col] = z
    return J, T


def jacobian(model: RobotModel, q, link: str) -> np.ndarray:
    """6 x dof geometric Jacobian of ``link`` (linear rows first, then angular)."""
    q = model.check_config(q)
    return _jacobian_and_pose(model, q, link)[0]

"""Damped least-squares inverse kinematics."""
from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from ..transforms import Pose6D, matrix_to_quat, rotation_error
from .chain import _jacobian_and_pose
from .model import RobotModel


@dataclass(frozen=True)
class IkParams:
    position_tol: float = 0.004  # device accuracy bound, meters
    orientation_tol: float = 0.01
    damping: float = 0.05
    max_iters: int = 200
    max_step: float = 0.2

    def __post_init__(self):
        if not self.position_tol > 0 or not self.orientation_tol > 0:
            raise ValueError("IK tolerances must be positive")

    @classmethod
    def from_dict(cls, d: dict | None) -> "IkParams":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in (d or {}).items() if k in names})


@dataclass
class IkResult:
    solution: np.ndarray
    position_error: float
    orientation_error: float
    iterations: int
    converged: bool


def _errors(target_p, target_q, T):
    e_pos = target_p - T[:3, 3]
    e_rot = rotation_error(target_q, matrix_to_quat(T[:3, :3]))
    return e_pos, e_rot


def solve_ik(model: RobotModel, target: Pose6D, arm: str, seed, params: IkParams = IkParams()) -> IkResult:
    """Solve for ``arm``'s joints so its end effector reaches ``target``.

    Only the joints on the path to the arm's end effector move; every other
    entry of ``seed`` is returned unchanged. Non-convergence is reported via
    ``IkResult.converged`` rather than raised; the best iterate seen is returned.
    """
    q = model.check_config(seed).copy()
    link = model.ee_link(arm)
    cols = model.arm_columns(arm)
    lo = model.lower_limits[cols]
    hi = model.upper_limits[cols]
    q[cols] = np.clip(q[cols], lo, hi)
    target_p = np.asarray(target.translation)
    target_q = np.asarray(target.rotation)
    lam2 = params.damping ** 2

    best = None
    for it in range(params.max_iters + 1):
        J, T = _jacobian_and_pose(model, q, link)
        e_pos, e_rot = _errors(target_p, target_q, T)
        pos_err = float(np.linalg.norm(e_pos))
        rot_err = float(np.linalg.norm(e_rot))
        score = max(pos_err / params.position_tol, rot_err / params.orientation_tol)
        if best is None or score < best[0]:
            best = (score, q.copy(), pos_err, rot_err, it)
        if pos_err <= params.position_tol and rot_err <= params.orientation_tol:
            return IkResult(q, pos_err, rot_err, it, True)
        if it == params.max_iters:
            break
        Jc = J[:, cols]
        e = np.concatenate([e_pos, e_rot])
        dq = Jc.T @ np.linalg.solve(Jc @ Jc.T + lam2 * np.eye(6), e)
        biggest = np.max(np.abs(dq))
        if biggest > params.max_step:
            dq *= params.max_step / biggest
        q[cols] = np.clip(q[cols] + dq, lo, hi)

    _, q_best, pos_err, rot_err, _ = best
    return IkResult(q_best, pos_err, rot_err, params.max_iters, False)

"""Human-to-robot retargeting and kinematic validation of retargeted trajectories."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateWindow,
    NoCalibrationWindow,
    TickGridMismatch,
    UnknownGripperKind,
)
from .ingest import RawSession
from .kinematics import (
    IkParams,
    RobotModel,
    check_joint_limits,
    check_self_collision,
    forward_kinematics,
    jacobian,
    manipulability,
    parse_urdf,
    solve_ik,
)
from .quality import BlurResult, MotionFlag
from .sync import SyncedSequence, sample_stream, tick_grid
from .transforms import Pose6D, axis_angle_quat

logger = logging.getLogger(__name__)

BASELINE_WARN_M = 0.02

BLURRED = "blurred"
STATIONARY_REMOVED = "stationary_removed"
OVER_VELOCITY = "over_velocity"
IK_NOT_CONVERGED = "ik_not_converged"
JOINT_LIMIT = "joint_limit"
SINGULAR = "singular"
SELF_COLLISION = "self_collision"
# attribution order for ticks failing several checks
PRIORITY = (BLURRED, OVER_VELOCITY, IK_NOT_CONVERGED, JOINT_LIMIT, SINGULAR, SELF_COLLISION)
HARD_FAILURES = (IK_NOT_CONVERGED, JOINT_LIMIT, SELF_COLLISION)
COUNT_KEYS = (BLURRED, STATIONARY_REMOVED) + PRIORITY[1:]


@dataclass(frozen=True)
class RobotProfile:
    robot_name: str
    urdf_path: Path
    arm_to_ee_link: dict[str, str]
    home_config: tuple[float, ...]
    baseline_m: float
    tool_offsets: dict[str, Pose6D]
    gripper_widths: dict[str, tuple[float, float]]
    w_min_manipulability: float = 1e-3
    manipulability_rows: tuple[int, ...] | None = None
    joint_limit_margin: float = 0.0
    verdict_coverage: float = 0.95
    ik: IkParams = IkParams()

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path | None = None) -> "RobotProfile":
        urdf = Path(d["urdf_path"])
        if base_dir is not None and not urdf.is_absolute():
            urdf = base_dir / urdf
        rows = d.get("manipulability_rows")
        return cls(
            robot_name=d["robot_name"],
            urdf_path=urdf,
            arm_to_ee_link=dict(d["arm_to_ee_link"]),
            home_config=tuple(float(v) for v in d["home_config"]),
            baseline_m=float(d["baseline_m"]),
            tool_offsets={a: Pose6D.from_json(p) for a, p in d.get("tool_offsets", {}).items()},
            gripper_widths={k: (float(v[0]), float(v[1])) for k, v in d["gripper_widths"].items()},
            w_min_manipulability=float(d.get("w_min_manipulability", 1e-3)),
            manipulability_rows=tuple(rows) if rows is not None else None,
            joint_limit_margin=float(d.get("joint_limit_margin", 0.0)),
            verdict_coverage=float(d.get("verdict_coverage", 0.95)),
            ik=IkParams.from_dict(d.get("ik")),
        )

    @classmethod
    def load(cls, path) -> "RobotProfile":
        path = Path(path)
        return cls.from_dict(json.loads(path.read_text(encoding="utf-8")), path.parent)

    def load_model(self) -> RobotModel:
        return parse_urdf(self.urdf_path.read_text(encoding="utf-8"), self.arm_to_ee_link)

    def tool_offset(self, arm: str) -> Pose6D:
        return self.tool_offsets.get(arm, Pose6D())


# --- calibration


@dataclass(frozen=True)
class CalibrationTransform:
    world_to_base: Pose6D
    tool_offsets: dict[str, Pose6D]
    measured_baseline: float
    robot_baseline: float
    warnings: tuple[str, ...] = ()

    @property
    def baseline_error(self) -> float:
        return abs(self.measured_baseline - self.robot_baseline)

    def tcp_in_base(self, arm: str, controller_pose: Pose6D) -> Pose6D:
        return self.world_to_base.compose(controller_pose.compose(self.tool_offsets.get(arm, Pose6D())))


def robot_reference(model: RobotModel, profile: RobotProfile) -> tuple[np.ndarray, np.ndarray]:
    """Home TCP positions of the left and right arms."""
    q = np.asarray(profile.home_config)
    left = np.asarray(forward_kinematics(model, q, model.ee_link("left")).translation)
    right = np.asarray(forward_kinematics(model, q, model.ee_link("right")).translation)
    return left, right


def calibrate_frames(session: RawSession, profile: RobotProfile, model: RobotModel,
                     tick_hz: float = 30.0) -> CalibrationTransform:
    """Rigid world-to-base transform from the calibration window at the start of a session.

    During the window both grippers are held at the robot's home posture. The
    mean midpoint of the two TCPs is mapped onto the midpoint of the robot's
    home TCPs and the horizontal left-to-right direction onto the robot's, by a
    rotation about the vertical axis only. No scaling is applied; a baseline
    mismatch is recorded as a warning.
    """
    k = session.device_meta.calibration_ticks
    streams = session.pose_streams
    if k < 1 or any(len(s) < 2 for s in streams.values()):
        raise NoCalibrationWindow(f"{session.session_id}: no calibration window declared")
    start = max(s[0].t for s in streams.values())
    end = min(s[-1].t for s in streams.values())
    grid = tick_grid(start, end, tick_hz)
    if len(grid) < k:
        raise NoCalibrationWindow(f"{session.session_id}: session shorter than the {k}-tick calibration window")
    times = grid[:k]

    tcp = {}
    for arm in ("left", "right"):
        samples, _ = sample_stream(streams[arm], times)
        off = profile.tool_offset(arm)
        tcp[arm] = np.array([s.pose.compose(off).translation for s in samples])
    mid_h = 0.5 * (tcp["left"] + tcp["right"]).mean(axis=0)
    dir_h = (tcp["right"] - tcp["left"]).mean(axis=0)
    measured = float(np.linalg.norm(tcp["right"] - tcp["left"], axis=1).mean())
    if measured < 1e-6 or math.hypot(dir_h[0], dir_h[1]) < 1e-6:
        raise DegenerateWindow(f"{session.session_id}: grippers coincide during calibration")

    left_r, right_r = robot_reference(model, profile)
    mid_r = 0.5 * (left_r + right_r)
    dir_r = right_r - left_r
    yaw = math.atan2(dir_r[1], dir_r[0]) - math.atan2(dir_h[1], dir_h[0])
    yaw = math.atan2(math.sin(yaw), math.cos(yaw))
    rot = Pose6D((0, 0, 0), tuple(axis_angle_quat((0, 0, 1), yaw)))
    shift = mid_r - rot.apply(mid_h)
    world_to_base = Pose6D(tuple(shift), rot.rotation)

    warnings = []
    if abs(measured - profile.baseline_m) > BASELINE_WARN_M:
        warnings.append(f"BaselineMismatch: measured {measured:.4f} m vs robot {profile.baseline_m:.4f} m")
        logger.warning("%s: %s", session.session_id, warnings[-1])
    return CalibrationTransform(world_to_base, {a: profile.tool_offset(a) for a in ("left", "right")},
                                measured, profile.baseline_m, tuple(warnings))


def map_gripper(aperture: float, gripper_kind: str, profile: RobotProfile) -> float:
    try:
        lo, hi = profile.gripper_widths[gripper_kind]
    except KeyError:
        raise UnknownGripperKind(gripper_kind) from None
    if not 0.0 <= aperture <= 1.0:
        raise ValueError(f"aperture {aperture} outside [0, 1]")
    return lo + aperture * (hi - lo)


# --- retargeting


@dataclass
class RetargetedTrajectory:
    session_id: str
    robot_name: str
    arms: tuple[str, ...]
    times: np.ndarray
    tick_indices: tuple[int, ...]
    targets: dict[str, list[Pose6D]]
    widths: dict[str, np.ndarray]
    joints: dict[str, np.ndarray]  # per arm: (n_ticks, joints_per_arm)
    converged: dict[str, np.ndarray]
    iterations: dict[str, np.ndarray]
    gripper_range: tuple[float, float]
    frames: list[dict[str, str | None]] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.times)

    def full_config(self, model: RobotModel, k: int, base: np.ndarray) -> np.ndarray:
        q = np.array(base, dtype=float)
        for arm in self.arms:
            q[model.arm_columns(arm)] = self.joints[arm][k]
        return q

    def tcp_positions(self, arm: str) -> np.ndarray:
        return np.array([p.translation for p in self.targets[arm]])


def retarget(sequence: SyncedSequence, calib: CalibrationTransform, model: RobotModel,
             profile: RobotProfile, ik_params: IkParams | None = None) -> RetargetedTrajectory:
    """Map every tick's controller poses to TCP targets and solve IK per arm.

    IK is warm-started from the last converged solution of the same arm, with
    one re-seed from the home configuration when that fails. Failures become
    per-sample flags; the best-effort solution is still stored.
    """
    params = ik_params or profile.ik
    arms = ("left", "right")
    home = np.asarray(profile.home_config, dtype=float)
    model.check_config(home)
    cols = {a: model.arm_columns(a) for a in arms}
    n = len(sequence)
    targets = {a: [] for a in arms}
    widths = {a: np.zeros(n) for a in arms}
    joints = {a: np.zeros((n, len(cols[a]))) for a in arms}
    converged = {a: np.zeros(n, dtype=bool) for a in arms}
    iters = {a: np.zeros(n, dtype=int) for a in arms}
    current = home.copy()
    frames = []

    for k, tick in enumerate(sequence.ticks):
        for arm in arms:
            sample = tick.poses[arm]
            target = calib.tcp_in_base(arm, sample.pose)
            targets[arm].append(target)
            widths[arm][k] = map_gripper(sample.gripper_aperture, sequence.gripper_kind, profile)
            res = solve_ik(model, target, arm, current, params)
            if not res.converged:
                seed = current.copy()
                seed[cols[arm]] = home[cols[arm]]
                retry = solve_ik(model, target, arm, seed, params)
                if retry.converged or retry.position_error < res.position_error:
                    res = retry
            joints[arm][k] = res.solution[cols[arm]]
            converged[arm][k] = res.converged
            iters[arm][k] = res.iterations
            if res.converged:
                current[cols[arm]] = res.solution[cols[arm]]
        frames.append({c: (None if f is None else f.image_path) for c, f in sorted(tick.frames.items())})

    return RetargetedTrajectory(
        session_id=sequence.session_id,
        robot_name=profile.robot_name,
        arms=arms,
        times=sequence.times,
        tick_indices=tuple(tk.index for tk in sequence.ticks),
        targets=targets,
        widths=widths,
        joints=joints,
        converged=converged,
        iterations=iters,
        gripper_range=profile.gripper_widths[sequence.gripper_kind],
        frames=frames,
    )


# --- validation


@dataclass
class QualityOutputs:
    """What the filtering stage hands to validation, keyed by grid index."""

    ticks_in: int
    kept_indices: tuple[int, ...]  # grid indices surviving stationary downsampling
    blurred: set[int] = field(default_factory=set)
    motion_flags: list[MotionFlag] = field(default_factory=list)

    @classmethod
    def from_stages(cls, ticks_in: int, downsampled: SyncedSequence, blur: BlurResult | None,
                    motion: list[MotionFlag]) -> "QualityOutputs":
        return cls(ticks_in, tuple(tk.index for tk in downsampled.ticks),
                   set(blur.excluded) if blur else set(), list(motion))


@dataclass
class ValidationReport:
    session_id: str
    ticks_in: int
    ticks_out: int
    counts: dict[str, int]
    raw_counts: dict[str, int]
    invalid_segments: list[tuple[float, float, str]]
    verdict: str
    metrics: dict[str, float]
    surviving_span: tuple[int, int] | None  # positions in the trajectory, inclusive
    tick_reasons: list[str | None]

    def to_json(self) -> dict:
        return {
            "session_id": self.session_id,
            "ticks_in": self.ticks_in,
            "ticks_out": self.ticks_out,
            "counts": self.counts,
            "raw_counts": self.raw_counts,
            "invalid_segments": [list(s) for s in self.invalid_segments],
            "verdict": self.verdict,
            "metrics": self.metrics,
            "surviving_span": list(self.surviving_span) if self.surviving_span else None,
            "tick_reasons": self.tick_reasons,
        }

    @classmethod
    def from_json(cls, d: dict) -> "ValidationReport":
        span = d.get("surviving_span")
        return cls(d["session_id"], d["ticks_in"], d["ticks_out"], d["counts"], d["raw_counts"],
                   [tuple(s) for s in d["invalid_segments"]], d["verdict"], d["metrics"],
                   tuple(span) if span else None, d["tick_reasons"])


def tick_failures(traj: RetargetedTrajectory, model: RobotModel, profile: RobotProfile,
                  k: int, home: np.ndarray) -> set[str]:
    """Kinematic checks on converged solutions of tick ``k``."""
    out = set()
    if not all(traj.converged[a][k] for a in traj.arms):
        out.add(IK_NOT_CONVERGED)
    q = traj.full_config(model, k, home)
    violated = {v.joint for v in check_joint_limits(model, q, profile.joint_limit_margin)}
    for arm in traj.arms:
        if not traj.converged[arm][k]:
            continue
        cols = model.arm_columns(arm)
        if any(model.active_joints[c].name in violated for c in cols):
            out.add(JOINT_LIMIT)
        J = jacobian(model, q, model.ee_link(arm))[:, cols]
        if manipulability(J, profile.manipulability_rows) < profile.w_min_manipulability:
            out.add(SINGULAR)
    if IK_NOT_CONVERGED not in out and check_self_collision(model, q):
        out.add(SELF_COLLISION)
    return out


def validate_trajectory(traj: RetargetedTrajectory, model: RobotModel, quality: QualityOutputs,
                        profile: RobotProfile) -> ValidationReport:
    """Run every check, attribute each excluded tick to one reason and decide the verdict.

    Ticks removed by stationary downsampling count as ``stationary_removed``;
    every other failing tick takes the first reason in :data:`PRIORITY`. The
    episode is valid when no hard failure is attributed and the longest run of
    surviving ticks covers at least ``profile.verdict_coverage`` of the
    downsampled sequence.
    """
    if tuple(traj.tick_indices) != tuple(quality.kept_indices):
        raise TickGridMismatch(f"{traj.session_id}: trajectory and quality outputs use different tick grids")
    home = np.asarray(profile.home_config, dtype=float)
    motion_ticks = {f.tick for f in quality.motion_flags}
    n = len(traj)
    raw = {key: 0 for key in PRIORITY}
    raw["over_acceleration"] = sum(f.kind == "over_acceleration" for f in quality.motion_flags)
    raw["joint_jump"] = 0
    counts = {key: 0 for key in COUNT_KEYS}
    counts[STATIONARY_REMOVED] = quality.ticks_in - n
    reasons: list[str | None] = []

    vel_limits = np.array([j.velocity_limit for j in model.active_joints])
    last_valid: dict[str, tuple[float, np.ndarray]] = {}
    for k, idx in enumerate(traj.tick_indices):
        failing = tick_failures(traj, model, profile, k, home)
        if idx in quality.blurred:
            failing.add(BLURRED)
        if idx in motion_ticks:
            failing.add(OVER_VELOCITY)
        for key in failing:
            raw[key] += 1
        reason = next((key for key in PRIORITY if key in failing), None)
        if reason is not None:
            counts[reason] += 1
        reasons.append(reason)
        for arm in traj.arms:
            if not traj.converged[arm][k]:
                continue
            q = traj.joints[arm][k]
            if arm in last_valid:
                t0, q0 = last_valid[arm]
                cap = vel_limits[model.arm_columns(arm)] * (traj.times[k] - t0)
                if np.any(np.abs(q - q0) > cap):
                    raw["joint_jump"] += 1
            last_valid[arm] = (traj.times[k], q)

    segments = []
    k = 0
    while k < n:
        if reasons[k] is None:
            k += 1
            continue
        j = k
        while j + 1 < n and reasons[j + 1] == reasons[k]:
            j += 1
        segments.append((float(traj.times[k]), float(traj.times[j]), reasons[k]))
        k = j + 1

    best = None
    k = 0
    while k < n:
        if reasons[k] is not None:
            k += 1
            continue
        j = k
        while j + 1 < n and reasons[j + 1] is None:
            j += 1
        if best is None or j - k > best[1] - best[0]:
            best = (k, j)
        k = j + 1

    surviving = sum(r is None for r in reasons)
    longest = 0 if best is None else best[1] - best[0] + 1
    coverage = longest / n if n else 0.0
    hard = sum(counts[key] for key in HARD_FAILURES)
    verdict = "valid" if hard == 0 and coverage >= profile.verdict_coverage else "invalid"
    metrics = {
        "coverage": coverage,
        "tick_survival": surviving / n if n else 0.0,
        "surviving_ticks": surviving,
        "post_downsampling_ticks": n,
    }
    return ValidationReport(traj.session_id, quality.ticks_in, surviving, counts, raw, segments,
                            verdict, metrics, best, reasons)

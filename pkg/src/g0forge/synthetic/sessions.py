"""Generated capture sessions with known ground truth.

Poses come from joint trajectories played through forward kinematics of the
dual-arm fixture, expressed in a headset world frame that is offset and yawed
from the robot base. Defects are injected by construction, so every session's
expected verdict is known in advance.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np
from PIL import Image

from ..ingest import DeviceMeta, FrameRef, PoseSample, RawSession, write_session
from ..kinematics import forward_kinematics, parse_urdf
from ..transforms import Pose6D, axis_angle_quat
from .robots import DUAL_ARM_EE, DUAL_ARM_HOME, MOUNT_Y, dual_arm_urdf

POSE_HZ = 60.0
VIDEO_HZ = 30.0
CALIBRATION_S = 1.0
IMAGE_SIZE = 32

WORLD_FROM_BASE = Pose6D((0.3, -1.1, 0.85), tuple(axis_angle_quat((0, 0, 1), 0.6)))
TOOL_OFFSET = Pose6D((-0.02, 0.0, 0.0))

ROBOT_PROFILE = {
    "robot_name": "dual6",
    "urdf_path": "dual6.urdf",
    "arm_to_ee_link": DUAL_ARM_EE,
    "home_config": list(DUAL_ARM_HOME),
    "baseline_m": 2 * MOUNT_Y,
    "tool_offsets": {"left": TOOL_OFFSET.to_json(), "right": TOOL_OFFSET.to_json()},
    "gripper_widths": {"H": [0.0, 0.08], "G": [0.005, 0.05]},
    "w_min_manipulability": 1e-3,
    "joint_limit_margin": 0.1,
    "verdict_coverage": 0.95,
    "ik": {"position_tol": 0.001, "orientation_tol": 0.005, "damping": 0.05,
           "max_iters": 200, "max_step": 0.2},
}

QUALITY_PROFILE = {
    "blur_threshold": 100.0,
    "stationary_window_ticks": 15,
    "stationary_eps_m": 0.002,
    "keep_period_ticks": 15,
    "v_max_mps": 1.5,
    "a_max_mps2": 10.0,
}

AMPLITUDE = np.array([0.12, 0.2, 0.25, 0.3, 0.25, 0.3])


def smoothstep(x):
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


def bump(t, start: float, duration: float):
    """Raised cosine: 0 outside [start, start + duration], 1 at the centre."""
    u = (np.asarray(t, dtype=float) - start) / duration
    return np.where((u > 0) & (u < 1), 0.5 * (1.0 - np.cos(2.0 * math.pi * u)), 0.0)


def time_warp(t: np.ndarray, hold: tuple[float, float] | None, ease: float = 0.3) -> np.ndarray:
    """Motion phase that slows to a full stop over ``hold`` and resumes smoothly."""
    if hold is None:
        return t.copy()
    h0, h1 = hold
    fine = np.linspace(0.0, t[-1] + 1.0, int((t[-1] + 1.0) * 2000) + 1)
    rate = 1.0 - smoothstep((fine - (h0 - ease)) / ease) + smoothstep((fine - h1) / ease)
    phase = np.concatenate([[0.0], np.cumsum(0.5 * (rate[1:] + rate[:-1]) * np.diff(fine))])
    return np.interp(t, fine, phase)


@dataclass
class SessionSpec:
    session_id: str
    seed: int
    duration: float = 6.0
    operator_id: str = "op1"
    gripper_kind: str = "H"
    hold: tuple[float, float] | None = None
    defect: str | None = None  # joint_limit | reach | self_collision
    blurred_ego_ticks: tuple[int, ...] = ()
    blurred_wrist_ticks: tuple[int, ...] = ()
    instruction: str = "Pick up the cup and place it on the tray"
    collected_at: str = "2026-03-02T09:00:00+00:00"
    source: str = "robot_free"
    world_from_base: Pose6D = WORLD_FROM_BASE
    annotations: dict | None = None
    grasps: dict[str, tuple[float, float]] = field(
        default_factory=lambda: {"left": (2.0, 3.2), "right": (3.8, 5.0)})


def joint_trajectory(spec: SessionSpec, t: np.ndarray) -> np.ndarray:
    """(len(t), 12) joint values for both arms."""
    rng = np.random.default_rng(spec.seed)
    home = np.asarray(DUAL_ARM_HOME)
    freq = rng.uniform(0.2, 0.4, size=12)
    phase0 = rng.uniform(0, 2 * math.pi, size=12)
    amp = np.concatenate([AMPLITUDE, AMPLITUDE]) * rng.uniform(0.6, 1.0, size=12)
    tau = time_warp(t, spec.hold)
    envelope = smoothstep((tau - CALIBRATION_S) / 0.8)[:, None]
    wave = np.sin(2 * math.pi * freq[None, :] * (tau[:, None] - CALIBRATION_S) + phase0) - np.sin(phase0)
    q = home + envelope * amp * wave
    if spec.defect == "joint_limit":
        # wrist roll of the left arm rises into the margin band below its 1.5 rad limit
        q[:, 5] = home[5] + 1.45 * bump(t, 3.0, 1.6)
    elif spec.defect == "self_collision":
        # both arms swing inward through the home posture until their wrists meet
        b = bump(t, 2.5, 2.0)[:, None]
        q = home + (1.0 - b) * (q - home)
        q[:, 0] -= 0.5 * b[:, 0]
        q[:, 6] += 0.5 * b[:, 0]
    return q


def aperture_profile(spec: SessionSpec, t: np.ndarray, arm: str) -> np.ndarray:
    close_t, open_t = spec.grasps.get(arm, (None, None))
    if close_t is None:
        return np.ones_like(t)
    closing = smoothstep((t - close_t) / 0.3)
    opening = smoothstep((t - open_t) / 0.3)
    return np.clip(1.0 - 0.9 * closing + 0.9 * opening, 0.0, 1.0)


def controller_poses(spec: SessionSpec, t: np.ndarray) -> dict[str, list[Pose6D]]:
    model = dual_model()
    q = joint_trajectory(spec, t)
    inv_tool = TOOL_OFFSET.inverse()
    out = {}
    for arm, link in DUAL_ARM_EE.items():
        poses = []
        for k in range(len(t)):
            tcp = forward_kinematics(model, q[k], link)
            if spec.defect == "reach" and arm == "left":
                push = 0.45 * float(bump(t[k], 2.5, 1.5))
                tcp = Pose6D((tcp.translation[0] + push, *tcp.translation[1:]), tcp.rotation)
            poses.append(spec.world_from_base.compose(tcp.compose(inv_tool)))
        out[arm] = poses
    return out


_MODEL = None


def dual_model():
    global _MODEL
    if _MODEL is None:
        _MODEL = parse_urdf(dual_arm_urdf(), DUAL_ARM_EE)
    return _MODEL


def sharp_image(rng: np.random.Generator) -> np.ndarray:
    return rng.integers(0, 256, size=(IMAGE_SIZE, IMAGE_SIZE), dtype=np.uint8)


def blurred_image() -> np.ndarray:
    ramp = np.linspace(60, 190, IMAGE_SIZE)
    return np.tile(ramp, (IMAGE_SIZE, 1)).astype(np.uint8)


def build_session(spec: SessionSpec, root: Path) -> Path:
    """Write one bundle for ``spec`` under ``root`` and return its path."""
    bundle = Path(root) / spec.session_id
    n_pose = int(round(spec.duration * POSE_HZ)) + 1
    n_video = int(round(spec.duration * VIDEO_HZ)) + 1
    t_pose = np.arange(n_pose) / POSE_HZ
    t_video = np.arange(n_video) / VIDEO_HZ

    poses = controller_poses(spec, t_pose)
    streams = {}
    for arm in ("left", "right"):
        ap = aperture_profile(spec, t_pose, arm)
        streams[arm] = tuple(PoseSample(float(t_pose[k]), poses[arm][k], float(ap[k]), 1.0)
                             for k in range(n_pose))

    rng = np.random.default_rng(spec.seed + 1000)
    cameras = {"ego": spec.blurred_ego_ticks, "left_wrist": spec.blurred_wrist_ticks}
    frames = {}
    for cam, blurred in cameras.items():
        d = bundle / "frames" / cam
        d.mkdir(parents=True, exist_ok=True)
        for i in range(4):
            Image.fromarray(sharp_image(rng)).save(d / f"sharp_{i}.pgm")
        Image.fromarray(blurred_image()).save(d / "blurred.pgm")
        frames[cam] = tuple(
            FrameRef(float(t_video[k]), cam, "blurred.pgm" if k in blurred else f"sharp_{k % 4}.pgm",
                     IMAGE_SIZE, IMAGE_SIZE)
            for k in range(n_video))

    meta = DeviceMeta(gripper_kind=spec.gripper_kind, nominal_pose_hz=POSE_HZ, nominal_video_hz=VIDEO_HZ,
                      baseline_distance=2 * MOUNT_Y, camera_count=3,
                      calibration_ticks=int(CALIBRATION_S * VIDEO_HZ))
    session = RawSession(spec.session_id, spec.operator_id, meta, spec.instruction, streams, frames,
                         spec.collected_at, spec.source, bundle)
    write_session(session, bundle)
    if spec.annotations is not None:
        (bundle / "annotations.json").write_text(json.dumps(spec.annotations, indent=2), encoding="utf-8")
    return bundle


INSTRUCTIONS = (
    "Pick up the cup and place it on the tray",
    "Fold the towel",
    "Put the banana in the basket",
    "Insert the flower into the vase",
)


def corpus_specs() -> list[SessionSpec]:
    """Twenty sessions: seventeen clean, three with one designed hard failure each."""
    base = datetime(2026, 3, 2, 9, 0, 0, tzinfo=timezone.utc)
    specs = []
    defects = {5: "joint_limit", 11: "reach", 17: "self_collision"}
    for i in range(20):
        spec = SessionSpec(
            session_id=f"sess_{i:03d}",
            seed=100 + i,
            operator_id="op1" if i < 10 else "op2",
            gripper_kind="G" if i % 4 == 3 else "H",
            instruction=INSTRUCTIONS[i % len(INSTRUCTIONS)],
            collected_at=(base + timedelta(seconds=38.5 * i)).isoformat(),
            defect=defects.get(i),
        )
        if i in (2, 9):
            spec.hold = (3.3, 4.6)
        if i == 4:
            spec.blurred_ego_ticks = (178,)
        if i == 6:
            spec.blurred_wrist_ticks = (60, 61, 62)
        if i == 8:
            spec.annotations = {"chunks": [
                {"start_t": 0.0, "end_t": 2.0, "sub_instruction": "reach for the cup", "objects": []},
                {"start_t": 2.0, "end_t": 3.2, "sub_instruction": "grasp the cup",
                 "objects": [{"label": "cup", "bbox": [10, 12, 8, 8]}]},
            ]}
        specs.append(spec)
    return specs


GROUND_TRUTH_DEFECTS = {"sess_005": "joint_limit", "sess_011": "ik_not_converged", "sess_017": "self_collision"}


def write_profiles(root: Path) -> dict[str, Path]:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    (root / "dual6.urdf").write_text(dual_arm_urdf(), encoding="utf-8")
    robot = root / "robot_profile.json"
    robot.write_text(json.dumps(ROBOT_PROFILE, indent=2) + "\n", encoding="utf-8")
    quality = root / "quality_profile.json"
    quality.write_text(json.dumps(QUALITY_PROFILE, indent=2) + "\n", encoding="utf-8")
    return {"robot_profile": robot, "quality_profile": quality}


def make_corpus(root) -> dict:
    """Write profiles and the twenty-session corpus. Returns paths and ground truth."""
    root = Path(root)
    paths = write_profiles(root)
    sessions_dir = root / "sessions"
    bundles = [build_session(spec, sessions_dir) for spec in corpus_specs()]
    config = {
        "robot_profile": paths["robot_profile"].name,
        "quality_profile": paths["quality_profile"].name,
        "tick_hz": 30.0,
        "workers": 1,
        "log_level": "INFO",
    }
    (root / "config.json").write_text(json.dumps(config, indent=2) + "\n", encoding="utf-8")
    return {"bundles": bundles, "config": root / "config.json", "defects": dict(GROUND_TRUTH_DEFECTS), **paths}

"""URDF models, forward/inverse kinematics and kinematic validity checks."""
from .chain import forward_kinematics, jacobian, link_transform, link_transforms
from .checks import (
    JointLimitViolation,
    capsule_distance,
    check_joint_limits,
    check_self_collision,
    manipulability,
    segment_distance,
)
from .ik import IkParams, IkResult, solve_ik
from .model import Capsule, Joint, Link, RobotModel, parse_urdf

__all__ = [
    "Capsule", "Joint", "Link", "RobotModel", "parse_urdf",
    "forward_kinematics", "jacobian", "link_transform", "link_transforms",
    "IkParams", "IkResult", "solve_ik",
    "JointLimitViolation", "manipulability", "check_joint_limits",
    "check_self_collision", "capsule_distance", "segment_distance",
]

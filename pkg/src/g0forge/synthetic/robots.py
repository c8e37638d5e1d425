"""Synthetic robot descriptions used by the test corpus and the demo fixtures."""
from __future__ import annotations

import math

PLANAR_LIMIT = 1.5708

# 6R arm: shoulder yaw/pitch, elbow pitch, wrist roll/pitch/roll.
ARM_JOINTS = (
    # name, axis, origin xyz, (lower, upper)
    ("j1", "0 0 1", "0 0 0", (-2.8, 2.8)),
    ("j2", "0 1 0", "0 0 0.05", (-1.8, 1.8)),
    ("j3", "0 1 0", "0.3 0 0", (-2.5, 2.5)),
    ("j4", "1 0 0", "0.25 0 0", (-2.8, 2.8)),
    ("j5", "0 1 0", "0.06 0 0", (-2.0, 2.0)),
    ("j6", "1 0 0", "0.04 0 0", (-1.5, 1.5)),
)
TCP_OFFSET = "0.06 0 0"
ARM_HOME = (0.0, -0.3, 0.9, 0.0, 0.5, 0.0)
# link name suffix -> (a, b, radius), segment along the link's x axis
ARM_CAPSULES = {
    "link2": ((0.05, 0, 0), (0.25, 0, 0), 0.035),
    "link3": ((0.05, 0, 0), (0.22, 0, 0), 0.03),
    "link6": ((0.0, 0, 0), (0.06, 0, 0), 0.03),
}
ARM_VELOCITY_LIMIT = 3.0
MOUNT_Y = 0.2


def planar_2link_urdf(limit: float = PLANAR_LIMIT) -> str:
    """Two revolute z joints with 1 m links; the tip frame is ``tool``."""
    return f"""<?xml version="1.0"?>
<robot name="planar2">
  <link name="base"/>
  <link name="link1"/>
  <link name="link2"/>
  <link name="tool"/>
  <joint name="joint1" type="revolute">
    <parent link="base"/><child link="link1"/>
    <origin xyz="0 0 0" rpy="0 0 0"/>
    <axis xyz="0 0 1"/>
    <limit lower="{-limit}" upper="{limit}" velocity="3.0" effort="10"/>
  </joint>
  <joint name="joint2" type="revolute">
    <parent link="link1"/><child link="link2"/>
    <origin xyz="1.0 0 0" rpy="0 0 0"/>
    <axis xyz="0 0 1"/>
    <limit lower="{-limit}" upper="{limit}" velocity="3.0" effort="10"/>
  </joint>
  <joint name="tool_fixed" type="fixed">
    <parent link="link2"/><child link="tool"/>
    <origin xyz="1.0 0 0" rpy="0 0 0"/>
  </joint>
</robot>
"""


def _capsule_xml(a, b, r) -> str:
    ax, ay, az = a
    bx, by, bz = b
    cx, cy, cz = (ax + bx) / 2, (ay + by) / 2, (az + bz) / 2
    length = math.dist(a, b)
    # cylinder axis is local z; rotate it onto x
    return (f'<collision><origin xyz="{cx} {cy} {cz}" rpy="0 {math.pi / 2} 0"/>'
            f'<geometry><cylinder radius="{r}" length="{length}"/></geometry></collision>')


def _arm_xml(prefix: str, parent: str, mount_xyz: str) -> str:
    parts = [f'  <link name="{prefix}mount"/>',
             f'  <joint name="{prefix}mount_fixed" type="fixed"><parent link="{parent}"/>'
             f'<child link="{prefix}mount"/><origin xyz="{mount_xyz}" rpy="0 0 0"/></joint>']
    prev = f"{prefix}mount"
    for i, (name, axis, xyz, (lo, hi)) in enumerate(ARM_JOINTS, start=1):
        link = f"{prefix}link{i}"
        cap = ARM_CAPSULES.get(f"link{i}")
        body = _capsule_xml(*cap) if cap else ""
        parts.append(f'  <link name="{link}">{body}</link>')
        parts.append(
            f'  <joint name="{prefix}{name}" type="revolute"><parent link="{prev}"/><child link="{link}"/>'
            f'<origin xyz="{xyz}" rpy="0 0 0"/><axis xyz="{axis}"/>'
            f'<limit lower="{lo}" upper="{hi}" velocity="{ARM_VELOCITY_LIMIT}" effort="20"/></joint>')
        prev = link
    parts.append(f'  <link name="{prefix}tcp"/>')
    parts.append(f'  <joint name="{prefix}tcp_fixed" type="fixed"><parent link="{prev}"/>'
                 f'<child link="{prefix}tcp"/><origin xyz="{TCP_OFFSET}" rpy="0 0 0"/></joint>')
    return "\n".join(parts)


def arm6_urdf() -> str:
    """Single 6-DoF arm; end effector link ``tcp``."""
    return ('<?xml version="1.0"?>\n<robot name="arm6">\n  <link name="base"/>\n'
            + _arm_xml("", "base", "0 0 0") + "\n</robot>\n")


def dual_arm_urdf() -> str:
    """Two 6-DoF arms on a torso, mounted at y = +/-0.2 m; tips ``l_tcp`` and ``r_tcp``."""
    return ('<?xml version="1.0"?>\n<robot name="dual6">\n  <link name="torso"/>\n'
            + _arm_xml("l_", "torso", f"0 {MOUNT_Y} 0") + "\n"
            + _arm_xml("r_", "torso", f"0 {-MOUNT_Y} 0") + "\n</robot>\n")


DUAL_ARM_EE = {"left": "l_tcp", "right": "r_tcp"}
DUAL_ARM_HOME = ARM_HOME + ARM_HOME

"""Robot model types and the URDF reader."""
from __future__ import annotations

import logging
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ..errors import (
    ConfigLengthMismatch,
    CyclicKinematicTree,
    DanglingChildLink,
    DanglingParentLink,
    MalformedXml,
    MissingAxis,
    UnknownLink,
    UrdfError,
)
from ..transforms import Pose6D

logger = logging.getLogger(__name__)

CONTINUOUS_LIMIT = 1e9
_SKIPPED_TAGS = ("transmission", "gazebo", "material")


@dataclass(frozen=True)
class Capsule:
    a: tuple[float, float, float]
    b: tuple[float, float, float]
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"capsule radius must be positive, got {self.radius}")
        if not all(math.isfinite(v) for v in (*self.a, *self.b)):
            raise ValueError("capsule endpoints must be finite")


@dataclass(frozen=True)
class Link:
    name: str
    collision_capsules: tuple[Capsule, ...] = ()


@dataclass(frozen=True)
class Joint:
    name: str
    kind: str  # revolute | prismatic | fixed
    parent: str
    child: str
    origin: Pose6D = Pose6D()
    axis: tuple[float, float, float] = (1.0, 0.0, 0.0)
    limit_lower: float = -CONTINUOUS_LIMIT
    limit_upper: float = CONTINUOUS_LIMIT
    velocity_limit: float = CONTINUOUS_LIMIT

    def __post_init__(self):
        if self.kind not in ("revolute", "prismatic", "fixed"):
            raise UrdfError(f"joint {self.name!r}: unsupported kind {self.kind!r}")
        if self.kind != "fixed" and abs(np.linalg.norm(self.axis) - 1.0) > 1e-9:
            raise UrdfError(f"joint {self.name!r}: axis is not unit length")
        if self.limit_lower > self.limit_upper:
            raise UrdfError(f"joint {self.name!r}: lower limit above upper limit")

    @property
    def is_active(self) -> bool:
        return self.kind != "fixed"


@dataclass(frozen=True)
class RobotModel:
    """Kinematic tree with joints stored in topological order.

    Immutable; derived lookup tables are built once in ``__post_init__``.
    """

    name: str
    joints: tuple[Joint, ...]
    links: tuple[Link, ...]
    base_frame: str
    end_effectors: tuple[tuple[str, str], ...] = ()
    collision_pairs: tuple[tuple[str, str], ...] = ()
    warnings: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        link_names = [l.name for l in self.links]
        known = set(link_names)
        if self.base_frame not in known:
            raise UnknownLink(self.base_frame)
        seen = {self.base_frame}
        for j in self.joints:
            if j.parent not in seen:
                raise UrdfError(f"joint {j.name!r} is not in topological order")
            seen.add(j.child)
        for arm, link in self.end_effectors:
            if link not in known:
                raise UnknownLink(f"end effector {arm!r} -> {link!r}")
        adjacent = {frozenset((j.parent, j.child)) for j in self.joints}
        for a, b in self.collision_pairs:
            if frozenset((a, b)) in adjacent:
                raise UrdfError(f"collision pair ({a}, {b}) is adjacent")

        active = [i for i, j in enumerate(self.joints) if j.is_active]
        col_of = {ji: c for c, ji in enumerate(active)}
        child_joint = {j.child: i for i, j in enumerate(self.joints)}
        paths: dict[str, tuple[int, ...]] = {}
        for name in link_names:
            path = []
            cur = name
            while cur in child_joint:
                ji = child_joint[cur]
                path.append(ji)
                cur = self.joints[ji].parent
            paths[name] = tuple(reversed(path))
        origins = [j.origin.matrix() for j in self.joints]
        axes = [np.asarray(j.axis, dtype=float) for j in self.joints]
        cache = {
            "active": tuple(active),
            "col_of": col_of,
            "paths": paths,
            "origins": origins,
            "axes": axes,
            "link_index": {n: i for i, n in enumerate(link_names)},
            "joint_index": {j.name: i for i, j in enumerate(self.joints)},
        }
        object.__setattr__(self, "_cache", cache)

    @property
    def dof(self) -> int:
        return len(self._cache["active"])

    @property
    def active_joints(self) -> list[Joint]:
        return [self.joints[i] for i in self._cache["active"]]

    @property
    def lower_limits(self) -> np.ndarray:
        return np.array([j.limit_lower for j in self.active_joints])

    @property
    def upper_limits(self) -> np.ndarray:
        return np.array([j.limit_upper for j in self.active_joints])

    def link(self, name: str) -> Link:
        try:
            return self.links[self._cache["link_index"][name]]
        except KeyError:
            raise UnknownLink(name) from None

    def ee_link(self, arm: str) -> str:
        for a, link in self.end_effectors:
            if a == arm:
                return link
        raise UnknownLink(f"no end effector for arm {arm!r}")

    @property
    def arms(self) -> list[str]:
        return [a for a, _ in self.end_effectors]

    def path_to(self, link: str) -> tuple[int, ...]:
        try:
            return self._cache["paths"][link]
        except KeyError:
            raise UnknownLink(link) from None

    def arm_columns(self, arm: str) -> list[int]:
        """Indices into a JointConfig of the joints that move ``arm``'s end effector."""
        col_of = self._cache["col_of"]
        return [col_of[i] for i in self.path_to(self.ee_link(arm)) if i in col_of]

    def check_config(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if q.shape != (self.dof,):
            raise ConfigLengthMismatch(f"expected {self.dof} joint values, got shape {q.shape}")
        return q

    def with_end_effectors(self, end_effectors: Mapping[str, str]) -> "RobotModel":
        return RobotModel(self.name, self.joints, self.links, self.base_frame,
                          tuple(end_effectors.items()), self.collision_pairs, self.warnings)


def _floats(text: str | None, n: int, default: Sequence[float]) -> tuple[float, ...]:
    if text is None:
        return tuple(default)
    vals = tuple(float(v) for v in text.split())
    if len(vals) != n:
        raise UrdfError(f"expected {n} numbers, got {text!r}")
    return vals


def _origin(elem: ET.Element | None) -> Pose6D:
    if elem is None:
        return Pose6D()
    xyz = _floats(elem.get("xyz"), 3, (0, 0, 0))
    rpy = _floats(elem.get("rpy"), 3, (0, 0, 0))
    return Pose6D.from_rpy(xyz, rpy)


def _collision_capsules(link_el: ET.Element, warnings: list[str]) -> tuple[Capsule, ...]:
    name = link_el.get("name")
    capsules = []
    for col in link_el.findall("collision"):
        frame = _origin(col.find("origin"))
        geom = col.find("geometry")
        if geom is None or len(geom) == 0:
            continue
        shape = geom[0]
        if shape.tag in ("cylinder", "capsule"):
            r = float(shape.get("radius"))
            half = 0.5 * float(shape.get("length"))
            a = frame.apply((0.0, 0.0, -half))
            b = frame.apply((0.0, 0.0, half))
        elif shape.tag == "sphere":
            r = float(shape.get("radius"))
            a = b = np.asarray(frame.translation)
        else:
            warnings.append(f"link {name!r}: skipped unsupported collision geometry <{shape.tag}>")
            continue
        capsules.append(Capsule(tuple(float(v) for v in a), tuple(float(v) for v in b), r))
    for vis in link_el.findall("visual/geometry/mesh"):
        warnings.append(f"link {name!r}: skipped mesh {vis.get('filename')!r}")
    return tuple(capsules)


def _joint(el: ET.Element) -> Joint:
    name = el.get("name")
    kind = el.get("type")
    parent = el.find("parent")
    child = el.find("child")
    if parent is None or child is None:
        raise UrdfError(f"joint {name!r} lacks parent or child")
    lower, upper, vel = -CONTINUOUS_LIMIT, CONTINUOUS_LIMIT, CONTINUOUS_LIMIT
    lim = el.find("limit")
    if kind == "continuous":
        kind = "revolute"
        if lim is not None and lim.get("velocity") is not None:
            vel = float(lim.get("velocity"))
    elif lim is not None:
        lower = float(lim.get("lower", lower))
        upper = float(lim.get("upper", upper))
        vel = float(lim.get("velocity", vel))
    if kind not in ("revolute", "prismatic", "fixed"):
        raise UrdfError(f"joint {name!r}: unsupported type {kind!r}")
    axis = (1.0, 0.0, 0.0)
    if kind != "fixed":
        ax = el.find("axis")
        if ax is None or ax.get("xyz") is None:
            raise MissingAxis(f"joint {name!r} has no axis")
        v = np.array(_floats(ax.get("xyz"), 3, ()))
        n = np.linalg.norm(v)
        if n < 1e-12:
            raise UrdfError(f"joint {name!r}: zero axis")
        axis = tuple(float(x) for x in v / n)
    return Joint(name=name, kind=kind, parent=parent.get("link"), child=child.get("link"),
                 origin=_origin(el.find("origin")), axis=axis,
                 limit_lower=lower, limit_upper=upper, velocity_limit=vel)


def parse_urdf(text: str, end_effectors: Mapping[str, str] | None = None) -> RobotModel:
    """Read the supported URDF subset into a :class:`RobotModel`.

    ``end_effectors`` maps arm ids to link names. When omitted, every leaf link
    becomes an end effector named after itself. Collision pairs are all
    non-adjacent pairs of links that carry capsules.
    """
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise MalformedXml(str(exc)) from None
    if root.tag != "robot":
        raise MalformedXml(f"root element is <{root.tag}>, expected <robot>")

    warnings: list[str] = []
    links: dict[str, Link] = {}
    for el in root.findall("link"):
        name = el.get("name")
        links[name] = Link(name, _collision_capsules(el, warnings))
    joints = [_joint(el) for el in root.findall("joint")]
    for el in root:
        if el.tag in _SKIPPED_TAGS:
            warnings.append(f"skipped <{el.tag}> element")
        elif el.tag not in ("link", "joint"):
            warnings.append(f"skipped unknown element <{el.tag}>")

    for j in joints:
        if j.parent not in links:
            raise DanglingParentLink(f"joint {j.name!r}: parent link {j.parent!r} is not declared")
        if j.child not in links:
            raise DanglingChildLink(f"joint {j.name!r}: child link {j.child!r} is not declared")

    children: dict[str, list[Joint]] = {}
    child_count: dict[str, int] = {}
    for j in joints:
        children.setdefault(j.parent, []).append(j)
        child_count[j.child] = child_count.get(j.child, 0) + 1
    if any(c > 1 for c in child_count.values()):
        raise CyclicKinematicTree("a link is the child of more than one joint")
    roots = [n for n in links if n not in child_count]
    if not roots:
        raise CyclicKinematicTree("no root link")
    if len(roots) > 1:
        raise UrdfError(f"multiple root links: {roots}")

    # depth-first in document order keeps each serial chain contiguous
    ordered: list[Joint] = []
    stack = [roots[0]]
    while stack:
        cur = stack.pop()
        for j in reversed(children.get(cur, [])):
            stack.append(j.child)
        ordered.extend(children.get(cur, []))
    if len(ordered) != len(joints):
        raise CyclicKinematicTree("joints unreachable from the root link form a cycle")

    if end_effectors is None:
        leaves = [n for n in links if n not in children and n != roots[0]]
        end_effectors = {n: n for n in leaves}

    adjacent = {frozenset((j.parent, j.child)) for j in ordered}
    with_geom = [n for n, l in links.items() if l.collision_capsules]
    pairs = tuple(
        (a, b)
        for i, a in enumerate(with_geom)
        for b in with_geom[i + 1:]
        if frozenset((a, b)) not in adjacent
    )
    for w in warnings:
        logger.debug("urdf: %s", w)
    return RobotModel(
        name=root.get("name", ""),
        joints=tuple(ordered),
        links=tuple(links.values()),
        base_frame=roots[0],
        end_effectors=tuple(end_effectors.items()),
        collision_pairs=pairs,
        warnings=tuple(warnings),
    )

"""URDF subset parser producing an immutable serial kinematic chain.

Only ``<link><inertial>``, ``<joint type="revolute|fixed">`` with
``<origin>``, ``<axis>`` and ``<limit>`` are consumed; everything else is
ignored with a logged warning. Fixed joints are folded into the next moving
joint's origin and their child-link inertia is merged into the preceding
moving link, so the resulting chain contains revolute joints only.
"""

import json
import logging
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import axis_rotation, make_transform, rpy_matrix

logger = logging.getLogger(__name__)

DEFAULT_GRAVITY = (0.0, 0.0, -9.81)
DEFAULT_VELOCITY_LIMIT = 1.0  # rad/s, applied when <limit velocity> is absent

# URDF tags we deliberately do not consume
_IGNORED_TAGS = {
    "visual", "collision", "material", "gazebo", "transmission",
    "mimic", "dynamics", "safety_controller", "calibration", "sensor",
}


class UrdfError(ValueError):
    """Raised for malformed or unsupported robot descriptions."""


@dataclass(frozen=True)
class JointSpec:
    """One revolute joint: fixed origin transform plus a rotation axis.

    ``rotation``/``translation`` map joint-frame vectors/points into the
    parent link frame; the joint variable rotates about ``axis`` expressed
    in the joint frame.
    """

    name: str
    rotation: np.ndarray      # (3, 3)
    translation: np.ndarray   # (3,)
    axis: np.ndarray          # (3,) unit
    q_min: float
    q_max: float
    dq_min: float
    dq_max: float

    def __post_init__(self):
        if abs(np.linalg.norm(self.axis) - 1.0) > 1e-9:
            raise UrdfError(f"joint {self.name}: axis must have unit norm")
        if not self.q_min < self.q_max:
            raise UrdfError(f"joint {self.name}: requires q_min < q_max")
        if not (self.dq_min < 0.0 < self.dq_max):
            raise UrdfError(f"joint {self.name}: requires dq_min < 0 < dq_max")


@dataclass(frozen=True)
class LinkSpec:
    """Rigid-body data of one moving link.

    ``inertia`` is the symmetric tensor about the centre of mass, expressed
    in link-frame axes. ``com`` is the centre of mass in the link frame.
    """

    name: str
    mass: float
    com: np.ndarray      # (3,)
    inertia: np.ndarray  # (3, 3)

    def __post_init__(self):
        if self.mass < 0.0:
            raise UrdfError(f"link {self.name}: negative mass")
        if np.max(np.abs(self.inertia - self.inertia.T)) > 1e-12:
            raise UrdfError(f"link {self.name}: inertia tensor not symmetric")
        w = np.sort(np.linalg.eigvalsh(self.inertia))
        if w[0] < -1e-12:
            logger.warning("link %s: inertia tensor not PSD (min eig %.3e)",
                           self.name, w[0])
        elif w[0] + w[1] < w[2] - 1e-12:
            # URDF files are sometimes non-physical; warn, do not reject.
            logger.warning("link %s: principal moments violate the triangle "
                           "inequality", self.name)


@dataclass(frozen=True)
class KinematicChain:
    """Unbranched serial chain of revolute joints, root to tip.

    Joint ``i`` connects the frame of link ``i-1`` (world for ``i = 0``) to
    the frame of link ``i``; ``links[i]`` is the body rigidly attached to
    that frame. Instances are immutable; change gravity with
    :func:`dataclasses.replace`.
    """

    joints: tuple
    links: tuple
    gravity: np.ndarray = field(default_factory=lambda: np.array(DEFAULT_GRAVITY))

    def __post_init__(self):
        if len(self.joints) != len(self.links):
            raise UrdfError("joint/link count mismatch")
        if len(self.joints) == 0:
            raise UrdfError("chain has no moving joints")
        object.__setattr__(self, "gravity", np.asarray(self.gravity, dtype=float))

    @property
    def dof(self) -> int:
        return len(self.joints)

    @property
    def joint_names(self):
        return [j.name for j in self.joints]

    def limits(self):
        """(q_min, q_max, dq_min, dq_max) as arrays of length dof."""
        j = self.joints
        return (np.array([s.q_min for s in j]), np.array([s.q_max for s in j]),
                np.array([s.dq_min for s in j]), np.array([s.dq_max for s in j]))


def _parse_floats(text: str, n: int, what: str) -> np.ndarray:
    parts = text.split()
    if len(parts) != n:
        raise UrdfError(f"{what}: expected {n} numbers, got {text!r}")
    return np.array([float(p) for p in parts])


def _parse_origin(elem) -> np.ndarray:
    """<origin xyz rpy> of a joint or inertial block as a 4x4 transform."""
    if elem is None:
        return np.eye(4)
    xyz = _parse_floats(elem.get("xyz", "0 0 0"), 3, "origin xyz")
    rpy = _parse_floats(elem.get("rpy", "0 0 0"), 3, "origin rpy")
    return make_transform(rpy_matrix(*rpy), xyz)


def _parse_inertial(link_elem, link_name: str):
    """Return (mass, com, inertia-about-com in link axes) or None."""
    inertial = link_elem.find("inertial")
    if inertial is None:
        return None
    mass_elem = inertial.find("mass")
    mass = float(mass_elem.get("value")) if mass_elem is not None else 0.0
    origin = _parse_origin(inertial.find("origin"))
    com = origin[:3, 3]
    rot = origin[:3, :3]
    ie = inertial.find("inertia")
    if ie is None:
        tensor = np.zeros((3, 3))
    else:
        ixx, iyy, izz = (float(ie.get(k, "0")) for k in ("ixx", "iyy", "izz"))
        ixy, ixz, iyz = (float(ie.get(k, "0")) for k in ("ixy", "ixz", "iyz"))
        tensor = np.array([[ixx, ixy, ixz], [ixy, iyy, iyz], [ixz, iyz, izz]])
    # URDF states the tensor in the inertial frame; rotate into link axes.
    tensor = rot @ tensor @ rot.T
    tensor = 0.5 * (tensor + tensor.T)
    return mass, com, tensor


def _merge_rigid(m1, c1, i1, m2, c2, i2):
    """Composite mass/com/inertia of two bodies in a common frame."""
    m = m1 + m2
    if m == 0.0:
        return 0.0, np.zeros(3), np.zeros((3, 3))
    c = (m1 * c1 + m2 * c2) / m

    def shift(mi, ci, ii):
        d = ci - c
        return ii + mi * (np.dot(d, d) * np.eye(3) - np.outer(d, d))

    return m, c, shift(m1, c1, i1) + shift(m2, c2, i2)


def parse_urdf(xml_text: str) -> KinematicChain:
    """Parse URDF text into a :class:`KinematicChain`.

    Raises :class:`UrdfError` on malformed XML, branched chains, unsupported
    joint types, or a moving link without an inertial block.
    """
    try:
        root = ET.fromstring(xml_text)
    except ET.ParseError as exc:
        raise UrdfError(f"malformed XML: {exc}") from None
    if root.tag != "robot":
        raise UrdfError("root element must be <robot>")

    ignored = sorted({c.tag for link in root.iter() for c in link
                      if c.tag in _IGNORED_TAGS})
    if ignored:
        logger.warning("ignoring URDF tags: %s", ", ".join(ignored))

    link_elems = {e.get("name"): e for e in root.findall("link")}
    joint_elems = root.findall("joint")
    if not link_elems or not joint_elems:
        raise UrdfError("URDF must contain links and joints")

    joint_by_parent = {}
    for je in joint_elems:
        kind = je.get("type")
        if kind not in ("revolute", "fixed"):
            raise UrdfError(f"unsupported joint type {kind!r} "
                            f"(joint {je.get('name')!r})")
        parent = je.find("parent")
        child = je.find("child")
        if parent is None or child is None:
            raise UrdfError(f"joint {je.get('name')!r}: missing parent/child")
        p, c = parent.get("link"), child.get("link")
        if p not in link_elems or c not in link_elems:
            raise UrdfError(f"joint {je.get('name')!r}: unknown link")
        joint_by_parent.setdefault(p, []).append(je)

    child_names = {je.find("child").get("link") for je in joint_elems}
    roots = [name for name in link_elems if name not in child_names]
    if len(roots) != 1:
        raise UrdfError(f"expected exactly one root link, found {roots}")

    # Walk root -> tip, rejecting branches.
    ordered = []
    current = roots[0]
    while current in joint_by_parent:
        down = joint_by_parent[current]
        if len(down) > 1:
            raise UrdfError(f"branched chain at link {current!r}")
        ordered.append(down[0])
        current = down[0].find("child").get("link")

    joints = []
    links = []
    pending = np.eye(4)  # accumulated fixed-joint transform
    for je in ordered:
        name = je.get("name")
        origin = _parse_origin(je.find("origin"))
        child_name = je.find("child").get("link")
        inertial = _parse_inertial(link_elems[child_name], child_name)

        if je.get("type") == "fixed":
            pending = pending @ origin
            if inertial is not None and inertial[0] > 0.0:
                if not links:
                    logger.warning("dropping inertia of link %s attached "
                                   "before the first moving joint", child_name)
                else:
                    prev = links[-1]
                    m2, c2, i2 = inertial
                    c2w = pending[:3, :3] @ c2 + pending[:3, 3]
                    i2w = pending[:3, :3] @ i2 @ pending[:3, :3].T
                    m, c, i = _merge_rigid(prev.mass, prev.com, prev.inertia,
                                           m2, c2w, i2w)
                    links[-1] = LinkSpec(prev.name, m, c, 0.5 * (i + i.T))
            continue

        if inertial is None:
            raise UrdfError(f"moving link {child_name!r} has no inertial block")
        axis_elem = je.find("axis")
        axis = (_parse_floats(axis_elem.get("xyz"), 3, "axis")
                if axis_elem is not None else np.array([1.0, 0.0, 0.0]))
        norm = np.linalg.norm(axis)
        if norm < 1e-12:
            raise UrdfError(f"joint {name!r}: zero axis")
        axis = axis / norm

        limit = je.find("limit")
        if limit is None or limit.get("lower") is None or limit.get("upper") is None:
            raise UrdfError(f"revolute joint {name!r}: position limits required")
        q_min, q_max = float(limit.get("lower")), float(limit.get("upper"))
        if limit.get("velocity") is not None:
            vmax = abs(float(limit.get("velocity")))
            if vmax == 0.0:
                raise UrdfError(f"joint {name!r}: zero velocity limit")
        else:
            vmax = DEFAULT_VELOCITY_LIMIT
            logger.warning("joint %s: no velocity limit, defaulting to ±%.1f rad/s",
                           name, vmax)

        composed = pending @ origin
        pending = np.eye(4)
        joints.append(JointSpec(name=name, rotation=composed[:3, :3],
                                translation=composed[:3, 3], axis=axis,
                                q_min=q_min, q_max=q_max,
                                dq_min=-vmax, dq_max=vmax))
        m, c, i = inertial
        links.append(LinkSpec(child_name, m, c, i))

    if not joints:
        raise UrdfError("no revolute joints found")

    # Any trailing fixed joints were already merged into links[-1] above via
    # `pending`; the leftover transform carries no dynamics.
    return KinematicChain(joints=tuple(joints), links=tuple(links))


def load_urdf(path) -> KinematicChain:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_urdf(fh.read())


def link_frames(chain: KinematicChain, q) -> list:
    """World->link transforms (4x4 each) for configuration `q`."""
    q = np.asarray(q, dtype=float)
    if q.shape != (chain.dof,):
        raise ValueError(f"q must have length {chain.dof}, got {q.shape}")
    frames = []
    t = np.eye(4)
    for joint, qi in zip(chain.joints, q):
        step = make_transform(joint.rotation @ axis_rotation(joint.axis, qi),
                              joint.translation)
        t = t @ step
        frames.append(t.copy())
    return frames


def batch_link_frames(chain: KinematicChain, q_batch: np.ndarray):
    """Vectorized forward kinematics.

    Parameters
    ----------
    q_batch : (B, dof) joint positions.

    Returns
    -------
    rot : (B, dof, 3, 3) world rotations, pos : (B, dof, 3) world origins.
    """
    q_batch = np.atleast_2d(np.asarray(q_batch, dtype=float))
    b, n = q_batch.shape
    if n != chain.dof:
        raise ValueError(f"q batch must have {chain.dof} columns")
    rot = np.empty((b, n, 3, 3))
    pos = np.empty((b, n, 3))
    r = np.broadcast_to(np.eye(3), (b, 3, 3))
    p = np.zeros((b, 3))
    for i, joint in enumerate(chain.joints):
        m = joint.rotation @ axis_rotation(joint.axis, q_batch[:, i])
        p = p + np.einsum("bij,j->bi", r, joint.translation)
        r = r @ m
        rot[:, i] = r
        pos[:, i] = p
    return rot, pos


def chain_to_dict(chain: KinematicChain) -> dict:
    """Canonical JSON-serializable dump (origins as 4x4 row-major)."""
    joints = []
    for j in chain.joints:
        joints.append({
            "name": j.name,
            "origin": make_transform(j.rotation, j.translation).reshape(-1).tolist(),
            "axis": j.axis.tolist(),
            "q_min": j.q_min, "q_max": j.q_max,
            "dq_min": j.dq_min, "dq_max": j.dq_max,
        })
    links = []
    for l in chain.links:
        links.append({
            "name": l.name, "mass": l.mass,
            "com": l.com.tolist(),
            "inertia": l.inertia.reshape(-1).tolist(),
        })
    return {"dof": chain.dof, "gravity": chain.gravity.tolist(),
            "joints": joints, "links": links}


def chain_from_dict(data: dict) -> KinematicChain:
    joints = []
    for j in data["joints"]:
        origin = np.array(j["origin"], dtype=float).reshape(4, 4)
        joints.append(JointSpec(name=j["name"], rotation=origin[:3, :3],
                                translation=origin[:3, 3],
                                axis=np.array(j["axis"], dtype=float),
                                q_min=j["q_min"], q_max=j["q_max"],
                                dq_min=j["dq_min"], dq_max=j["dq_max"]))
    links = []
    for l in data["links"]:
        links.append(LinkSpec(name=l["name"], mass=l["mass"],
                              com=np.array(l["com"], dtype=float),
                              inertia=np.array(l["inertia"], dtype=float).reshape(3, 3)))
    return KinematicChain(joints=tuple(joints), links=tuple(links),
                          gravity=np.array(data["gravity"], dtype=float))


def chain_to_json(chain: KinematicChain) -> str:
    return json.dumps(chain_to_dict(chain), indent=2)


def chain_from_json(text: str) -> KinematicChain:
    return chain_from_dict(json.loads(text))


def with_gravity(chain: KinematicChain, gravity) -> KinematicChain:
    return replace(chain, gravity=np.asarray(gravity, dtype=float))

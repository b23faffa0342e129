"""Room, access point, user body and terminal geometry.

Coordinates: the room is centred on the origin in the horizontal plane
(x in [-L/2, L/2], y in [-W/2, W/2]) with the floor at z = 0. Angles are
radians everywhere except in configuration files, which use degrees.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import _kernels
from .errors import DomainError, PlacementError

# body and terminal placement
UE_CHEST_OFFSET = 0.35
UE_HEIGHT = {"walking": 1.4, "sitting": 0.9}
BODY_HEIGHT = {"walking": 1.75, "sitting": 1.25}
BODY_WIDTH = 0.66
BODY_DEPTH = 0.2
MEAN_POLAR_DEG = {"sitting": 41.13, "walking": 27.75}
ACTIVITIES = ("sitting", "walking")


@dataclass(frozen=True)
class Room:
    length: float = 5.0
    width: float = 3.5
    height: float = 3.0
    rho_wall: float = 0.3
    rho_ceiling: float = 0.69
    rho_floor: float = 0.09

    def __post_init__(self):
        if min(self.length, self.width, self.height) <= 0:
            raise DomainError("room dimensions must be positive")
        for rho in (self.rho_wall, self.rho_ceiling, self.rho_floor):
            if not 0.0 <= rho <= 1.0:
                raise DomainError(f"reflectivity {rho} outside [0, 1]")

    @property
    def bounds(self):
        return (np.array([-self.length / 2, -self.width / 2, 0.0]),
                np.array([self.length / 2, self.width / 2, self.height]))

    def contains(self, point, tol=1e-9) -> bool:
        lo, hi = self.bounds
        p = np.asarray(point, dtype=float)
        return bool(np.all(p >= lo - tol) and np.all(p <= hi + tol))


@dataclass(frozen=True)
class AccessPoint:
    position: tuple = (0.0, 0.0, 3.0)
    lambertian_order: float = 1.0
    normal: tuple = (0.0, 0.0, -1.0)

    def __post_init__(self):
        if self.lambertian_order < 1:
            raise DomainError("Lambertian order must be >= 1")
        n = np.asarray(self.normal, dtype=float)
        if abs(np.linalg.norm(n) - 1.0) > 1e-9:
            raise DomainError("AP normal must be a unit vector")


@dataclass(frozen=True)
class BodyPrism:
    """User body as a box standing on the floor.

    ``anchor`` is the left corner of the chest face as seen from behind the
    user; the chest face spans ``length`` along the lateral axis and the
    body extends ``depth`` behind it, away from the facing direction.
    """

    anchor: tuple
    direction: float
    length: float = BODY_WIDTH
    depth: float = BODY_DEPTH
    height: float = BODY_HEIGHT["walking"]
    rho_body: float = 0.6
    rho_hair: float = 0.9

    def __post_init__(self):
        if min(self.length, self.depth, self.height) <= 0:
            raise DomainError("body dimensions must be positive")
        for rho in (self.rho_body, self.rho_hair):
            if not 0.0 <= rho <= 1.0:
                raise DomainError(f"reflectivity {rho} outside [0, 1]")

    @property
    def forward(self) -> np.ndarray:
        return np.array([math.cos(self.direction), math.sin(self.direction), 0.0])

    @property
    def lateral(self) -> np.ndarray:
        return np.array([-math.sin(self.direction), math.cos(self.direction), 0.0])

    @property
    def center(self) -> np.ndarray:
        a = np.array([self.anchor[0], self.anchor[1], 0.0])
        c = a + 0.5 * self.length * self.lateral - 0.5 * self.depth * self.forward
        c[2] = 0.5 * self.height
        return c

    def corners(self) -> np.ndarray:
        """Footprint corners, shape (4, 2)."""
        a = np.asarray(self.anchor, dtype=float)
        lat = self.lateral[:2] * self.length
        back = -self.forward[:2] * self.depth
        return np.array([a, a + lat, a + back, a + lat + back])

    def box_params(self) -> np.ndarray:
        """Packed (center, half extents, lateral xy, forward xy) for the kernels."""
        c = self.center
        return np.array([c[0], c[1], c[2],
                         self.length / 2, self.depth / 2, self.height / 2,
                         self.lateral[0], self.lateral[1],
                         self.forward[0], self.forward[1]])


@dataclass(frozen=True)
class UePose:
    position: tuple
    polar: float
    azimuth: float
    area: float = 1e-4
    fov: float = math.pi / 2
    responsivity: float = 0.6

    def __post_init__(self):
        if not 0.0 <= self.polar <= math.pi / 2 + 1e-12:
            raise DomainError(f"polar angle {self.polar} outside [0, pi/2]")
        if self.area <= 0:
            raise DomainError("receiver area must be positive")
        if not 0.0 < self.fov <= math.pi / 2 + 1e-12:
            raise DomainError("FoV must lie in (0, pi/2]")

    @property
    def normal(self) -> np.ndarray:
        return orientation_to_normal(self.polar, self.azimuth)


@dataclass(frozen=True)
class Scene:
    room: Room = field(default_factory=Room)
    ap: AccessPoint = field(default_factory=AccessPoint)
    ue: Optional[UePose] = None
    body: Optional[BodyPrism] = None
    activity: str = "walking"

    def without_body(self) -> "Scene":
        return replace(self, body=None)


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    w = math.remainder(a, 2 * math.pi)
    if w <= -math.pi:
        w += 2 * math.pi
    return w


def orientation_to_normal(polar: float, azimuth: float) -> np.ndarray:
    if not 0.0 <= polar <= math.pi / 2 + 1e-12:
        raise DomainError(f"polar angle {polar} outside [0, pi/2]")
    s = math.sin(polar)
    return np.array([s * math.cos(azimuth), s * math.sin(azimuth), math.cos(polar)])


def build_scene(activity: str, user_anchor, direction: float,
                room: Optional[Room] = None, ap: Optional[AccessPoint] = None,
                polar: Optional[float] = None, with_body: bool = True,
                **ue_kwargs) -> Scene:
    """Place a user body and the handheld terminal in front of the chest.

    The terminal sits ``UE_CHEST_OFFSET`` in front of the middle of the chest
    face and points back towards the user: its azimuth is ``direction - pi``.
    ``polar`` defaults to the activity's mean tilt.
    """
    if activity not in ACTIVITIES:
        raise DomainError(f"unknown activity {activity!r}")
    room = room or Room()
    ap = ap or AccessPoint()
    body = BodyPrism(anchor=(float(user_anchor[0]), float(user_anchor[1])),
                     direction=float(direction), height=BODY_HEIGHT[activity])
    lo, hi = room.bounds
    fp = body.corners()
    if np.any(fp < lo[:2] - 1e-9) or np.any(fp > hi[:2] + 1e-9) or body.height > room.height:
        raise PlacementError(f"body at anchor {tuple(user_anchor)} leaves the room")
    a = np.array([user_anchor[0], user_anchor[1], 0.0])
    pos = a + 0.5 * body.length * body.lateral + UE_CHEST_OFFSET * body.forward
    pos[2] = UE_HEIGHT[activity]
    if not room.contains(pos):
        raise PlacementError(f"terminal at {pos} lies outside the room")
    if polar is None:
        polar = math.radians(MEAN_POLAR_DEG[activity])
    ue = UePose(position=tuple(float(v) for v in pos), polar=float(polar),
                azimuth=wrap_angle(direction - math.pi), **ue_kwargs)
    return Scene(room=room, ap=ap, ue=ue, body=body if with_body else None,
                 activity=activity)


def segment_blocked(p, q, body: Optional[BodyPrism]) -> bool:
    """True if the open segment p-q passes through the body interior."""
    if body is None:
        return False
    p = np.asarray(p, dtype=float).reshape(1, 3)
    q = np.asarray(q, dtype=float).reshape(1, 3)
    if np.allclose(p, q):
        raise DomainError("segment endpoints coincide")
    return bool(_kernels.segments_blocked(p, q, body.box_params())[0])


def link_angles(tx_pos, tx_normal, rx_pos, rx_normal):
    """Departure angle, incidence angle and distance of a point-to-point link."""
    tx = np.asarray(tx_pos, dtype=float)
    rx = np.asarray(rx_pos, dtype=float)
    v = rx - tx
    d = float(np.linalg.norm(v))
    if d == 0.0:
        raise DomainError("transmitter and receiver coincide")
    cphi = float(np.dot(tx_normal, v)) / d
    cpsi = float(np.dot(rx_normal, -v)) / d
    return math.acos(max(-1.0, min(1.0, cphi))), math.acos(max(-1.0, min(1.0, cpsi))), d


def ue_link_angles(scene: Scene):
    ap, ue = scene.ap, scene.ue
    return link_angles(ap.position, ap.normal, ue.position, ue.normal)


# -- configuration files ---------------------------------------------------

def scene_to_dict(scene: Scene) -> dict:
    """Plain nested dict with degrees for angles, suitable for YAML."""
    out = {
        "activity": scene.activity,
        "room": {"length": scene.room.length, "width": scene.room.width,
                 "height": scene.room.height, "rho_wall": scene.room.rho_wall,
                 "rho_ceiling": scene.room.rho_ceiling, "rho_floor": scene.room.rho_floor},
        "ap": {"position": list(scene.ap.position),
               "lambertian_order": scene.ap.lambertian_order,
               "normal": list(scene.ap.normal)},
    }
    if scene.ue is not None:
        ue = scene.ue
        out["ue"] = {"position": list(ue.position),
                     "polar_deg": math.degrees(ue.polar),
                     "azimuth_deg": math.degrees(ue.azimuth),
                     "area": ue.area, "fov_deg": math.degrees(ue.fov),
                     "responsivity": ue.responsivity}
    if scene.body is not None:
        b = scene.body
        out["body"] = {"anchor": list(b.anchor), "direction_deg": math.degrees(b.direction),
                       "length": b.length, "depth": b.depth, "height": b.height,
                       "rho_body": b.rho_body, "rho_hair": b.rho_hair}
    return out


def scene_from_dict(cfg: dict) -> Scene:
    """Inverse of :func:`scene_to_dict`.

    A ``user`` section (``anchor``, ``direction_deg``, optional ``polar_deg``)
    may replace explicit ``ue``/``body`` sections; the placement rule of
    :func:`build_scene` is then applied.
    """
    room = Room(**cfg.get("room", {}))
    ap_cfg = dict(cfg.get("ap", {}))
    for key in ("position", "normal"):
        if key in ap_cfg:
            ap_cfg[key] = tuple(float(v) for v in ap_cfg[key])
    ap = AccessPoint(**ap_cfg)
    activity = cfg.get("activity", "walking")
    if "user" in cfg:
        u = cfg["user"]
        polar = u.get("polar_deg")
        return build_scene(activity, u["anchor"], math.radians(u["direction_deg"]),
                           room=room, ap=ap,
                           polar=None if polar is None else math.radians(polar),
                           with_body=u.get("with_body", True))
    ue = body = None
    if "ue" in cfg:
        u = cfg["ue"]
        ue = UePose(position=tuple(float(v) for v in u["position"]),
                    polar=math.radians(u["polar_deg"]),
                    azimuth=wrap_angle(math.radians(u["azimuth_deg"])),
                    area=u.get("area", 1e-4), fov=math.radians(u.get("fov_deg", 90.0)),
                    responsivity=u.get("responsivity", 0.6))
    if "body" in cfg:
        b = cfg["body"]
        body = BodyPrism(anchor=tuple(float(v) for v in b["anchor"]),
                         direction=math.radians(b["direction_deg"]),
                         length=b.get("length", BODY_WIDTH), depth=b.get("depth", BODY_DEPTH),
                         height=b.get("height", BODY_HEIGHT[activity]),
                         rho_body=b.get("rho_body", 0.6), rho_hair=b.get("rho_hair", 0.9))
    return Scene(room=room, ap=ap, ue=ue, body=body, activity=activity)

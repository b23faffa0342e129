"""Frequency-domain optical channel: LOS link plus all diffuse reflections.

Every room and body surface is tiled into Lambertian elements. The diffuse
response at frequency f is

    H_diff(f) = r(f)^T Gr (I - G(f) Gr)^-1 t(f),

with t the AP-to-element transfers, r the element-to-UE transfers, G the
element-to-element transfer matrix and Gr = diag(rho). It is evaluated by a
linear solve per frequency.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .errors import (DegenerateGeometryError, DomainError, IllConditionedSceneError,
                     ResourceError, UndefinedRatioError)
from .geometry import Scene, link_angles, segment_blocked

SPEED_OF_LIGHT = 299_792_458.0
DEFAULT_RESOLUTION = 2.0
DEFAULT_MAX_ELEMENTS = 4000
# bytes of complex system matrices solved in one batch
_BATCH_BYTES = 256 * 1024 * 1024


@dataclass(frozen=True)
class SurfaceElement:
    center: tuple
    normal: tuple
    area: float
    rho: float
    surface: str = ""


@dataclass(frozen=True)
class ElementSet:
    """Struct-of-arrays view of a tiling."""

    centers: np.ndarray
    normals: np.ndarray
    areas: np.ndarray
    rho: np.ndarray
    surfaces: tuple

    def __len__(self):
        return len(self.areas)

    def __getitem__(self, i) -> SurfaceElement:
        return SurfaceElement(tuple(self.centers[i]), tuple(self.normals[i]),
                              float(self.areas[i]), float(self.rho[i]), self.surfaces[i])

    @classmethod
    def from_elements(cls, elements: Sequence[SurfaceElement]) -> "ElementSet":
        if len(elements) == 0:
            raise DomainError("element list is empty")
        return cls(centers=np.array([e.center for e in elements], dtype=float),
                   normals=np.array([e.normal for e in elements], dtype=float),
                   areas=np.array([e.area for e in elements], dtype=float),
                   rho=np.array([e.rho for e in elements], dtype=float),
                   surfaces=tuple(e.surface for e in elements))

    def with_rho(self, rho) -> "ElementSet":
        rho = np.broadcast_to(np.asarray(rho, dtype=float), self.areas.shape).copy()
        return ElementSet(self.centers, self.normals, self.areas, rho, self.surfaces)


@dataclass(frozen=True)
class ChannelResponse:
    freqs: np.ndarray
    h_los: np.ndarray
    h_diff: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.freqs, dtype=float)
        if f.ndim != 1 or (len(f) > 1 and np.any(np.diff(f) <= 0)):
            raise DomainError("frequency grid must be strictly increasing")
        if not (len(f) == len(self.h_los) == len(self.h_diff)):
            raise DomainError("response arrays must match the grid")

    @property
    def h_cir(self) -> np.ndarray:
        return self.h_los + self.h_diff

    def dc(self, part: str = "cir") -> float:
        """Real DC value of 'los', 'diff' or 'cir'."""
        idx = np.flatnonzero(self.freqs == 0.0)
        if len(idx) == 0:
            raise DomainError("grid does not contain 0 Hz")
        h = {"los": self.h_los, "diff": self.h_diff, "cir": self.h_cir}[part]
        return float(h[idx[0]].real)

    def los_only(self) -> "ChannelResponse":
        return ChannelResponse(self.freqs, self.h_los, np.zeros_like(self.h_diff))

    def at(self, f, part: str = "cir") -> np.ndarray:
        """Linear interpolation of the complex response; exact on grid points."""
        from .errors import InterpolationRangeError
        f = np.asarray(f, dtype=float)
        h = {"los": self.h_los, "diff": self.h_diff, "cir": self.h_cir}[part]
        lo, hi = self.freqs[0], self.freqs[-1]
        if np.any(f < lo - 1e-9 * max(1.0, abs(lo))) or np.any(f > hi * (1 + 1e-12)):
            raise InterpolationRangeError(
                f"frequency outside channel grid [{lo:g}, {hi:g}] Hz")
        return np.interp(f, self.freqs, h.real) + 1j * np.interp(f, self.freqs, h.imag)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["frequency_hz", "re_los", "im_los", "re_diff", "im_diff"])
            for f, a, b in zip(self.freqs, self.h_los, self.h_diff):
                w.writerow([repr(float(f)), repr(float(a.real)), repr(float(a.imag)),
                            repr(float(b.real)), repr(float(b.imag))])

    @classmethod
    def from_csv(cls, path) -> "ChannelResponse":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0], data[:, 1] + 1j * data[:, 2], data[:, 3] + 1j * data[:, 4])


# -- tiling ------------------------------------------------------------------

def _n_tiles(length: float, resolution: float) -> int:
    return max(1, math.ceil(length * resolution - 1e-9))


def _tile_rect(origin, e1, e2, l1, l2, normal, rho, label, resolution, out):
    """Tile the rectangle origin + s*e1 + t*e2, s in [0,l1], t in [0,l2]."""
    n1, n2 = _n_tiles(l1, resolution), _n_tiles(l2, resolution)
    a1, a2 = l1 / n1, l2 / n2
    origin, e1, e2 = (np.asarray(v, dtype=float) for v in (origin, e1, e2))
    for i in range(n1):
        for j in range(n2):
            c = origin + (i + 0.5) * a1 * e1 + (j + 0.5) * a2 * e2
            out.append(SurfaceElement(tuple(c), tuple(normal), a1 * a2, rho, label))


def partition_surfaces(scene: Scene, resolution: float = DEFAULT_RESOLUTION,
                       max_elements: int = DEFAULT_MAX_ELEMENTS) -> ElementSet:
    """Tile room and body surfaces into near-square elements.

    Each side of a face of length l gets ceil(l * resolution) equal tiles.
    Room normals point inwards, body normals outwards. The body's floor face
    is not tiled; floor tiles hidden under the body are kept and simply never
    see anything.
    """
    if resolution < 1:
        raise DomainError("resolution must be >= 1 element per meter")
    r = scene.room
    (x0, y0, z0), (x1, y1, z1) = r.bounds
    ex, ey, ez = (1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0)
    els: list = []
    # estimate first so oversized requests fail before allocation
    est = 2 * (_n_tiles(r.length, resolution) * _n_tiles(r.width, resolution)
               + _n_tiles(r.length, resolution) * _n_tiles(r.height, resolution)
               + _n_tiles(r.width, resolution) * _n_tiles(r.height, resolution))
    if est > max_elements:
        raise ResourceError(f"{est} room elements exceed the cap of {max_elements}")
    _tile_rect((x0, y0, z0), ex, ey, r.length, r.width, (0, 0, 1), r.rho_floor, "floor", resolution, els)
    _tile_rect((x0, y0, z1), ex, ey, r.length, r.width, (0, 0, -1), r.rho_ceiling, "ceiling", resolution, els)
    _tile_rect((x0, y0, z0), ey, ez, r.width, r.height, (1, 0, 0), r.rho_wall, "wall_x0", resolution, els)
    _tile_rect((x1, y0, z0), ey, ez, r.width, r.height, (-1, 0, 0), r.rho_wall, "wall_x1", resolution, els)
    _tile_rect((x0, y0, z0), ex, ez, r.length, r.height, (0, 1, 0), r.rho_wall, "wall_y0", resolution, els)
    _tile_rect((x0, y1, z0), ex, ez, r.length, r.height, (0, -1, 0), r.rho_wall, "wall_y1", resolution, els)
    b = scene.body
    if b is not None:
        a = np.array([b.anchor[0], b.anchor[1], 0.0])
        u, lat = b.forward, b.lateral
        back = a - b.depth * u
        h = b.height
        _tile_rect(a, lat, ez, b.length, h, tuple(u), b.rho_body, "body_front", resolution, els)
        _tile_rect(back, lat, ez, b.length, h, tuple(-u), b.rho_body, "body_back", resolution, els)
        _tile_rect(back, u, ez, b.depth, h, tuple(-lat), b.rho_body, "body_side", resolution, els)
        _tile_rect(back + b.length * lat, u, ez, b.depth, h, tuple(lat), b.rho_body,
                   "body_side", resolution, els)
        _tile_rect(back + h * np.array(ez), lat, u, b.length, b.depth, (0, 0, 1), b.rho_hair,
                   "body_top", resolution, els)
    if len(els) > max_elements:
        raise ResourceError(f"{len(els)} elements exceed the cap of {max_elements}")
    return ElementSet.from_elements(els)


# -- LOS ---------------------------------------------------------------------

def los_gain(tx_pos, tx_normal, m, rx_pos, rx_normal, rx_area, fov, body=None) -> float:
    """DC gain of a point-to-point Lambertian link, 0 when not visible."""
    if np.allclose(tx_pos, rx_pos, rtol=0, atol=0):
        raise DegenerateGeometryError("transmitter and receiver coincide")
    phi, psi, d = link_angles(tx_pos, tx_normal, rx_pos, rx_normal)
    if phi > math.pi / 2 or psi > fov:
        return 0.0
    if segment_blocked(tx_pos, rx_pos, body):
        return 0.0
    return (m + 1) / (2 * math.pi) * math.cos(phi) ** m * rx_area * math.cos(psi) / d ** 2


def scene_los_gain(scene: Scene):
    """(G, d) of the AP-to-UE link of a scene."""
    ap, ue = scene.ap, scene.ue
    g = los_gain(ap.position, ap.normal, ap.lambertian_order, ue.position, ue.normal,
                 ue.area, ue.fov, scene.body)
    d = float(np.linalg.norm(np.subtract(ue.position, ap.position)))
    return g, d


def los_transfer(gain, dist, f):
    """G exp(-j 2 pi f d / c)."""
    f = np.asarray(f, dtype=float)
    return gain * np.exp(-2j * np.pi * f * (dist / SPEED_OF_LIGHT))


# -- diffuse -----------------------------------------------------------------

class ChannelModel:
    """Frequency-independent geometry of one scene, cached for many frequencies.

    With ``near_field_floor`` the squared distance in each gain is floored at
    a/pi, a being the (mean) area of the extended ends of the link. Below
    that distance the point formula overshoots the exact on-axis disk gain
    by more than 2x and can exceed 1 for a tile pressed against another,
    e.g. a body touching a wall. Well-separated pairs are unaffected.
    """

    def __init__(self, scene: Scene, resolution: float = DEFAULT_RESOLUTION,
                 elements: Optional[ElementSet] = None, near_field_floor: bool = True,
                 max_elements: int = DEFAULT_MAX_ELEMENTS):
        if scene.ue is None:
            raise DomainError("scene has no terminal")
        self.scene = scene
        self.elements = elements if elements is not None else partition_surfaces(
            scene, resolution, max_elements)
        self.near_field_floor = near_field_floor
        el = self.elements
        ap, ue = scene.ap, scene.ue
        box = None if scene.body is None else scene.body.box_params()
        soft = el.areas / math.pi if near_field_floor else np.zeros(len(el))
        half = 0.5 * soft
        ones = np.ones(len(el))
        # AP -> elements (t), shape (P,)
        g, d = _kernels.pair_gains(np.array([ap.position], dtype=float),
                                   np.array([ap.normal], dtype=float),
                                   np.array([float(ap.lambertian_order)]),
                                   el.centers, el.normals, el.areas, 0.0, box,
                                   None, soft)
        self.t_gain, self.t_dist = g[:, 0], d[:, 0]
        # elements -> UE (r), shape (P,)
        g, d = _kernels.pair_gains(el.centers, el.normals, ones,
                                   np.array([ue.position], dtype=float),
                                   np.array([ue.normal], dtype=float),
                                   np.array([ue.area]), math.cos(ue.fov), box,
                                   soft, None)
        self.r_gain, self.r_dist = g[0], d[0]
        # elements -> elements, G[i, j] from j to i
        self.G, self.D = _kernels.pair_gains(el.centers, el.normals, ones,
                                             el.centers, el.normals, el.areas, 0.0, box,
                                             half, half)
        np.fill_diagonal(self.G, 0.0)
        self.los_g, self.los_d = scene_los_gain(scene)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    def los(self, freqs) -> np.ndarray:
        return los_transfer(self.los_g, self.los_d, freqs)

    def diffuse(self, freqs, rho=None) -> np.ndarray:
        freqs = np.atleast_1d(np.asarray(freqs, dtype=float))
        rho = self.elements.rho if rho is None else np.asarray(rho, dtype=float)
        out = np.zeros(len(freqs), dtype=complex)
        if not np.any(rho) or not np.any(self.t_gain) or not np.any(self.r_gain):
            return out
        P = self.n_elements
        k = 2 * np.pi / SPEED_OF_LIGHT
        batch = max(1, _BATCH_BYTES // (16 * P * P))
        Gr = self.G * rho[None, :]
        diag = np.arange(P)
        nf = len(freqs)
        steps = np.diff(freqs)
        # on a regular grid the delay phasors follow a recurrence, far cheaper than exp
        regular = nf > 2 and np.allclose(steps, steps[0], rtol=1e-12, atol=0.0)
        if regular:
            phasor = np.exp(-1j * k * freqs[0] * self.D)
            step = np.exp(-1j * k * steps[0] * self.D)
        for s in range(0, nf, batch):
            fb = freqs[s:s + batch]
            if regular:
                A = np.empty((len(fb), P, P), dtype=complex)
                for i in range(len(fb)):
                    if (s + i) % 64 == 0:  # re-seed against drift
                        phasor = np.exp(-1j * k * fb[i] * self.D)
                    np.multiply(Gr, phasor, out=A[i])
                    np.negative(A[i], out=A[i])
                    phasor *= step
            else:
                A = -Gr[None] * np.exp(-1j * k * fb[:, None, None] * self.D[None])
            A[:, diag, diag] += 1.0
            t = self.t_gain[None] * np.exp(-1j * k * fb[:, None] * self.t_dist[None])
            try:
                x = np.linalg.solve(A, t[..., None])[..., 0]
            except np.linalg.LinAlgError as exc:
                raise IllConditionedSceneError(str(exc)) from exc
            if not np.all(np.isfinite(x)):
                raise IllConditionedSceneError("non-finite radiosity solution")
            r = self.r_gain[None] * np.exp(-1j * k * fb[:, None] * self.r_dist[None])
            out[s:s + batch] = np.sum(r * rho[None] * x, axis=1)
        return out

    def neumann_diffuse(self, f: float, order: int = 30, rho=None) -> complex:
        """Truncated reflection series sum_k r^T Gr (G Gr)^k t, for checking."""
        rho = self.elements.rho if rho is None else np.asarray(rho, dtype=float)
        k = 2 * np.pi / SPEED_OF_LIGHT
        Gf = self.G * np.exp(-1j * k * f * self.D)
        t = self.t_gain * np.exp(-1j * k * f * self.t_dist)
        r = self.r_gain * np.exp(-1j * k * f * self.r_dist)
        total = 0j
        v = t.astype(complex)
        for _ in range(order + 1):
            total += np.dot(r, rho * v)
            v = Gf @ (rho * v)
        return complex(total)

    def response(self, freqs) -> ChannelResponse:
        freqs = np.asarray(freqs, dtype=float)
        return ChannelResponse(freqs, self.los(freqs), self.diffuse(freqs))


def diffuse_transfer(scene: Scene, elements: ElementSet, f, near_field_floor: bool = True):
    """Diffuse response of ``scene`` tiled by ``elements`` at frequency/ies f."""
    model = ChannelModel(scene, elements=elements, near_field_floor=near_field_floor)
    out = model.diffuse(f)
    return out[0] if np.ndim(f) == 0 else out


def cir_response(scene: Scene, freqs, resolution: float = DEFAULT_RESOLUTION,
                 near_field_floor: bool = True) -> ChannelResponse:
    freqs = np.asarray(freqs, dtype=float)
    if not np.any(freqs == 0.0):
        raise DomainError("frequency grid must include 0 Hz")
    return ChannelModel(scene, resolution=resolution,
                        near_field_floor=near_field_floor).response(freqs)


def los_power_ratio(response: ChannelResponse, kind: str = "optical") -> float:
    """Share of received DC power carried by the LOS link.

    'optical' compares DC gains, 'electrical' their squares.
    """
    total = response.dc("cir")
    if total == 0.0:
        raise UndefinedRatioError("total DC gain is zero")
    ratio = response.dc("los") / total
    if kind == "optical":
        return ratio
    if kind == "electrical":
        return ratio ** 2
    raise DomainError(f"unknown ratio kind {kind!r}")

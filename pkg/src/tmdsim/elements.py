"""Optical elements and their single-ray interactions.

Covered elements: ideal thin lens, half mirror, curved mirror combiner,
transmissive mirror plate (a dihedral corner reflector array that forms a
plane-symmetric real image) and emissive screens.  Interactions are pure
functions; the one stochastic choice (which slat interaction a plate cell
produces) takes its uniform draw as an explicit argument so callers own
the randomness.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import InvalidGeometry, NoIntersection, OutOfBounds
from .geometry import (MODE_DOUBLE, MODE_PASS, MODE_SINGLE, PLANE_EPS, Pose,
                       Ray, intersect_plane, normalize, reflect)

DEFAULT_REFLECTANCE = 0.5
DEFAULT_MODE_WEIGHTS = (0.6, 0.3, 0.1)

INTERACT_DOUBLE = "double_reflect"
INTERACT_SINGLE_U = "single_reflect_u"
INTERACT_SINGLE_V = "single_reflect_v"
INTERACT_PASS = "pass_through"
INTERACT_ABSORB = "absorbed"

# Local-frame direction sign flips per plate interaction.
_MODE_FLIPS = {
    INTERACT_DOUBLE: (-1.0, -1.0, 1.0),
    INTERACT_SINGLE_U: (-1.0, 1.0, 1.0),
    INTERACT_SINGLE_V: (1.0, -1.0, 1.0),
    INTERACT_PASS: (1.0, 1.0, 1.0),
}
_MODE_TAG = {
    INTERACT_DOUBLE: MODE_DOUBLE,
    INTERACT_SINGLE_U: MODE_SINGLE,
    INTERACT_SINGLE_V: MODE_SINGLE,
    INTERACT_PASS: MODE_PASS,
}


def _positive_extent(extent) -> tuple:
    w, h = float(extent[0]), float(extent[1])
    if w <= 0 or h <= 0:
        raise InvalidGeometry(f"extent must be positive, got {(w, h)}")
    return (w, h)


@dataclass(frozen=True)
class ThinLens:
    """Ideal thin lens: circular clear aperture in an absorbing mount."""

    ident: str
    pose: Pose
    focal_length: float
    aperture_diameter: float
    housing_extent: Optional[tuple] = None

    def __post_init__(self):
        if self.focal_length == 0:
            raise InvalidGeometry("lens focal length must be nonzero")
        if self.aperture_diameter <= 0:
            raise InvalidGeometry("lens aperture must be positive")
        d = float(self.aperture_diameter)
        housing = self.housing_extent or (d, d)
        housing = _positive_extent(housing)
        if min(housing) < d - 1e-12:
            raise InvalidGeometry("lens housing smaller than the clear aperture")
        object.__setattr__(self, "housing_extent", housing)


@dataclass(frozen=True)
class HalfMirror:
    """Flat beam splitter: reflects a fraction of each ray, transmits the rest."""

    ident: str
    pose: Pose
    extent: tuple
    reflectance: float = DEFAULT_REFLECTANCE

    def __post_init__(self):
        object.__setattr__(self, "extent", _positive_extent(self.extent))
        if not 0.0 < self.reflectance < 1.0:
            raise InvalidGeometry("half-mirror reflectance must be in (0, 1)")


@dataclass(frozen=True)
class ConvexMirror:
    """Spherical-cap combiner whose paraxial view magnification is a_mag.

    The cap radius is 2 * eye_distance * a_mag / (a_mag - 1) (flat at
    a_mag = 1) with the curvature centre on the incoming-ray side, so an
    eye at eye_distance sees angles stretched by a_mag near the axis.
    """

    ident: str
    pose: Pose
    a_mag: float
    extent: tuple
    eye_distance: float

    def __post_init__(self):
        object.__setattr__(self, "extent", _positive_extent(self.extent))
        if self.a_mag <= 0:
            raise InvalidGeometry("mirror magnification must be positive")
        if self.eye_distance <= 0:
            raise InvalidGeometry("mirror eye_distance must be positive")

    @property
    def curvature_radius(self) -> float:
        if self.a_mag == 1.0:
            return math.inf
        return 2.0 * self.eye_distance * self.a_mag / (self.a_mag - 1.0)


@dataclass(frozen=True)
class TmdPlate:
    """Transmissive mirror plate modelled at the exit-cell level.

    Each ray either double-reflects (the imaging path: both transverse
    direction components negate), single-reflects off one slat orientation
    (ghost path), passes straight through, or is absorbed.  A nonzero pitch
    quantizes reflected-mode exit points to p x p cell centres, which is
    what limits resolution.  `mode_weights` are the (double, single, pass)
    probabilities; the remainder is absorbed.
    """

    ident: str
    pose: Pose
    extent: tuple
    pitch: float = 0.0
    mirror_ratio: float = 3.0
    mode_weights: tuple = DEFAULT_MODE_WEIGHTS
    polarizer: bool = False
    angular_fill: bool = False

    def __post_init__(self):
        object.__setattr__(self, "extent", _positive_extent(self.extent))
        if self.pitch < 0:
            raise InvalidGeometry("plate pitch cannot be negative")
        if self.mirror_ratio <= 0:
            raise InvalidGeometry("plate mirror_ratio must be positive")
        w = tuple(float(x) for x in self.mode_weights)
        if len(w) != 3 or any(x < 0 or x > 1 for x in w) or sum(w) > 1.0 + 1e-9:
            raise InvalidGeometry(f"mode weights {w} must lie in [0,1] and sum to <= 1")
        object.__setattr__(self, "mode_weights", w)


@dataclass(frozen=True)
class Screen:
    """Emissive rectangle sampled bilinearly; Lambertian, so the viewing
    direction never matters.  flip_uv mirrors the image horizontally /
    vertically, which presets use to pre-compensate the plate's inversion.
    """

    ident: str
    pose: Pose
    extent: tuple
    image: np.ndarray
    flip_uv: tuple = (False, False)
    image_spec: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "extent", _positive_extent(self.extent))
        img = np.array(self.image, dtype=np.float64)
        if img.ndim != 2 or img.size == 0:
            raise InvalidGeometry("screen image must be a non-empty 2-d grid")
        if img.min() < 0:
            raise InvalidGeometry("screen radiance samples must be non-negative")
        img.flags.writeable = False
        object.__setattr__(self, "image", img)
        object.__setattr__(self, "flip_uv", (bool(self.flip_uv[0]), bool(self.flip_uv[1])))


@dataclass(frozen=True)
class Absorber:
    """Matte-black rectangle; rays that hit it are simply gone."""

    ident: str
    pose: Pose
    extent: tuple

    def __post_init__(self):
        object.__setattr__(self, "extent", _positive_extent(self.extent))


OpticalElement = (ThinLens, HalfMirror, ConvexMirror, TmdPlate, Screen, Absorber)


def split_weight(weight: float, fraction: float):
    """Split `weight` into (weight*fraction, remainder) so the two parts
    sum back to `weight` exactly.  The larger part is computed by product
    and the smaller by complement; the subtraction is then exact (Sterbenz).
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction outside [0, 1]")
    if fraction >= 0.5:
        part = weight * fraction
        rest = weight - part
    else:
        rest = weight * (1.0 - fraction)
        part = weight - rest
    return part, rest


def thin_lens_transform(ray: Ray, lens: ThinLens) -> Ray:
    """Refract a ray through an ideal thin lens.

    In the lens frame a ray crossing at transverse offset h has its slope
    changed by -h/f (measured per unit travel along the axis, in the
    direction of propagation), so a point source at distance s_o images
    exactly at 1/s_i = 1/f - 1/s_o.  Rays through the centre are unchanged.
    """
    d = lens.aperture_diameter
    hit = intersect_plane(ray, lens.pose, (d, d))
    if hit is None:
        raise NoIntersection(f"ray misses lens {lens.ident!r}")
    u, v = hit.uv
    if u * u + v * v > (0.5 * d) ** 2:
        raise NoIntersection(f"ray misses the clear aperture of lens {lens.ident!r}")
    dl = lens.pose.to_local_dir(ray.direction)
    aw = abs(dl[2])
    if aw < 1e-12:
        raise NoIntersection(f"ray grazes lens {lens.ident!r}")
    sx = dl[0] / aw - u / lens.focal_length
    sy = dl[1] / aw - v / lens.focal_length
    out_local = np.array([sx, sy, math.copysign(1.0, dl[2])])
    return replace(ray, origin=hit.point,
                   direction=lens.pose.to_world_dir(normalize(out_local)))


def half_mirror_interact(ray: Ray, mirror: HalfMirror):
    """Split a ray on a half mirror into (reflected, transmitted).

    The two branch weights sum to the incident weight exactly.
    """
    hit = intersect_plane(ray, mirror.pose, mirror.extent)
    if hit is None:
        raise NoIntersection(f"ray misses half mirror {mirror.ident!r}")
    w_r, w_t = split_weight(ray.weight, mirror.reflectance)
    reflected = replace(ray, origin=hit.point,
                        direction=reflect(ray.direction, mirror.pose.normal),
                        weight=w_r)
    transmitted = replace(ray, origin=hit.point, weight=w_t)
    return reflected, transmitted


def _sphere_cap_hit(ray: Ray, mirror: ConvexMirror):
    # Curvature centre sits on the +w side of the vertex for a_mag > 1.
    R = mirror.curvature_radius
    centre = mirror.pose.position + R * mirror.pose.normal
    oc = ray.origin - centre
    b = float(ray.direction @ oc)
    c = float(oc @ oc) - R * R
    disc = b * b - c
    if disc < 0:
        return None
    sq = math.sqrt(disc)
    best = None
    w2, h2 = 0.5 * mirror.extent[0], 0.5 * mirror.extent[1]
    for t in (-b - sq, -b + sq):
        if t <= PLANE_EPS:
            continue
        point = ray.at(t)
        rel = point - mirror.pose.position
        u = float(rel @ mirror.pose.u_axis)
        v = float(rel @ mirror.pose.v_axis)
        if abs(u) > w2 or abs(v) > h2:
            continue
        wl = abs(float(rel @ mirror.pose.normal))
        # Of the two sphere crossings keep the one on the cap near the
        # vertex; the far hemisphere (sag beyond one radius) is not a cap.
        if wl > abs(R):
            continue
        if best is None or wl < best[0]:
            best = (wl, t, point)
    if best is None:
        return None
    _, t, point = best
    return t, point, normalize(centre - point)


def convex_mirror_transform(ray: Ray, mirror: ConvexMirror) -> Ray:
    """Specular reflection off the combiner cap (flat when a_mag = 1)."""
    if mirror.a_mag == 1.0:
        hit = intersect_plane(ray, mirror.pose, mirror.extent)
        if hit is None:
            raise NoIntersection(f"ray misses mirror {mirror.ident!r}")
        return replace(ray, origin=hit.point,
                       direction=reflect(ray.direction, mirror.pose.normal))
    got = _sphere_cap_hit(ray, mirror)
    if got is None:
        raise NoIntersection(f"ray misses mirror {mirror.ident!r}")
    _, point, n = got
    return replace(ray, origin=point, direction=reflect(ray.direction, n))


def classify_tmd_mode(incidence, plate: TmdPlate, draw: float) -> str:
    """Map a uniform draw in [0,1) to one plate interaction.

    [0,1) is partitioned into double | single | pass bands of the plate's
    mode weights, remainder absorbed.  A polarizer keeps the partition but
    blocks the single band: that light is absorbed, not redistributed.  The
    single band is itself split evenly between the two slat orientations.
    With angular_fill enabled the double band shrinks with incidence angle,
    p_eff = p_double * (1 - tan(theta) / (2 * mirror_ratio)), clamped to
    [0,1]; the freed mass is absorbed.
    """
    if not 0.0 <= draw < 1.0:
        raise ValueError(f"draw {draw} outside [0, 1)")
    p_d, p_s, p_p = plate.mode_weights
    if plate.angular_fill:
        cw = abs(float(incidence[2]))
        tan = math.sqrt(max(1.0 - cw * cw, 0.0)) / max(cw, 1e-12)
        p_d = min(max(p_d * (1.0 - tan / (2.0 * plate.mirror_ratio)), 0.0), 1.0)
    b1 = p_d
    b2 = b1 + p_s
    b3 = b2 + p_p
    if draw < b1:
        return INTERACT_DOUBLE
    if draw < b2:
        if plate.polarizer:
            return INTERACT_ABSORB
        return INTERACT_SINGLE_U if draw < b1 + 0.5 * p_s else INTERACT_SINGLE_V
    if draw < b3:
        return INTERACT_PASS
    return INTERACT_ABSORB


def quantize_uv(u: float, v: float, pitch: float):
    """Snap plate-local coordinates to the centre of their pitch cell."""
    qu = (math.floor(u / pitch) + 0.5) * pitch
    qv = (math.floor(v / pitch) + 0.5) * pitch
    return qu, qv


def tmd_transform(ray: Ray, plate: TmdPlate, mode: str) -> Ray:
    """Carry a ray through the plate for an already chosen interaction mode.

    double_reflect negates both transverse direction components (the
    retroreflection that builds the plane-symmetric image), single_reflect_u/v
    negates one, pass_through none.  For the reflected modes a nonzero pitch
    snaps the exit point to the containing cell centre; pass-through exits
    exactly at the hit point.
    """
    if mode not in _MODE_FLIPS:
        raise ValueError(f"unknown plate mode {mode!r}")
    hit = intersect_plane(ray, plate.pose, plate.extent)
    if hit is None:
        raise NoIntersection(f"ray misses plate {plate.ident!r}")
    dl = plate.pose.to_local_dir(ray.direction)
    out_local = dl * np.asarray(_MODE_FLIPS[mode])
    u, v = hit.uv
    if plate.pitch > 0 and mode != INTERACT_PASS:
        u, v = quantize_uv(u, v, plate.pitch)
    origin = (plate.pose.position + u * plate.pose.u_axis + v * plate.pose.v_axis)
    return replace(ray, origin=origin,
                   direction=plate.pose.to_world_dir(out_local),
                   mode=_MODE_TAG[mode])


def screen_emit(screen: Screen, uv, toward=None) -> float:
    """Radiance leaving the screen at local (u, v); direction-independent.

    Bilinear between texel centres, clamped at the borders.  Raises
    OutOfBounds when (u, v) falls outside the screen extent.
    """
    u, v = float(uv[0]), float(uv[1])
    w, h = screen.extent
    if abs(u) > 0.5 * w + 1e-9 or abs(v) > 0.5 * h + 1e-9:
        raise OutOfBounds(f"({u}, {v}) outside screen {screen.ident!r}")
    su = (u + 0.5 * w) / w
    sv = (v + 0.5 * h) / h
    if screen.flip_uv[0]:
        su = 1.0 - su
    if screen.flip_uv[1]:
        sv = 1.0 - sv
    rows, cols = screen.image.shape
    x = su * cols - 0.5
    y = (1.0 - sv) * rows - 0.5
    x0 = math.floor(x)
    y0 = math.floor(y)
    fx = x - x0
    fy = y - y0
    xa = min(max(x0, 0), cols - 1)
    xb = min(max(x0 + 1, 0), cols - 1)
    ya = min(max(y0, 0), rows - 1)
    yb = min(max(y0 + 1, 0), rows - 1)
    img = screen.image
    top = img[ya, xa] * (1.0 - fx) + img[ya, xb] * fx
    bot = img[yb, xa] * (1.0 - fx) + img[yb, xb] * fx
    return float(top * (1.0 - fy) + bot * fy)

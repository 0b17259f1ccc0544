"""Vector, ray and pose primitives shared by every optical element.

Conventions: lengths in millimeters, angles in radians, directions are
unit-norm numpy arrays of shape (3,).  A pose's local w axis is the surface
normal of whatever is attached to it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import DegenerateBundle, InvalidGeometry

PLANE_EPS = 1e-9        # smallest accepted ray/surface hit distance, mm
PARALLEL_EPS = 1e-12    # |d.n| below this counts as parallel to the surface
RAY_ADVANCE = 1e-6      # origin advance after every interaction, mm
WEIGHT_CUTOFF = 1e-4    # rays below this weight are dropped

MODE_PRIMARY = "primary"
MODE_DOUBLE = "double_reflect"
MODE_SINGLE = "single_reflect"
MODE_PASS = "pass_through"


def vec3(x: float, y: float, z: float) -> np.ndarray:
    return np.array([float(x), float(y), float(z)], dtype=np.float64)


def normalize(v) -> np.ndarray:
    """Unit vector along v; raises ValueError on a (near-)zero input."""
    v = np.asarray(v, dtype=np.float64)
    n = float(np.linalg.norm(v))
    if n < 1e-300:
        raise ValueError("cannot normalize a zero vector")
    return v / n


def reflect(direction, normal) -> np.ndarray:
    """Mirror a direction about a unit surface normal: d - 2(d.n)n."""
    d = np.asarray(direction, dtype=np.float64)
    n = np.asarray(normal, dtype=np.float64)
    return d - 2.0 * float(d @ n) * n


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Ray:
    """A directed half-line carrying a weight and an interaction-mode tag."""

    origin: np.ndarray
    direction: np.ndarray
    weight: float = 1.0
    mode: str = MODE_PRIMARY

    def __post_init__(self):
        object.__setattr__(self, "origin", _frozen(self.origin))
        object.__setattr__(self, "direction", _frozen(normalize(self.direction)))
        w = float(self.weight)
        if not 0.0 <= w <= 1.0:
            raise ValueError(f"ray weight {w} outside [0, 1]")
        object.__setattr__(self, "weight", w)

    def at(self, t: float) -> np.ndarray:
        return self.origin + t * self.direction


def advanced(ray: Ray) -> Ray:
    """Nudge a ray forward along its own line to avoid self-intersection."""
    return replace(ray, origin=ray.origin + RAY_ADVANCE * ray.direction)


def orthonormal_frame(w, up=(0.0, 1.0, 0.0)) -> np.ndarray:
    """3x3 rotation whose columns are (u, v, w) for a given w axis and up hint."""
    w = normalize(w)
    up = np.asarray(up, dtype=np.float64)
    u = np.cross(up, w)
    if np.linalg.norm(u) < 1e-9:
        raise InvalidGeometry("up direction is parallel to the surface normal")
    u = normalize(u)
    v = np.cross(w, u)
    return np.column_stack([u, v, w])


@dataclass(frozen=True)
class Pose:
    """Rigid placement: world position plus a local->world rotation."""

    position: np.ndarray
    rotation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", _frozen(self.position))
        R = np.array(self.rotation, dtype=np.float64)
        if R.shape != (3, 3) or not np.allclose(R @ R.T, np.eye(3), atol=1e-10):
            raise InvalidGeometry("pose rotation is not orthonormal")
        object.__setattr__(self, "rotation", _frozen(R))

    @classmethod
    def identity(cls, position=(0.0, 0.0, 0.0)) -> "Pose":
        return cls(np.asarray(position, dtype=np.float64), np.eye(3))

    @classmethod
    def facing(cls, position, normal, up=(0.0, 1.0, 0.0)) -> "Pose":
        """Pose whose w axis points along `normal`."""
        return cls(np.asarray(position, dtype=np.float64),
                   orthonormal_frame(normal, up))

    @property
    def u_axis(self) -> np.ndarray:
        return self.rotation[:, 0]

    @property
    def v_axis(self) -> np.ndarray:
        return self.rotation[:, 1]

    @property
    def normal(self) -> np.ndarray:
        return self.rotation[:, 2]

    def to_local_point(self, p) -> np.ndarray:
        return self.rotation.T @ (np.asarray(p, dtype=np.float64) - self.position)

    def to_world_point(self, p) -> np.ndarray:
        return self.position + self.rotation @ np.asarray(p, dtype=np.float64)

    def to_local_dir(self, d) -> np.ndarray:
        return self.rotation.T @ np.asarray(d, dtype=np.float64)

    def to_world_dir(self, d) -> np.ndarray:
        return self.rotation @ np.asarray(d, dtype=np.float64)


class PlaneHit(NamedTuple):
    t: float
    point: np.ndarray
    uv: tuple


def intersect_plane(ray: Ray, pose: Pose, extent) -> Optional[PlaneHit]:
    """First hit of a ray on a bounded rectangle, or None.

    `extent` is the full (width, height) of the rectangle centred on the
    pose; hits farther than PLANE_EPS along the ray are accepted.
    """
    n = pose.normal
    denom = float(ray.direction @ n)
    if abs(denom) < PARALLEL_EPS:
        return None
    t = float((pose.position - ray.origin) @ n) / denom
    if t <= PLANE_EPS:
        return None
    point = ray.at(t)
    rel = point - pose.position
    u = float(rel @ pose.u_axis)
    v = float(rel @ pose.v_axis)
    w2, h2 = 0.5 * float(extent[0]), 0.5 * float(extent[1])
    if abs(u) > w2 or abs(v) > h2:
        return None
    return PlaneHit(t, point, (u, v))


def closest_point_to_rays(rays: Sequence[Ray]):
    """Least-squares point minimising distance to all ray lines.

    Returns (point, rms_residual).  Raises DegenerateBundle when the normal
    equations are ill-conditioned (fewer than two rays, or a near-parallel
    bundle).
    """
    if len(rays) < 2:
        raise DegenerateBundle("need at least two rays")
    A = np.zeros((3, 3))
    b = np.zeros(3)
    projs = []
    for r in rays:
        d = r.direction
        P = np.eye(3) - np.outer(d, d)
        A += P
        b += P @ r.origin
        projs.append(P)
    if np.linalg.cond(A) > 1e12:
        raise DegenerateBundle("bundle is (near-)parallel; no convergence point")
    point = np.linalg.solve(A, b)
    sq = 0.0
    for r, P in zip(rays, projs):
        e = P @ (point - r.origin)
        sq += float(e @ e)
    return point, math.sqrt(sq / len(rays))

"""Non-sequential scalar ray tracer.

Rays walk the scene by nearest intersection; half mirrors branch into a
path tree (the stronger branch continues the parent path, the weaker one
becomes a child), plate interactions are chosen per ray from a
counter-based random stream keyed by (seed, ray index, bounce index) so
results never depend on scheduling or worker count.  Bundle directions
come from a fixed low-discrepancy sequence over the emission cone.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .elements import (Absorber, ConvexMirror, HalfMirror, INTERACT_ABSORB,
                       Screen, ThinLens, TmdPlate, classify_tmd_mode,
                       convex_mirror_transform, half_mirror_interact,
                       thin_lens_transform, tmd_transform)
from .errors import EmptySpot
from .geometry import (PARALLEL_EPS, PLANE_EPS, WEIGHT_CUTOFF, Pose, Ray,
                       advanced, intersect_plane, orthonormal_frame)
from .scene import EyeCamera, Scene

WORKERS_ENV = "TMDSIM_WORKERS"

TERMINAL_ABSORBED = "absorbed"
TERMINAL_ESCAPED = "escaped"
TERMINAL_REACHED_EYE = "reached_eye"
TERMINAL_MAX_BOUNCES = "max_bounces"

_MASK64 = (1 << 64) - 1


def _mix64(z: int) -> int:
    # splitmix64 finalizer; all arithmetic wraps at 64 bits.
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def uniform_draw(seed: int, ray_index: int, bounce: int) -> float:
    """Deterministic uniform in [0, 1) keyed by (seed, ray, bounce)."""
    h = _mix64(_mix64(_mix64(seed & _MASK64) ^ (ray_index & _MASK64)) ^ (bounce & _MASK64))
    return (h >> 11) * 2.0 ** -53


@dataclass(frozen=True)
class RngStream:
    """Per-ray random stream; draws are pure functions of the key."""

    seed: int
    ray_index: int

    def draw(self, bounce: int) -> float:
        return uniform_draw(self.seed, self.ray_index, bounce)


# R2 additive recurrence (plastic constant); fixed, index-addressable.
_R2_A1 = 0.7548776662466927
_R2_A2 = 0.5698402909980532


def r2_sequence(n: int, start: int = 0) -> np.ndarray:
    """(n, 2) low-discrepancy points in [0, 1)."""
    i = np.arange(start + 1, start + n + 1, dtype=np.float64)
    return np.stack([(0.5 + _R2_A1 * i) % 1.0, (0.5 + _R2_A2 * i) % 1.0], axis=1)


@dataclass(frozen=True)
class Cone:
    """Emission cone: axis direction plus half angle in radians."""

    axis: np.ndarray
    half_angle: float


def cone_directions(cone: Cone, n: int) -> np.ndarray:
    """n unit directions filling the cone, uniform in solid angle, from the
    fixed low-discrepancy sequence (ray i always gets the same direction)."""
    if not 0 < cone.half_angle <= math.pi:
        raise ValueError("cone half angle must lie in (0, pi]")
    R = orthonormal_frame(cone.axis)
    uv = r2_sequence(n)
    cos_t = 1.0 - uv[:, 0] * (1.0 - math.cos(cone.half_angle))
    sin_t = np.sqrt(np.maximum(1.0 - cos_t ** 2, 0.0))
    phi = 2.0 * math.pi * uv[:, 1]
    local = np.stack([sin_t * np.cos(phi), sin_t * np.sin(phi), cos_t], axis=1)
    return local @ R.T


@dataclass(frozen=True)
class TraceSegment:
    """One flight leg: the ray in flight, what it hit and what happened there.
    `point` is where the next leg starts (for pitched plates that is the
    quantized cell centre, not the geometric hit)."""

    ray: Ray
    element: Optional[str]
    interaction: str
    point: Optional[np.ndarray]


@dataclass
class TracePath:
    segments: list
    terminal: str
    children: list = field(default_factory=list)

    def walk(self):
        yield self
        for child in self.children:
            yield from child.walk()


@dataclass
class BundleResult:
    paths: list
    seed: int
    stats: dict


def _eye_hit(ray: Ray, eye: EyeCamera):
    n = eye.pose.normal
    denom = float(ray.direction @ n)
    if abs(denom) < PARALLEL_EPS:
        return None
    t = float((eye.pose.position - ray.origin) @ n) / denom
    if t <= PLANE_EPS:
        return None
    point = ray.at(t)
    rel = point - eye.pose.position
    u = float(rel @ eye.pose.u_axis)
    v = float(rel @ eye.pose.v_axis)
    if u * u + v * v > (0.5 * eye.aperture_diameter) ** 2:
        return None
    return t, point


def _nearest_hit(scene: Scene, ray: Ray):
    """(t, target, point) for the first surface the ray meets, else None.
    `target` is an element, the background screen, or the eye camera."""
    best = None
    candidates = list(scene.elements)
    if scene.background is not None:
        candidates.append(scene.background)
    for el in candidates:
        if isinstance(el, ThinLens):
            hit = intersect_plane(ray, el.pose, el.housing_extent)
        elif isinstance(el, ConvexMirror) and el.a_mag != 1.0:
            from .elements import _sphere_cap_hit
            got = _sphere_cap_hit(ray, el)
            hit = None if got is None else got[:2]
        else:
            hit = intersect_plane(ray, el.pose, el.extent)
        if hit is None:
            continue
        t, point = hit[0], hit[1]
        if best is None or t < best[0]:
            best = (t, el, point)
    eye_hit = _eye_hit(ray, scene.eye)
    if eye_hit is not None and (best is None or eye_hit[0] < best[0]):
        best = (eye_hit[0], scene.eye, eye_hit[1])
    return best


def trace_ray(scene: Scene, ray: Ray, max_bounces: int = 16,
              rng: Optional[RngStream] = None, _bounce: int = 0) -> TracePath:
    """Trace one ray to a terminal, branching at half mirrors.

    Plate modes are drawn from the rng stream at the current bounce index.
    Branches below the weight cutoff are never spawned, and a ray whose own
    weight sinks below the cutoff terminates as absorbed.
    """
    if rng is None:
        rng = RngStream(0, 0)
    segments: list = []
    children: list = []
    current = ray
    bounce = _bounce
    while True:
        if current.weight < WEIGHT_CUTOFF:
            segments.append(TraceSegment(current, None, "faded", None))
            terminal = TERMINAL_ABSORBED
            break
        if bounce >= max_bounces:
            segments.append(TraceSegment(current, None, "max_bounces", None))
            terminal = TERMINAL_MAX_BOUNCES
            break
        hit = _nearest_hit(scene, current)
        if hit is None:
            segments.append(TraceSegment(current, None, "escaped", None))
            terminal = TERMINAL_ESCAPED
            break
        _, target, point = hit
        if isinstance(target, EyeCamera):
            segments.append(TraceSegment(current, target.ident, "reached_eye", point))
            terminal = TERMINAL_REACHED_EYE
            break
        if isinstance(target, Screen):
            segments.append(TraceSegment(current, target.ident, "screen", point))
            terminal = TERMINAL_ABSORBED
            break
        if isinstance(target, Absorber):
            segments.append(TraceSegment(current, target.ident, "absorbed", point))
            terminal = TERMINAL_ABSORBED
            break
        if isinstance(target, ThinLens):
            rel = point - target.pose.position
            u = float(rel @ target.pose.u_axis)
            v = float(rel @ target.pose.v_axis)
            if u * u + v * v > (0.5 * target.aperture_diameter) ** 2:
                # Hit the mount around the clear aperture.
                segments.append(TraceSegment(current, target.ident, "absorbed", point))
                terminal = TERMINAL_ABSORBED
                break
            out = thin_lens_transform(current, target)
            segments.append(TraceSegment(current, target.ident, "lens", out.origin))
            current = advanced(out)
        elif isinstance(target, HalfMirror):
            reflected, transmitted = half_mirror_interact(current, target)
            if reflected.weight >= transmitted.weight:
                parent, child = reflected, transmitted
                label = "half_mirror_reflect"
            else:
                parent, child = transmitted, reflected
                label = "half_mirror_transmit"
            segments.append(TraceSegment(current, target.ident, label, parent.origin))
            if child.weight >= WEIGHT_CUTOFF:
                children.append(trace_ray(scene, advanced(child), max_bounces,
                                          rng, bounce + 1))
            current = advanced(parent)
        elif isinstance(target, ConvexMirror):
            out = convex_mirror_transform(current, target)
            segments.append(TraceSegment(current, target.ident, "mirror_reflect",
                                         out.origin))
            current = advanced(out)
        elif isinstance(target, TmdPlate):
            local = target.pose.to_local_dir(current.direction)
            mode = classify_tmd_mode(local, target, rng.draw(bounce))
            if mode == INTERACT_ABSORB:
                segments.append(TraceSegment(current, target.ident, "absorbed", point))
                terminal = TERMINAL_ABSORBED
                break
            out = tmd_transform(current, target, mode)
            segments.append(TraceSegment(current, target.ident, mode, out.origin))
            current = advanced(out)
        else:  # pragma: no cover - scene validation prevents this
            raise TypeError(f"untraceable element {type(target).__name__}")
        bounce += 1
    return TracePath(segments, terminal, children)


def resolve_workers(workers: Optional[int] = None) -> int:
    """Worker count: explicit argument, else the TMDSIM_WORKERS variable,
    else 1.  Outputs never depend on it; only wall time does."""
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1") or "1")
    return max(1, int(workers))


def _bundle_stats(paths, emitted_weight: float) -> dict:
    interactions: dict = {}
    terminals: dict = {}
    mode_weight: dict = {}
    for root in paths:
        for path in root.walk():
            for seg in path.segments:
                interactions[seg.interaction] = interactions.get(seg.interaction, 0) + 1
            terminals[path.terminal] = terminals.get(path.terminal, 0) + 1
            last = path.segments[-1].ray
            mode_weight[last.mode] = mode_weight.get(last.mode, 0.0) + last.weight
    return {"emitted_weight": emitted_weight, "interactions": interactions,
            "terminals": terminals, "mode_weight": mode_weight}


def trace_bundle(scene: Scene, source_point, n_rays: int, cone: Cone,
                 seed: int = 42, max_bounces: int = 16,
                 workers: Optional[int] = None) -> BundleResult:
    """Trace a cone of rays from a point source.

    Ray i always takes direction i of the cone sequence and random stream
    (seed, i), so the result is identical for any worker count.
    """
    if n_rays <= 0:
        raise ValueError("n_rays must be positive")
    source = np.asarray(source_point, dtype=np.float64)
    dirs = cone_directions(cone, n_rays)
    paths: list = [None] * n_rays

    def run(i: int):
        return trace_ray(scene, Ray(source, dirs[i]), max_bounces,
                         RngStream(seed, i))

    nworkers = resolve_workers(workers)
    if nworkers == 1:
        for i in range(n_rays):
            paths[i] = run(i)
    else:
        with ThreadPoolExecutor(max_workers=nworkers) as pool:
            for i, path in enumerate(pool.map(run, range(n_rays))):
                paths[i] = path
    return BundleResult(paths, seed, _bundle_stats(paths, float(n_rays)))


@dataclass(frozen=True)
class SpotDiagram:
    points: np.ndarray  # (n, 2) plane-local coordinates, mm
    rms_radius: float


def terminal_rays(bundle: BundleResult, mode: Optional[str] = None):
    """Final in-flight rays of every path still propagating at its end.

    `mode` restricts the list to rays carrying that interaction history tag
    (e.g. "double_reflect"); None keeps everything.
    """
    rays = []
    for root in bundle.paths:
        for path in root.walk():
            if path.terminal in (TERMINAL_ESCAPED, TERMINAL_REACHED_EYE,
                                 TERMINAL_MAX_BOUNCES):
                ray = path.segments[-1].ray
                if mode is None or ray.mode == mode:
                    rays.append(ray)
    return rays


def spot_diagram(bundle: BundleResult, plane: Pose,
                 mode: Optional[str] = None) -> SpotDiagram:
    """Crossings of the terminal rays with an unbounded plane.

    rms_radius is taken about the centroid.  Raises EmptySpot when no
    terminal ray crosses the plane going forward.
    """
    points = []
    n = plane.normal
    for ray in terminal_rays(bundle, mode):
        denom = float(ray.direction @ n)
        if abs(denom) < PARALLEL_EPS:
            continue
        t = float((plane.position - ray.origin) @ n) / denom
        if t <= PLANE_EPS:
            continue
        rel = ray.at(t) - plane.position
        points.append((float(rel @ plane.u_axis), float(rel @ plane.v_axis)))
    if not points:
        raise EmptySpot("no terminal ray crosses the spot plane")
    pts = np.asarray(points)
    centred = pts - pts.mean(axis=0)
    return SpotDiagram(pts, float(np.sqrt((centred ** 2).sum(axis=1).mean())))

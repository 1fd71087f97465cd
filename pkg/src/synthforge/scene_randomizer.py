"""Deterministic scene sampling over configured randomization ranges.

sample_scene(config, seed, index, store) is a pure function: every draw
comes from a Philox substream keyed by (seed, index, field tag), so scenes
are independent of each other and of sampling order, and generation can be
parallelized without changing a single bit of output.

Geometry conventions: the ground plane is z = 0 and one world unit equals
one ground pixel at nadir, with the rendered window covering
[0, image_size] in x and y. The camera looks at the window center from
altitude 16 * image_size with focal length chosen so the ground maps 1:1
onto the image; tilt rotates the view away from nadir about a horizontal
axis of sampled heading.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .asset_store import AssetStore, Mesh
from .primitives import DISTRACTOR_KINDS, distractor_mesh
from .rng import substream

TWO_PI = 2.0 * math.pi

# Focal length and camera altitude are FOCAL_FACTOR * image_size. The large
# factor keeps perspective near-orthographic so a footprint of k ground
# units spans k image pixels to well under a pixel of error.
FOCAL_FACTOR = 16.0

# Free space kept between an instance footprint and the image border, px.
PLACEMENT_MARGIN = 2.0
PLACEMENT_RETRIES = 100


class SceneSampleError(ValueError):
    """Raised when a scene cannot be sampled from the given config/assets."""


@dataclass(frozen=True)
class SunDirectionRanges:
    elevation: tuple[float, float] = (30.0, 80.0)
    azimuth: tuple[float, float] = (0.0, 360.0)


@dataclass(frozen=True)
class RandomizationConfig:
    """Sampling ranges for every randomized scene factor.

    Ranges are closed [low, high]; angles in degrees except instance_yaw
    (radians in [0, 2*pi]). instance_scale is the target on-the-ground size
    of a placed model in pixels, measured as (footprint width + height) / 2
    of its yaw-aligned bounding rectangle. fog_density is per world unit of
    camera distance (the camera sits ~16 * image_size units up, so useful
    densities are order 1e-5).
    """

    image_size: int = 512
    instances_per_scene: tuple[int, int] = (2, 6)
    instance_scale: tuple[float, float] = (30.0, 160.0)
    instance_yaw: tuple[float, float] = (0.0, TWO_PI)
    camera_tilt: tuple[float, float] = (0.0, 10.0)
    ambient_intensity: tuple[float, float] = (0.35, 0.75)
    sun_intensity: tuple[float, float] = (0.3, 0.9)
    sun_direction: SunDirectionRanges = SunDirectionRanges()
    fog_density: tuple[float, float] = (0.0, 5e-5)
    fog_color: tuple[float, float, float] = (0.75, 0.78, 0.82)
    distractors_per_scene: tuple[int, int] = (0, 5)
    distractor_scale: tuple[float, float] = (10.0, 60.0)
    background_classes: tuple[str, ...] = ()
    overlap_policy: float = 0.25

    @classmethod
    def from_dict(cls, raw: dict) -> "RandomizationConfig":
        """Build from parsed config-file data; unknown keys are an error."""
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        kwargs = {}
        for key, value in raw.items():
            if key == "sun_direction":
                kwargs[key] = SunDirectionRanges(
                    elevation=tuple(value.get("elevation", (30.0, 80.0))),
                    azimuth=tuple(value.get("azimuth", (0.0, 360.0))),
                )
            elif key == "image_size":
                kwargs[key] = int(value)
            elif key == "overlap_policy":
                kwargs[key] = float(value)
            elif isinstance(value, (list, tuple)):
                kwargs[key] = tuple(value)
            else:
                raise ValueError(f"config field {key}: expected a list")
        return cls(**kwargs)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, SunDirectionRanges):
                out[f.name] = {"elevation": list(value.elevation),
                               "azimuth": list(value.azimuth)}
            elif isinstance(value, tuple):
                out[f.name] = list(value)
            else:
                out[f.name] = value
        return out


def _check_range(name, rng_pair, violations, *, low=None, high=None,
                 integer=False):
    try:
        lo, hi = rng_pair
    except (TypeError, ValueError):
        violations.append(f"{name}: not a [low, high] pair")
        return
    if integer and (lo != int(lo) or hi != int(hi)):
        violations.append(f"{name}: not integers")
    if lo > hi:
        violations.append(f"{name}: low > high")
        return
    if low is not None and lo < low:
        word = "negative density" if name == "fog_density" else f"below {low}"
        violations.append(f"{name}: {word}")
    if high is not None and hi > high:
        violations.append(f"{name}: above {high}")


def validate_config(config: RandomizationConfig) -> list[str]:
    """Return every violated invariant, one string per violation, naming the
    field; an empty list means the config is valid."""
    v: list[str] = []
    if config.image_size <= 0:
        v.append("image_size: must be positive")
    _check_range("instances_per_scene", config.instances_per_scene, v,
                 low=0, integer=True)
    _check_range("instance_scale", config.instance_scale, v, low=1e-9)
    _check_range("instance_yaw", config.instance_yaw, v, low=0.0,
                 high=TWO_PI + 1e-12)
    _check_range("camera_tilt", config.camera_tilt, v, low=0.0, high=89.0)
    _check_range("ambient_intensity", config.ambient_intensity, v,
                 low=0.0, high=1.0)
    _check_range("sun_intensity", config.sun_intensity, v, low=0.0, high=1.0)
    _check_range("sun_direction.elevation", config.sun_direction.elevation, v,
                 low=0.0, high=90.0)
    _check_range("sun_direction.azimuth", config.sun_direction.azimuth, v,
                 low=0.0, high=360.0)
    _check_range("fog_density", config.fog_density, v, low=0.0)
    _check_range("distractors_per_scene", config.distractors_per_scene, v,
                 low=0, integer=True)
    _check_range("distractor_scale", config.distractor_scale, v, low=1e-9)
    if len(config.fog_color) != 3 or any(c < 0.0 or c > 1.0
                                         for c in config.fog_color):
        v.append("fog_color: components must be in [0,1]")
    if not 0.0 <= config.overlap_policy <= 1.0:
        v.append("overlap_policy: must be in [0,1]")
    return v


@dataclass(frozen=True)
class CameraSpec:
    """Pinhole camera: orthonormal basis, focal length and principal point
    in pixels. `forward` points from the eye toward the scene."""

    eye: tuple[float, float, float]
    right: tuple[float, float, float]
    imgdown: tuple[float, float, float]
    forward: tuple[float, float, float]
    focal: float
    principal_point: tuple[float, float]
    image_size: int


def _rodrigues(vec, axis, angle):
    vec = np.asarray(vec, dtype=np.float64)
    axis = np.asarray(axis, dtype=np.float64)
    c, s = math.cos(angle), math.sin(angle)
    return vec * c + np.cross(axis, vec) * s + axis * np.dot(axis, vec) * (1 - c)


def make_camera(image_size: int, tilt_deg: float,
                tilt_azimuth_deg: float) -> CameraSpec:
    """Camera looking at the ground-window center, tilted off nadir by
    tilt_deg toward the heading tilt_azimuth_deg."""
    if image_size <= 0:
        raise SceneSampleError("zero-area camera frustum: image_size <= 0")
    focal = FOCAL_FACTOR * image_size
    center = np.array([image_size / 2.0, image_size / 2.0, 0.0])
    phi = math.radians(tilt_deg)
    psi = math.radians(tilt_azimuth_deg)
    axis = np.array([-math.sin(psi), math.cos(psi), 0.0])
    right = _rodrigues([1.0, 0.0, 0.0], axis, phi)
    imgdown = _rodrigues([0.0, 1.0, 0.0], axis, phi)
    forward = _rodrigues([0.0, 0.0, -1.0], axis, phi)
    eye = center - focal * forward
    return CameraSpec(
        eye=tuple(eye), right=tuple(right), imgdown=tuple(imgdown),
        forward=tuple(forward), focal=focal,
        principal_point=(image_size / 2.0, image_size / 2.0),
        image_size=image_size,
    )


@dataclass(frozen=True)
class InstancePlacement:
    model_id: str
    category: str
    translation: tuple[float, float, float]
    yaw: float
    scale: float  # uniform model-space scale factor
    scale_px: float  # the sampled target footprint size in px
    footprint: tuple[float, float]  # ground AABB extents after yaw + scale


@dataclass(frozen=True)
class DistractorPlacement:
    kind: str
    translation: tuple[float, float, float]
    yaw: float
    scale: float
    color: tuple[float, float, float]


@dataclass(frozen=True)
class SceneDescription:
    scene_id: int
    seed: int
    image_size: int
    background_path: str
    background_class: str
    crop: tuple[int, int]
    camera: CameraSpec
    ambient_intensity: float
    sun_direction: tuple[float, float, float]  # unit travel direction, downward
    sun_intensity: float
    fog_density: float
    fog_color: tuple[float, float, float]
    instances: tuple[InstancePlacement, ...]
    distractors: tuple[DistractorPlacement, ...]


def yawed_footprint(mesh: Mesh, yaw: float) -> tuple[float, float]:
    """Ground-plane AABB extents of the mesh rotated by yaw (unit scale)."""
    c, s = math.cos(yaw), math.sin(yaw)
    x = mesh.vertices[:, 0] * c - mesh.vertices[:, 1] * s
    y = mesh.vertices[:, 0] * s + mesh.vertices[:, 1] * c
    return float(x.max() - x.min()), float(y.max() - y.min())


def _overlap_fraction(a_center, a_size, b_center, b_size) -> float:
    ix = min(a_center[0] + a_size[0] / 2, b_center[0] + b_size[0] / 2) - \
        max(a_center[0] - a_size[0] / 2, b_center[0] - b_size[0] / 2)
    iy = min(a_center[1] + a_size[1] / 2, b_center[1] + b_size[1] / 2) - \
        max(a_center[1] - a_size[1] / 2, b_center[1] - b_size[1] / 2)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    smaller = min(a_size[0] * a_size[1], b_size[0] * b_size[1])
    return inter / smaller


def _sample_position(rng, size, image_size):
    lo_x = size[0] / 2 + PLACEMENT_MARGIN
    hi_x = image_size - size[0] / 2 - PLACEMENT_MARGIN
    lo_y = size[1] / 2 + PLACEMENT_MARGIN
    hi_y = image_size - size[1] / 2 - PLACEMENT_MARGIN
    if lo_x > hi_x or lo_y > hi_y:
        return None
    return float(rng.uniform(lo_x, hi_x)), float(rng.uniform(lo_y, hi_y))


def sample_scene(config: RandomizationConfig, seed: int, index: int,
                 store: AssetStore) -> SceneDescription:
    """Sample one fully specified scene; pure in (config, seed, index).

    Instance placement retries positions up to 100 times until the pairwise
    footprint-overlap policy is satisfied; an instance that never fits is
    dropped. Raises SceneSampleError if the config is invalid, no background
    of an allowed class fits the output size, or a nonzero instance request
    places nothing at all.
    """
    violations = validate_config(config)
    if violations:
        raise SceneSampleError("invalid config: " + "; ".join(violations))
    size = config.image_size

    rng_bg = substream(seed, index, "background")
    allowed = config.background_classes or store.backgrounds.classes
    fits_by_class = {}
    for cls in allowed:
        fits = [e for e in store.backgrounds.entries_for_class(cls)
                if e.width >= size and e.height >= size]
        if fits:
            fits_by_class[cls] = fits
    if not fits_by_class:
        raise SceneSampleError(
            f"no background of an allowed class (classes {tuple(allowed)!r}, "
            f"min size {size})")
    class_names = list(fits_by_class)
    cls = class_names[int(rng_bg.integers(len(class_names)))]
    entry = fits_by_class[cls][int(rng_bg.integers(len(fits_by_class[cls])))]
    crop = (int(rng_bg.integers(0, entry.width - size + 1)),
            int(rng_bg.integers(0, entry.height - size + 1)))

    rng_cam = substream(seed, index, "camera")
    tilt = float(rng_cam.uniform(*config.camera_tilt))
    tilt_azimuth = float(rng_cam.uniform(0.0, 360.0))
    camera = make_camera(size, tilt, tilt_azimuth)

    rng_light = substream(seed, index, "lights")
    ambient = float(rng_light.uniform(*config.ambient_intensity))
    sun_intensity = float(rng_light.uniform(*config.sun_intensity))
    elev = math.radians(float(rng_light.uniform(*config.sun_direction.elevation)))
    azim = math.radians(float(rng_light.uniform(*config.sun_direction.azimuth)))
    sun_direction = (-math.cos(elev) * math.cos(azim),
                     -math.cos(elev) * math.sin(azim),
                     -math.sin(elev))

    fog_density = float(substream(seed, index, "fog").uniform(*config.fog_density))

    lo, hi = config.instances_per_scene
    n_instances = int(substream(seed, index, "instance_count").integers(lo, hi + 1))
    model_ids = sorted(store.models)
    if n_instances > 0 and not model_ids:
        raise SceneSampleError("asset store has no models")

    placed: list[InstancePlacement] = []
    for i in range(n_instances):
        rng_i = substream(seed, index, f"instance.{i}")
        model_id = model_ids[int(rng_i.integers(len(model_ids)))]
        mesh = store.models[model_id]
        yaw = float(rng_i.uniform(*config.instance_yaw))
        scale_px = float(rng_i.uniform(*config.instance_scale))
        w0, h0 = yawed_footprint(mesh, yaw)
        sigma = 2.0 * scale_px / (w0 + h0)
        footprint = (sigma * w0, sigma * h0)
        for _ in range(PLACEMENT_RETRIES):
            pos = _sample_position(rng_i, footprint, size)
            if pos is None:
                break
            ok = all(
                _overlap_fraction(pos, footprint,
                                  p.translation[:2], p.footprint)
                <= config.overlap_policy
                for p in placed)
            if ok:
                z = -sigma * float(mesh.vertices[:, 2].min())
                placed.append(InstancePlacement(
                    model_id=model_id, category=mesh.category,
                    translation=(pos[0], pos[1], z), yaw=yaw, scale=sigma,
                    scale_px=scale_px, footprint=footprint))
                break
    if n_instances > 0 and not placed:
        raise SceneSampleError(
            f"placement budget exhausted with zero instances placed "
            f"(scene index {index})")

    lo_d, hi_d = config.distractors_per_scene
    n_distractors = int(substream(seed, index, "distractor_count")
                        .integers(lo_d, hi_d + 1))
    distractors: list[DistractorPlacement] = []
    for j in range(n_distractors):
        rng_d = substream(seed, index, f"distractor.{j}")
        kind = DISTRACTOR_KINDS[int(rng_d.integers(len(DISTRACTOR_KINDS)))]
        mesh = distractor_mesh(kind)
        yaw = float(rng_d.uniform(0.0, TWO_PI))
        scale = float(rng_d.uniform(*config.distractor_scale))
        w0, h0 = yawed_footprint(mesh, yaw)
        pos = _sample_position(rng_d, (scale * w0, scale * h0), size)
        color = tuple(float(c) for c in rng_d.uniform(0.2, 0.9, size=3))
        if pos is None:
            continue
        z = -scale * float(mesh.vertices[:, 2].min())
        distractors.append(DistractorPlacement(
            kind=kind, translation=(pos[0], pos[1], z), yaw=yaw,
            scale=scale, color=color))

    return SceneDescription(
        scene_id=index, seed=seed, image_size=size,
        background_path=str(entry.path), background_class=cls,
        crop=crop, camera=camera, ambient_intensity=ambient,
        sun_direction=sun_direction, sun_intensity=sun_intensity,
        fog_density=fog_density, fog_color=tuple(config.fog_color),
        instances=tuple(placed), distractors=tuple(distractors),
    )

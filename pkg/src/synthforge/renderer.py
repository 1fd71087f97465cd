"""Deterministic software rasterizer for sampled scenes.

Pipeline per scene: crop the background photo, rasterize every instance and
distractor with a z-buffer (edge-function coverage, perspective-correct
depth via 1/z interpolation), shade flat per face with ambient plus one
directional light, resolve hard shadows with a single 1024x1024 shadow map
rendered from the light direction, blend fog by camera depth, then quantize
to 8-bit half-up. Shading, shadows and fog touch only rendered geometry;
background pixels are copied byte-for-byte from the crop.

Pixel (i, j) samples the scene at center (i + 0.5, j + 0.5). Iteration
order is fixed (instances then distractors, faces in mesh order), so output
is bit-identical across runs regardless of how callers parallelize scenes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .asset_store import AssetStore, Mesh
from .primitives import distractor_mesh
from .scene_randomizer import CameraSpec, SceneDescription

SHADOW_MAP_SIZE = 1024
SHADOW_BIAS_FACTOR = 1e-3


class RenderError(RuntimeError):
    pass


@dataclass(eq=False)
class RenderOutput:
    """rgb: (S,S,3) uint8. instance_id_map: (S,S) int32, 0 = background,
    k >= 1 = k-th instance, -(j+1) = j-th distractor. depth_map: (S,S)
    float64 camera depth, +inf where id is 0. solo_pixel_counts: per-id
    count of pixels the entity covers when only tested against the
    background (the visibility denominator for annotation)."""

    rgb: np.ndarray
    instance_id_map: np.ndarray
    depth_map: np.ndarray
    solo_pixel_counts: dict[int, int]


def shade(diffuse, normal, ambient, sun, shadow_factor=1.0):
    """Flat Lambert shading for one face.

    sun is (direction, intensity) with direction the unit travel direction
    of the light. Returns diffuse scaled by
    clamp(ambient + intensity * max(0, normal . -direction) * shadow, 0, 1).
    """
    direction, intensity = sun
    n = np.asarray(normal, dtype=np.float64)
    if abs(np.linalg.norm(n) - 1.0) > 1e-6:
        raise ValueError("normal must be unit length")
    d = np.asarray(direction, dtype=np.float64)
    lambert = max(0.0, float(-np.dot(n, d)))
    s = min(1.0, max(0.0, ambient + intensity * lambert * shadow_factor))
    return tuple(float(c) * s for c in diffuse)


def apply_fog(color, depth, fog):
    """Blend a shaded color toward the fog color: t = exp(-density*depth),
    out = t*color + (1-t)*fog_color."""
    density, fog_color = fog
    if depth < 0:
        raise ValueError("depth must be >= 0")
    if density < 0:
        raise ValueError("density must be >= 0")
    t = math.exp(-density * depth)
    return tuple(t * c + (1.0 - t) * f for c, f in zip(color, fog_color))


def _yaw_matrix(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _world_entities(scene: SceneDescription, store: AssetStore):
    """Yield (entity_id, world vertices, faces, world face normals, diffuse)."""
    for i, inst in enumerate(scene.instances):
        mesh = store.models.get(inst.model_id)
        if mesh is None:
            raise RenderError(f"missing asset {inst.model_id!r}")
        rot = _yaw_matrix(inst.yaw)
        verts = inst.scale * (mesh.vertices @ rot.T) + np.asarray(inst.translation)
        normals = mesh.face_normals @ rot.T
        yield i + 1, verts, mesh.faces, normals, mesh.diffuse_color
    for j, dis in enumerate(scene.distractors):
        mesh = distractor_mesh(dis.kind)
        rot = _yaw_matrix(dis.yaw)
        verts = dis.scale * (mesh.vertices @ rot.T) + np.asarray(dis.translation)
        normals = mesh.face_normals @ rot.T
        yield -(j + 1), verts, mesh.faces, normals, dis.color


def _raster_window(p: np.ndarray, width: int, height: int):
    """Coverage of a screen-space triangle over pixel centers.

    p: (3,2) float pixel coords. Returns (x0, y0, mask, (l0, l1, l2)) with
    barycentric arrays over the clipped bounding window, or None when the
    triangle misses every pixel center or is degenerate.
    """
    x0 = max(0, math.ceil(float(p[:, 0].min()) - 0.5))
    x1 = min(width - 1, math.floor(float(p[:, 0].max()) - 0.5))
    y0 = max(0, math.ceil(float(p[:, 1].min()) - 0.5))
    y1 = min(height - 1, math.floor(float(p[:, 1].max()) - 0.5))
    if x0 > x1 or y0 > y1:
        return None
    ax, ay = p[0]
    bx, by = p[1]
    cx, cy = p[2]
    area = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
    if area == 0.0:
        return None
    px = np.arange(x0, x1 + 1, dtype=np.float64)[None, :] + 0.5
    py = np.arange(y0, y1 + 1, dtype=np.float64)[:, None] + 0.5
    w0 = (cx - bx) * (py - by) - (cy - by) * (px - bx)
    w1 = (ax - cx) * (py - cy) - (ay - cy) * (px - cx)
    w2 = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
    if area < 0.0:
        w0, w1, w2, area = -w0, -w1, -w2, -area
    mask = (w0 >= 0.0) & (w1 >= 0.0) & (w2 >= 0.0)
    if not mask.any():
        return None
    inv = 1.0 / area
    return x0, y0, mask, (w0 * inv, w1 * inv, w2 * inv)


def _project(verts: np.ndarray, cam: CameraSpec):
    """World (N,3) -> (pixel coords (N,2), camera depth (N,))."""
    d = verts - np.asarray(cam.eye)
    z = d @ np.asarray(cam.forward)
    u = cam.focal * (d @ np.asarray(cam.right)) / z + cam.principal_point[0]
    v = cam.focal * (d @ np.asarray(cam.imgdown)) / z + cam.principal_point[1]
    return np.stack([u, v], axis=1), z


class _ShadowMap:
    """Orthographic min-depth map along the light's travel direction."""

    def __init__(self, direction, entities, extent: float):
        d = np.asarray(direction, dtype=np.float64)
        d = d / np.linalg.norm(d)
        aux = np.array([1.0, 0.0, 0.0]) if abs(d[2]) > 0.9 else np.array([0.0, 0.0, 1.0])
        u = np.cross(d, aux)
        u /= np.linalg.norm(u)
        w = np.cross(d, u)
        self.basis = np.stack([u, w, d], axis=1)  # world -> (pu, pv, pd)
        self.bias = SHADOW_BIAS_FACTOR * max(extent, 1e-6)

        pts = np.concatenate([verts for _, verts, *_ in entities]) @ self.basis
        pad = 1e-6 + 1e-3 * max(extent, 1.0)
        self.origin = pts[:, :2].min(axis=0) - pad
        span = pts[:, :2].max(axis=0) + pad - self.origin
        self.scale = SHADOW_MAP_SIZE / np.maximum(span, 1e-9)
        self.buf = np.full((SHADOW_MAP_SIZE, SHADOW_MAP_SIZE), np.inf)

        for _, verts, faces, _, _ in entities:
            proj = verts @ self.basis
            tex = (proj[:, :2] - self.origin) * self.scale
            depth = proj[:, 2]
            for face in faces:
                hit = _raster_window(tex[face], SHADOW_MAP_SIZE, SHADOW_MAP_SIZE)
                if hit is None:
                    continue
                x0, y0, mask, (l0, l1, l2) = hit
                pd = l0 * depth[face[0]] + l1 * depth[face[1]] + l2 * depth[face[2]]
                win = self.buf[y0:y0 + mask.shape[0], x0:x0 + mask.shape[1]]
                np.minimum(win, np.where(mask, pd, np.inf), out=win)

    def lit(self, points: np.ndarray) -> np.ndarray:
        """True where a world point (N,3) is reached by the light."""
        proj = points @ self.basis
        tex = (proj[:, :2] - self.origin) * self.scale
        ix = np.clip(tex[:, 0].astype(np.int64), 0, SHADOW_MAP_SIZE - 1)
        iy = np.clip(tex[:, 1].astype(np.int64), 0, SHADOW_MAP_SIZE - 1)
        return proj[:, 2] <= self.buf[iy, ix] + self.bias


def render(scene: SceneDescription, store: AssetStore) -> RenderOutput:
    """Rasterize a scene over its background crop.

    Deterministic; raises RenderError for missing assets, a background crop
    that does not fit, or a degenerate camera.
    """
    cam = scene.camera
    size = scene.image_size
    if size <= 0 or cam.focal <= 0:
        raise RenderError("zero-area camera frustum")

    background = store.background_pixels(scene.background_path)
    cx, cy = scene.crop
    if cy + size > background.shape[0] or cx + size > background.shape[1]:
        raise RenderError(
            f"background crop {scene.crop} + {size} exceeds image "
            f"{background.shape[1]}x{background.shape[0]}")
    crop = background[cy:cy + size, cx:cx + size].copy()

    entities = list(_world_entities(scene, store))
    rgb = crop.copy()
    id_map = np.zeros((size, size), dtype=np.int32)
    depth_map = np.full((size, size), np.inf)
    if not entities:
        return RenderOutput(rgb, id_map, depth_map, {})

    all_verts = np.concatenate([verts for _, verts, *_ in entities])
    extent = float((all_verts.max(axis=0) - all_verts.min(axis=0)).max())

    use_sun = scene.sun_intensity > 0.0
    shadow = _ShadowMap(scene.sun_direction, entities, extent) if use_sun else None
    sun_d = np.asarray(scene.sun_direction, dtype=np.float64)

    color_f = np.zeros((size, size, 3))
    solo_masks = {eid: np.zeros((size, size), dtype=bool)
                  for eid, *_ in entities}

    fwd = np.asarray(cam.forward)
    right = np.asarray(cam.right)
    imgdown = np.asarray(cam.imgdown)
    eye = np.asarray(cam.eye)

    for eid, verts, faces, normals, diffuse in entities:
        pix, z = _project(verts, cam)
        if z.min() <= cam.focal * 1e-6:
            raise RenderError(f"geometry behind the camera (entity {eid})")
        zinv = 1.0 / z
        lambert = np.maximum(0.0, -(normals @ sun_d))
        diffuse = np.asarray(diffuse, dtype=np.float64)
        solo = solo_masks[eid]
        for fi, face in enumerate(faces):
            hit = _raster_window(pix[face], size, size)
            if hit is None:
                continue
            x0, y0, mask, (l0, l1, l2) = hit
            winv = l0 * zinv[face[0]] + l1 * zinv[face[1]] + l2 * zinv[face[2]]
            with np.errstate(divide="ignore"):
                frag_z = np.where(mask & (winv > 0.0), 1.0 / winv, np.inf)
            h, w = mask.shape
            solo[y0:y0 + h, x0:x0 + w] |= mask
            dwin = depth_map[y0:y0 + h, x0:x0 + w]
            passes = frag_z < dwin
            if not passes.any():
                continue
            yy, xx = np.nonzero(passes)
            fz = frag_z[yy, xx]
            dwin[yy, xx] = fz
            id_map[y0 + yy, x0 + xx] = eid

            if use_sun:
                px = x0 + xx + 0.5
                py = y0 + yy + 0.5
                rays = (fwd[None, :]
                        + ((px - cam.principal_point[0]) / cam.focal)[:, None] * right
                        + ((py - cam.principal_point[1]) / cam.focal)[:, None] * imgdown)
                points = eye[None, :] + fz[:, None] * rays
                lit = shadow.lit(points)
                term = scene.sun_intensity * lambert[fi] * lit
            else:
                term = 0.0
            intensity = np.clip(scene.ambient_intensity + term, 0.0, 1.0)
            color_f[y0 + yy, x0 + xx] = diffuse[None, :] * np.atleast_1d(intensity)[:, None]

    covered = id_map != 0
    if covered.any():
        t = np.exp(-scene.fog_density * depth_map[covered])[:, None]
        fog_color = np.asarray(scene.fog_color, dtype=np.float64)
        shaded = t * color_f[covered] + (1.0 - t) * fog_color[None, :]
        quant = np.floor(shaded * 255.0 + 0.5)
        rgb[covered] = np.clip(quant, 0.0, 255.0).astype(np.uint8)

    counts = {eid: int(m.sum()) for eid, m in solo_masks.items()}
    return RenderOutput(rgb, id_map, depth_map, counts)


def write_debug_outputs(out: RenderOutput, prefix: str | Path) -> list[Path]:
    """Write the id map as 16-bit grayscale PNG (distractor ids wrap into
    the top of the uint16 range) and the depth map as little-endian float32
    binary, row-major, +inf at background."""
    prefix = Path(prefix)
    id_path = prefix.with_name(prefix.name + "_ids.png")
    ids16 = out.instance_id_map.astype(np.int32).astype(np.uint16)
    Image.fromarray(ids16).save(id_path, format="PNG")
    depth_path = prefix.with_name(prefix.name + "_depth.f32")
    depth_path.write_bytes(out.depth_map.astype("<f4").tobytes())
    return [id_path, depth_path]


def render_solo(scene: SceneDescription, store: AssetStore,
                instance_index: int) -> RenderOutput:
    """Render a single instance of the scene by itself (used by tests to
    check mask consistency against the full render)."""
    solo_scene = SceneDescription(
        scene_id=scene.scene_id, seed=scene.seed, image_size=scene.image_size,
        background_path=scene.background_path,
        background_class=scene.background_class, crop=scene.crop,
        camera=scene.camera, ambient_intensity=scene.ambient_intensity,
        sun_direction=scene.sun_direction, sun_intensity=scene.sun_intensity,
        fog_density=scene.fog_density, fog_color=scene.fog_color,
        instances=(scene.instances[instance_index],), distractors=())
    return render(solo_scene, store)

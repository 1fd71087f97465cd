"""Immutable asset repository: triangle meshes parsed from Wavefront OBJ
files plus a class-tagged background image library.

Supported OBJ subset: ``v``, ``vn``, ``f`` and comments. Texture coordinates
and material statements are ignored; per-model diffuse color comes from the
model manifest instead. Faces with more than three vertices are
fan-triangulated. Missing normals are recomputed per face from
counter-clockwise winding.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

AIRCRAFT_CATEGORIES = ("airliner", "swept-wing", "jet", "fanjet", "propeller")
DISTRACTOR_CATEGORY = "distractor"

DEFAULT_DIFFUSE = (0.8, 0.8, 0.8)


class MeshParseError(ValueError):
    """Raised for malformed OBJ input; message carries the line number."""


class AssetError(ValueError):
    """Raised for manifest / asset problems outside the OBJ grammar."""


@dataclass(frozen=True)
class Mesh:
    """Triangle mesh with per-face unit normals and a flat diffuse color.

    vertices: (N, 3) float64, model units.
    faces: (F, 3) int32, 0-based vertex indices.
    face_normals: (F, 3) float64 unit vectors.
    """

    vertices: np.ndarray
    faces: np.ndarray
    face_normals: np.ndarray
    diffuse_color: tuple[float, float, float] = DEFAULT_DIFFUSE
    category: str = DISTRACTOR_CATEGORY
    name: str = ""

    def validate(self) -> None:
        if len(self.faces) < 1:
            raise AssetError(f"mesh {self.name!r}: no faces")
        if self.faces.min() < 0 or self.faces.max() >= len(self.vertices):
            raise AssetError(f"mesh {self.name!r}: face index out of range")
        norms = np.linalg.norm(self.face_normals, axis=1)
        if not np.all(np.abs(norms - 1.0) <= 1e-6):
            raise AssetError(f"mesh {self.name!r}: non-unit face normal")

    @property
    def extents(self) -> np.ndarray:
        return self.vertices.max(axis=0) - self.vertices.min(axis=0)


def _geometric_normal(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    n = np.cross(b - a, c - a)
    length = np.linalg.norm(n)
    if length < 1e-12:
        # Degenerate (zero-area) face; pick +z so the invariant still holds.
        return np.array([0.0, 0.0, 1.0])
    return n / length


def _resolve_index(raw: int, count: int, line_no: int, kind: str) -> int:
    if raw == 0:
        raise MeshParseError(f"line {line_no}: {kind} index 0 (OBJ indices are 1-based)")
    idx = raw - 1 if raw > 0 else count + raw
    if idx < 0 or idx >= count:
        raise MeshParseError(f"line {line_no}: {kind} index {raw} out of range (have {count})")
    return idx


def parse_obj(text, *, diffuse_color=DEFAULT_DIFFUSE, category=DISTRACTOR_CATEGORY, name="") -> Mesh:
    """Parse OBJ text (a string or an iterable of lines) into a Mesh.

    Polygons are fan-triangulated; 1-based and negative relative indices are
    resolved to 0-based. Corner normals, when given, are averaged per face
    and normalized; otherwise the face normal comes from CCW winding.

    Raises MeshParseError with the offending line number on malformed input.
    """
    if isinstance(text, str):
        lines = text.splitlines()
    else:
        lines = [ln.rstrip("\n") for ln in text]

    vertices: list[list[float]] = []
    normals: list[list[float]] = []
    faces: list[tuple[int, int, int]] = []
    face_normal_ids: list[tuple[int, ...] | None] = []

    for line_no, line in enumerate(lines, start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        tokens = body.split()
        key = tokens[0]
        if key == "v":
            if len(tokens) < 4:
                raise MeshParseError(f"line {line_no}: vertex needs 3 coordinates")
            try:
                vertices.append([float(t) for t in tokens[1:4]])
            except ValueError:
                raise MeshParseError(f"line {line_no}: non-numeric vertex coordinate") from None
        elif key == "vn":
            if len(tokens) < 4:
                raise MeshParseError(f"line {line_no}: normal needs 3 components")
            try:
                normals.append([float(t) for t in tokens[1:4]])
            except ValueError:
                raise MeshParseError(f"line {line_no}: non-numeric normal component") from None
        elif key == "f":
            refs = tokens[1:]
            if len(refs) < 3:
                raise MeshParseError(f"line {line_no}: face with {len(refs)} vertices (need >= 3)")
            vids = []
            nids = []
            for ref in refs:
                parts = ref.split("/")
                try:
                    raw_v = int(parts[0])
                    raw_n = int(parts[2]) if len(parts) > 2 and parts[2] else None
                except ValueError:
                    raise MeshParseError(f"line {line_no}: non-numeric face index {ref!r}") from None
                vids.append(_resolve_index(raw_v, len(vertices), line_no, "vertex"))
                if raw_n is not None:
                    nids.append(_resolve_index(raw_n, len(normals), line_no, "normal"))
            have_normals = len(nids) == len(vids)
            for i in range(1, len(vids) - 1):
                faces.append((vids[0], vids[i], vids[i + 1]))
                if have_normals:
                    face_normal_ids.append((nids[0], nids[i], nids[i + 1]))
                else:
                    face_normal_ids.append(None)
        # anything else (o, g, s, usemtl, vt, ...) is ignored

    if not faces:
        raise MeshParseError("OBJ input defines no faces")

    verts = np.asarray(vertices, dtype=np.float64)
    face_arr = np.asarray(faces, dtype=np.int32)
    norm_arr = np.asarray(normals, dtype=np.float64) if normals else np.zeros((0, 3))

    face_normals = np.empty((len(faces), 3), dtype=np.float64)
    for fi, (face, nid) in enumerate(zip(face_arr, face_normal_ids)):
        if nid is not None:
            n = norm_arr[list(nid)].sum(axis=0)
            length = np.linalg.norm(n)
            if length < 1e-12:
                n = _geometric_normal(*verts[face])
            else:
                n = n / length
        else:
            n = _geometric_normal(*verts[face])
        face_normals[fi] = n

    mesh = Mesh(verts, face_arr, face_normals, tuple(diffuse_color), category, name)
    mesh.validate()
    return mesh


def mesh_to_obj(mesh: Mesh) -> str:
    """Serialize a Mesh back to OBJ text.

    Vertex coordinates use repr formatting, so parse_obj(mesh_to_obj(m))
    reproduces vertices and faces bit-for-bit.
    """
    out = []
    for v in mesh.vertices:
        out.append(f"v {float(v[0])!r} {float(v[1])!r} {float(v[2])!r}")
    for n in mesh.face_normals:
        out.append(f"vn {float(n[0])!r} {float(n[1])!r} {float(n[2])!r}")
    for fi, f in enumerate(mesh.faces):
        ni = fi + 1
        out.append(f"f {f[0] + 1}//{ni} {f[1] + 1}//{ni} {f[2] + 1}//{ni}")
    return "\n".join(out) + "\n"


def normalize_mesh(mesh: Mesh) -> Mesh:
    """Center the mesh at the origin and scale its longest axis-aligned
    extent to 1 model unit. Idempotent; topology is untouched."""
    lo = mesh.vertices.min(axis=0)
    hi = mesh.vertices.max(axis=0)
    extent = float((hi - lo).max())
    if extent < 1e-12:
        raise AssetError(f"mesh {mesh.name!r}: degenerate (zero extent)")
    center = (lo + hi) / 2.0
    verts = (mesh.vertices - center) * (1.0 / extent)
    return replace(mesh, vertices=verts)


@dataclass(frozen=True)
class BackgroundEntry:
    path: Path
    width: int
    height: int
    scene_class: str


@dataclass(frozen=True)
class BackgroundSet:
    """Background images grouped by scene class for stratified sampling."""

    entries: tuple[BackgroundEntry, ...]

    @property
    def classes(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for e in self.entries:
            seen.setdefault(e.scene_class, None)
        return tuple(seen)

    def entries_for_class(self, scene_class: str) -> tuple[BackgroundEntry, ...]:
        return tuple(e for e in self.entries if e.scene_class == scene_class)


def load_background_library(manifest: str | Path) -> BackgroundSet:
    """Read a background manifest (CSV rows: path,class) and probe every
    image for its dimensions. Paths are resolved relative to the manifest."""
    manifest = Path(manifest)
    root = manifest.parent
    entries = []
    with open(manifest, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].lstrip().startswith("#"):
                continue
            if len(row) < 2:
                raise AssetError(f"background manifest row needs path,class: {row!r}")
            path = root / row[0].strip()
            if not path.is_file():
                raise AssetError(f"background image not found: {path}")
            try:
                with Image.open(path) as img:
                    width, height = img.size
            except UnidentifiedImageError:
                raise AssetError(f"undecodable background image: {path}") from None
            entries.append(BackgroundEntry(path, width, height, row[1].strip()))
    if not entries:
        raise AssetError(f"background manifest is empty: {manifest}")
    return BackgroundSet(tuple(entries))


def _parse_color(fields: list[str], path: str) -> tuple[float, float, float]:
    if not fields:
        return DEFAULT_DIFFUSE
    if len(fields) != 3:
        raise AssetError(f"model manifest {path}: diffuse color needs 3 components")
    color = tuple(float(c) for c in fields)
    if any(c < 0.0 or c > 1.0 for c in color):
        raise AssetError(f"model manifest {path}: diffuse color outside [0,1]")
    return color


class AssetStore:
    """Read-only holder of normalized model meshes and the background set.

    Loading happens once up front; afterwards everything is immutable and
    safe to share across worker processes or threads.
    """

    def __init__(self, models: dict[str, Mesh], backgrounds: BackgroundSet):
        self.models = dict(models)
        self.backgrounds = backgrounds
        self._image_cache: dict[Path, np.ndarray] = {}

    @classmethod
    def from_dir(cls, root: str | Path, *, model_manifest="models.csv",
                 background_manifest="backgrounds.csv") -> "AssetStore":
        """Load models.csv (path,category[,r,g,b]) and backgrounds.csv
        (path,class) from an asset directory."""
        root = Path(root)
        models: dict[str, Mesh] = {}
        manifest = root / model_manifest
        if not manifest.is_file():
            raise AssetError(f"model manifest not found: {manifest}")
        with open(manifest, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].lstrip().startswith("#"):
                    continue
                if len(row) < 2:
                    raise AssetError(f"model manifest row needs path,category: {row!r}")
                path = root / row[0].strip()
                category = row[1].strip()
                if category not in AIRCRAFT_CATEGORIES:
                    raise AssetError(f"unknown model category {category!r} for {path}")
                color = _parse_color([c.strip() for c in row[2:5] if c.strip()], str(manifest))
                if not path.is_file():
                    raise AssetError(f"model file not found: {path}")
                with open(path) as obj:
                    mesh = parse_obj(obj, diffuse_color=color, category=category,
                                     name=path.stem)
                model_id = path.stem
                if model_id in models:
                    raise AssetError(f"duplicate model id {model_id!r}")
                models[model_id] = normalize_mesh(mesh)
        if not models:
            raise AssetError(f"model manifest is empty: {manifest}")
        backgrounds = load_background_library(root / background_manifest)
        return cls(models, backgrounds)

    def background_image(self, entry: BackgroundEntry) -> np.ndarray:
        """Decode (and cache) a background as (H, W, 3) uint8."""
        return self.background_pixels(entry.path)

    def background_pixels(self, path: str | Path) -> np.ndarray:
        path = Path(path)
        cached = self._image_cache.get(path)
        if cached is None:
            if not path.is_file():
                raise AssetError(f"background image not found: {path}")
            with Image.open(path) as img:
                cached = np.asarray(img.convert("RGB"))
            self._image_cache[path] = cached
        return cached

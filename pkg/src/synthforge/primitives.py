"""Procedural distractor meshes: box, UV sphere, cone.

All builders return a normalized Mesh (unit longest extent, centered at the
origin) tagged with the distractor category, ready for scene placement.
"""

from __future__ import annotations

import functools

import numpy as np

from .asset_store import DISTRACTOR_CATEGORY, Mesh, normalize_mesh

DISTRACTOR_KINDS = ("box", "sphere", "cone")


def _build(vertices, faces, color, name) -> Mesh:
    verts = np.asarray(vertices, dtype=np.float64)
    face_arr = np.asarray(faces, dtype=np.int32)
    normals = np.empty((len(face_arr), 3))
    for i, (a, b, c) in enumerate(face_arr):
        n = np.cross(verts[b] - verts[a], verts[c] - verts[a])
        length = np.linalg.norm(n)
        normals[i] = n / length if length > 1e-12 else (0.0, 0.0, 1.0)
    mesh = Mesh(verts, face_arr, normals, tuple(color), DISTRACTOR_CATEGORY, name)
    mesh.validate()
    return normalize_mesh(mesh)


def make_box(color=(0.6, 0.6, 0.6), *, name="box") -> Mesh:
    """Axis-aligned unit cube, two triangles per side, outward normals."""
    corners = [(x, y, z) for x in (-0.5, 0.5) for y in (-0.5, 0.5) for z in (-0.5, 0.5)]
    # Quads wound CCW as seen from outside each face.
    quads = [
        (0, 1, 3, 2),  # -x
        (4, 6, 7, 5),  # +x
        (0, 4, 5, 1),  # -y
        (2, 3, 7, 6),  # +y
        (0, 2, 6, 4),  # -z
        (1, 5, 7, 3),  # +z
    ]
    faces = []
    for a, b, c, d in quads:
        faces.append((a, b, c))
        faces.append((a, c, d))
    return _build(corners, faces, color, name)


def make_sphere(color=(0.6, 0.6, 0.6), *, rings=8, segments=12, name="sphere") -> Mesh:
    """UV sphere with triangle caps at the poles."""
    if rings < 2 or segments < 3:
        raise ValueError("sphere needs rings >= 2 and segments >= 3")
    verts = [(0.0, 0.0, 0.5)]
    for r in range(1, rings):
        phi = np.pi * r / rings
        z = 0.5 * np.cos(phi)
        rad = 0.5 * np.sin(phi)
        for s in range(segments):
            theta = 2.0 * np.pi * s / segments
            verts.append((rad * np.cos(theta), rad * np.sin(theta), z))
    verts.append((0.0, 0.0, -0.5))
    south = len(verts) - 1

    def ring_vertex(r, s):
        return 1 + (r - 1) * segments + (s % segments)

    faces = []
    for s in range(segments):
        faces.append((0, ring_vertex(1, s), ring_vertex(1, s + 1)))
    for r in range(1, rings - 1):
        for s in range(segments):
            a = ring_vertex(r, s)
            b = ring_vertex(r, s + 1)
            c = ring_vertex(r + 1, s + 1)
            d = ring_vertex(r + 1, s)
            faces.append((a, d, c))
            faces.append((a, c, b))
    for s in range(segments):
        faces.append((south, ring_vertex(rings - 1, s + 1), ring_vertex(rings - 1, s)))
    return _build(verts, faces, color, name)


def make_cone(color=(0.6, 0.6, 0.6), *, segments=12, name="cone") -> Mesh:
    """Cone with apex up and a fan-triangulated base disc."""
    if segments < 3:
        raise ValueError("cone needs segments >= 3")
    verts = [(0.0, 0.0, 0.5), (0.0, 0.0, -0.5)]
    for s in range(segments):
        theta = 2.0 * np.pi * s / segments
        verts.append((0.5 * np.cos(theta), 0.5 * np.sin(theta), -0.5))

    def rim(s):
        return 2 + (s % segments)

    faces = []
    for s in range(segments):
        faces.append((0, rim(s), rim(s + 1)))
        faces.append((1, rim(s + 1), rim(s)))
    return _build(verts, faces, color, name)


def make_distractor(kind: str, color=(0.6, 0.6, 0.6)) -> Mesh:
    if kind == "box":
        return make_box(color)
    if kind == "sphere":
        return make_sphere(color)
    if kind == "cone":
        return make_cone(color)
    raise ValueError(f"unknown distractor kind {kind!r}")


@functools.lru_cache(maxsize=None)
def distractor_mesh(kind: str) -> Mesh:
    """Shared unit geometry per kind; per-placement color is applied at
    render time, not here."""
    return make_distractor(kind)

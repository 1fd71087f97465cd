"""Self-contained demo content so the pipeline runs without external files.

Builds five low-poly aircraft models (one per category) out of box parts,
three classes of procedural background photos, the two manifests the asset
store expects, and a default generation config. Everything is deterministic:
building twice produces byte-identical files.

Usage: python3 -m synthforge.demo_assets OUT_DIR
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from .asset_store import Mesh, mesh_to_obj
from .rng import substream
from .scene_randomizer import RandomizationConfig

BACKGROUND_CLASSES = ("water", "field", "urban")
BACKGROUND_SIZE = 768
_BG_SEED = 20240501

MODEL_COLORS = {
    "airliner": (0.85, 0.86, 0.88),
    "swept-wing": (0.55, 0.58, 0.60),
    "jet": (0.62, 0.65, 0.70),
    "fanjet": (0.78, 0.78, 0.80),
    "propeller": (0.70, 0.62, 0.50),
}


class _Builder:
    """Accumulates axis-aligned box parts into one triangle mesh."""

    def __init__(self):
        self.verts: list[tuple[float, float, float]] = []
        self.faces: list[tuple[int, int, int]] = []

    def add_box(self, center, size, sweep=0.0):
        """Box of `size` at `center`; sweep shifts x by sweep*(y-center_y),
        turning the box into a parallelepiped (swept wing half)."""
        cx, cy, cz = center
        sx, sy, sz = size
        base = len(self.verts)
        for dx in (-0.5, 0.5):
            for dy in (-0.5, 0.5):
                for dz in (-0.5, 0.5):
                    y = cy + dy * sy
                    x = cx + dx * sx + sweep * (y - cy)
                    self.verts.append((x, y, cz + dz * sz))
        quads = [
            (0, 1, 3, 2), (4, 6, 7, 5), (0, 4, 5, 1),
            (2, 3, 7, 6), (0, 2, 6, 4), (1, 5, 7, 3),
        ]
        for a, b, c, d in quads:
            self.faces.append((base + a, base + b, base + c))
            self.faces.append((base + a, base + c, base + d))

    def build(self, category: str, name: str) -> Mesh:
        verts = np.asarray(self.verts, dtype=np.float64)
        faces = np.asarray(self.faces, dtype=np.int32)
        normals = np.empty((len(faces), 3))
        for i, (a, b, c) in enumerate(faces):
            n = np.cross(verts[b] - verts[a], verts[c] - verts[a])
            length = np.linalg.norm(n)
            normals[i] = n / length if length > 1e-12 else (0.0, 0.0, 1.0)
        mesh = Mesh(verts, faces, normals, MODEL_COLORS[category],
                    category, name)
        mesh.validate()
        return mesh


def build_aircraft(category: str) -> Mesh:
    """Box-composed model; +x is the nose, +y the left wing, +z up."""
    b = _Builder()
    if category == "airliner":
        b.add_box((0.0, 0.0, 0.30), (3.2, 0.42, 0.42))
        b.add_box((0.1, 0.95, 0.32), (0.55, 1.55, 0.08), sweep=-0.25)
        b.add_box((0.1, -0.95, 0.32), (0.55, 1.55, 0.08), sweep=0.25)
        b.add_box((-1.40, 0.0, 0.40), (0.35, 1.25, 0.06))
        b.add_box((-1.45, 0.0, 0.70), (0.35, 0.06, 0.55))
        b.add_box((0.45, 0.70, 0.15), (0.55, 0.20, 0.20))
        b.add_box((0.45, -0.70, 0.15), (0.55, 0.20, 0.20))
    elif category == "swept-wing":
        b.add_box((0.0, 0.0, 0.26), (2.8, 0.36, 0.36))
        b.add_box((0.0, 0.85, 0.28), (0.50, 1.60, 0.06), sweep=-0.45)
        b.add_box((0.0, -0.85, 0.28), (0.50, 1.60, 0.06), sweep=0.45)
        b.add_box((-1.25, 0.0, 0.30), (0.30, 0.90, 0.05))
        b.add_box((-1.28, 0.0, 0.58), (0.30, 0.05, 0.50))
    elif category == "jet":
        b.add_box((0.0, 0.0, 0.24), (2.3, 0.30, 0.30))
        b.add_box((-0.15, 0.60, 0.25), (0.70, 1.05, 0.05), sweep=-0.55)
        b.add_box((-0.15, -0.60, 0.25), (0.70, 1.05, 0.05), sweep=0.55)
        b.add_box((-1.00, 0.28, 0.50), (0.28, 0.05, 0.45))
        b.add_box((-1.00, -0.28, 0.50), (0.28, 0.05, 0.45))
        b.add_box((-1.00, 0.0, 0.24), (0.30, 0.85, 0.05))
    elif category == "fanjet":
        b.add_box((0.0, 0.0, 0.34), (2.6, 0.52, 0.52))
        b.add_box((0.05, 1.0, 0.36), (0.60, 1.45, 0.08), sweep=-0.30)
        b.add_box((0.05, -1.0, 0.36), (0.60, 1.45, 0.08), sweep=0.30)
        b.add_box((0.35, 0.75, 0.16), (0.75, 0.30, 0.30))
        b.add_box((0.35, -0.75, 0.16), (0.75, 0.30, 0.30))
        b.add_box((-1.15, 0.0, 0.44), (0.32, 1.00, 0.06))
        b.add_box((-1.20, 0.0, 0.75), (0.32, 0.06, 0.55))
    elif category == "propeller":
        b.add_box((0.0, 0.0, 0.28), (1.9, 0.32, 0.38))
        b.add_box((0.15, 0.0, 0.30), (0.55, 2.60, 0.06))
        b.add_box((-0.80, 0.0, 0.32), (0.28, 0.95, 0.05))
        b.add_box((-0.85, 0.0, 0.55), (0.25, 0.05, 0.40))
        b.add_box((0.98, 0.0, 0.28), (0.05, 0.80, 0.10))
        b.add_box((0.98, 0.0, 0.28), (0.05, 0.10, 0.80))
    else:
        raise ValueError(f"unknown aircraft category {category!r}")
    return b.build(category, category)


def _smooth_noise(rng, size, cell, amplitude):
    """Coarse random grid, nearest-upsampled then box-blurred twice."""
    coarse = rng.uniform(-amplitude, amplitude, (size // cell + 2, size // cell + 2))
    field = np.repeat(np.repeat(coarse, cell, 0), cell, 1)[:size, :size]
    k = cell // 2 * 2 + 1
    pad = k // 2
    for axis in (0, 1):
        padded = np.take(field, np.clip(np.arange(-pad, size + pad), 0, size - 1),
                         axis=axis)
        csum = np.cumsum(padded, axis=axis)
        lead = np.take(csum, np.arange(k - 1, k - 1 + size), axis=axis)
        lag = np.concatenate([np.zeros_like(np.take(csum, [0], axis=axis)),
                              np.take(csum, np.arange(size - 1), axis=axis)],
                             axis=axis)
        field = (lead - lag) / k
    return field


def build_background(scene_class: str, variant: int,
                     size: int = BACKGROUND_SIZE) -> np.ndarray:
    """Procedural (size, size, 3) uint8 texture for one class/variant."""
    rng = substream(_BG_SEED, variant, f"background.{scene_class}")
    if scene_class == "water":
        base = np.array([44.0, 92.0, 138.0])
        img = base[None, None, :] + _smooth_noise(rng, size, 24, 18.0)[..., None]
        ys = np.arange(size)[:, None, None]
        img = img + 6.0 * np.sin(ys / 9.0 + rng.uniform(0, 6.28))
    elif scene_class == "field":
        base = np.array([86.0, 112.0, 58.0])
        img = base[None, None, :] + _smooth_noise(rng, size, 32, 22.0)[..., None]
        # patchwork strips of slightly different green
        for _ in range(8):
            x0 = int(rng.integers(0, size))
            w = int(rng.integers(40, 160))
            img[:, x0:x0 + w] += rng.uniform(-14.0, 14.0, 3)
    elif scene_class == "urban":
        base = np.array([118.0, 116.0, 112.0])
        img = np.tile(base, (size, size, 1))
        step = 64
        for y0 in range(0, size, step):
            for x0 in range(0, size, step):
                shade = rng.uniform(-30.0, 30.0)
                img[y0 + 6:y0 + step, x0 + 6:x0 + step] += shade
        img += _smooth_noise(rng, size, 16, 8.0)[..., None]
    else:
        raise ValueError(f"unknown background class {scene_class!r}")
    img = img + rng.uniform(-4.0, 4.0, img.shape)
    return np.clip(np.floor(img + 0.5), 0, 255).astype(np.uint8)


def build_demo_assets(out_dir, *, variants_per_class: int = 2) -> dict[str, Path]:
    """Write models/, backgrounds/, both manifests and config.json."""
    out_dir = Path(out_dir)
    (out_dir / "models").mkdir(parents=True, exist_ok=True)
    (out_dir / "backgrounds").mkdir(parents=True, exist_ok=True)

    model_rows = []
    for category in MODEL_COLORS:
        mesh = build_aircraft(category)
        path = out_dir / "models" / f"{category}.obj"
        path.write_text(mesh_to_obj(mesh))
        r, g, bl = MODEL_COLORS[category]
        model_rows.append(f"models/{category}.obj,{category},{r},{g},{bl}")
    (out_dir / "models.csv").write_text("\n".join(model_rows) + "\n")

    bg_rows = []
    for scene_class in BACKGROUND_CLASSES:
        for variant in range(variants_per_class):
            img = build_background(scene_class, variant)
            name = f"{scene_class}_{variant}.png"
            Image.fromarray(img).save(out_dir / "backgrounds" / name,
                                      format="PNG")
            bg_rows.append(f"backgrounds/{name},{scene_class}")
    (out_dir / "backgrounds.csv").write_text("\n".join(bg_rows) + "\n")

    config_path = out_dir / "config.json"
    config_path.write_text(json.dumps(RandomizationConfig().to_dict(),
                                      indent=2, sort_keys=True) + "\n")
    return {
        "models": out_dir / "models.csv",
        "backgrounds": out_dir / "backgrounds.csv",
        "config": config_path,
    }


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) != 1:
        print("usage: python3 -m synthforge.demo_assets OUT_DIR",
              file=sys.stderr)
        return 1
    paths = build_demo_assets(argv[0])
    print(f"demo assets written under {Path(argv[0])}")
    for key, path in paths.items():
        print(f"  {key}: {path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())

"""Tight, occlusion-aware ground-truth boxes from rendered id maps.

Boxes hug the pixels an instance actually kept after the z-buffer resolved
occlusion, so a half-covered aircraft gets a box around its visible half
only. Visibility is visible pixels / solo pixels, where the solo count is
how many pixels the instance covers with every other entity removed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .renderer import RenderOutput

DEFAULT_MIN_PIXELS = 16
DEFAULT_MIN_VISIBILITY = 0.25


@dataclass(frozen=True)
class Annotation:
    """One kept instance: xywh box in pixels (top-left origin), area as
    visible pixel count, visibility in (0, 1]."""

    image_id: int
    instance_id: int
    category: str
    bbox: tuple[int, int, int, int]
    area: int
    visibility: float


def extract_boxes(out: RenderOutput, solo_counts: dict[int, int],
                  categories, *, min_pixels: int = DEFAULT_MIN_PIXELS,
                  min_visibility: float = DEFAULT_MIN_VISIBILITY,
                  image_id: int = 1) -> list[Annotation]:
    """Annotate every instance with enough visible pixels.

    categories[k-1] is the category of instance id k; distractor ids
    (negative) are never annotated. An instance is kept when its visible
    pixel count is >= min_pixels and visible/solo >= min_visibility.

    Raises ValueError when map dimensions disagree or thresholds are
    out of range.
    """
    ids = out.instance_id_map
    if out.rgb.shape[:2] != ids.shape or out.depth_map.shape != ids.shape:
        raise ValueError(
            f"map dimension mismatch: rgb {out.rgb.shape[:2]}, "
            f"ids {ids.shape}, depth {out.depth_map.shape}")
    if min_pixels < 1:
        raise ValueError("min_pixels must be >= 1")
    if not 0.0 < min_visibility <= 1.0:
        raise ValueError("min_visibility must be in (0, 1]")

    annotations = []
    for k in range(1, len(categories) + 1):
        mask = ids == k
        visible = int(mask.sum())
        if visible < min_pixels:
            continue
        solo = solo_counts.get(k, 0)
        if solo <= 0:
            continue
        visibility = visible / solo
        if visibility < min_visibility:
            continue
        ys, xs = np.nonzero(mask)
        x0 = int(xs.min())
        y0 = int(ys.min())
        bbox = (x0, y0, int(xs.max()) - x0 + 1, int(ys.max()) - y0 + 1)
        annotations.append(Annotation(
            image_id=image_id, instance_id=k, category=categories[k - 1],
            bbox=bbox, area=visible, visibility=visibility))
    return annotations

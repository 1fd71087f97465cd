"""Synthetic aerial imagery toolkit: randomized scene generation with
ground-truth boxes, a toy unpaired translation objective, and COCO-style
detection evaluation."""

__version__ = "0.1.0"

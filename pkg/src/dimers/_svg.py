"""Tiny dependency-free SVG writers for the CLI plots."""

from __future__ import annotations

import numpy as np


def _bounds(arrays):
    pts = np.concatenate([a for a in arrays if len(a)], axis=0)
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    pad = 0.05 * max(hi[0] - lo[0], hi[1] - lo[1], 1e-9)
    return lo - pad, hi + pad


def polyline_svg(curves, colors, size: int = 640) -> str:
    """Curves: list of (k, 2) arrays in math coordinates (y axis up)."""
    lo, hi = _bounds(curves)
    span = max(hi[0] - lo[0], hi[1] - lo[1])
    scale = size / span

    def sx(v):
        return (v - lo[0]) * scale

    def sy(v):
        return size - (v - lo[1]) * scale

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">',
        f'<rect width="{size}" height="{size}" fill="white"/>',
    ]
    for pts, color in zip(curves, colors):
        if len(pts) < 2:
            continue
        coords = " ".join(f"{sx(p[0]):.2f},{sy(p[1]):.2f}" for p in pts)
        parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
    parts.append("</svg>")
    return "\n".join(parts)


def slope_rgb(s1: float, s2: float) -> str:
    """Map a polygon-coordinate slope into a stable color ramp."""
    r = int(max(0.0, min(1.0, s1)) * 255)
    g = int(max(0.0, min(1.0, -s2)) * 255)
    b = int(max(0.0, min(1.0, 1.0 - 0.5 * (s1 - s2))) * 255)
    return f"rgb({r},{g},{b})"


def heightmap_svg(slopes: np.ndarray, cell: int = 6) -> str:
    """slopes: (fh, fw, 2) local polygon-coordinate slopes per face."""
    fh, fw = slopes.shape[:2]
    wpx, hpx = fw * cell, fh * cell
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{wpx}" height="{hpx}" '
        f'viewBox="0 0 {wpx} {hpx}">'
    ]
    for y in range(fh):
        for x in range(fw):
            color = slope_rgb(slopes[y, x, 0], slopes[y, x, 1])
            parts.append(
                f'<rect x="{x * cell}" y="{(fh - 1 - y) * cell}" width="{cell}" '
                f'height="{cell}" fill="{color}"/>'
            )
    parts.append("</svg>")
    return "\n".join(parts)

"""Polyline helpers shared by the scene, oracle and augmentation code."""

from __future__ import annotations

import math

import numpy as np

from .core import GridSpec

_CHUNK = 16


def polyline_length(points: np.ndarray) -> float:
    return float(np.sum(np.linalg.norm(np.diff(points, axis=0), axis=1)))


def resample_polyline(points, step: float) -> np.ndarray:
    """Resample at uniform arc length with spacing at most ``step``; keeps both ends."""
    pts = np.asarray(points, dtype=np.float64)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    keep = np.concatenate([[True], seg > 1e-12])
    pts = pts[keep]
    if len(pts) < 2:
        return pts.copy()
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    n = max(1, int(math.ceil(s[-1] / step - 1e-9)))
    t = np.linspace(0.0, s[-1], n + 1)
    out = np.stack([np.interp(t, s, pts[:, 0]), np.interp(t, s, pts[:, 1])], axis=1)
    out[0], out[-1] = pts[0], pts[-1]
    return out


def forward_directions(points: np.ndarray) -> np.ndarray:
    """Unit forward differences; the last point repeats the final step."""
    d = np.diff(points, axis=0)
    d = np.vstack([d, d[-1:]])
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def segment_headings(points: np.ndarray) -> np.ndarray:
    d = np.diff(points, axis=0)
    return np.mod(np.arctan2(d[:, 1], d[:, 0]), 2 * math.pi)


def distance_field(points, spec: GridSpec, radius: float):
    """Exact distance from every cell center within ``radius`` of a polyline.

    Returns ``(rows, cols, dist, seg)`` where ``seg`` is the index of the nearest
    segment (lowest index on ties).  Work is done in chunks of segments, each
    restricted to its own bounding box, so cost follows the corridor area.
    """
    pts = np.asarray(points, dtype=np.float64)
    n = spec.cells_per_side
    m = spec.meters_per_cell
    ox, oy = spec.origin
    if len(pts) == 1:
        pts = np.vstack([pts, pts])
    best = np.full((n, n), np.inf)
    best_seg = np.full((n, n), -1, dtype=np.int64)
    nseg = len(pts) - 1
    for s0 in range(0, nseg, _CHUNK):
        s1 = min(s0 + _CHUNK, nseg)
        a = pts[s0:s1]
        b = pts[s0 + 1:s1 + 1]
        lo = np.minimum(a.min(axis=0), b.min(axis=0)) - radius
        hi = np.maximum(a.max(axis=0), b.max(axis=0)) + radius
        j0 = max(0, int(math.floor((lo[0] - ox) / m - 0.5)))
        j1 = min(n - 1, int(math.ceil((hi[0] - ox) / m - 0.5)))
        i0 = max(0, int(math.floor((lo[1] - oy) / m - 0.5)))
        i1 = min(n - 1, int(math.ceil((hi[1] - oy) / m - 0.5)))
        if j0 > j1 or i0 > i1:
            continue
        xs = ox + (np.arange(j0, j1 + 1) + 0.5) * m
        ys = oy + (np.arange(i0, i1 + 1) + 0.5) * m
        gx, gy = np.meshgrid(xs, ys, indexing="xy")
        px = gx.reshape(-1, 1)
        py = gy.reshape(-1, 1)
        ab = b - a
        len2 = np.einsum("ij,ij->i", ab, ab)
        len2 = np.where(len2 > 0, len2, 1.0)
        t = ((px - a[:, 0]) * ab[:, 0] + (py - a[:, 1]) * ab[:, 1]) / len2
        t = np.clip(t, 0.0, 1.0)
        dx = px - (a[:, 0] + t * ab[:, 0])
        dy = py - (a[:, 1] + t * ab[:, 1])
        d = np.hypot(dx, dy)
        k = np.argmin(d, axis=1)
        dmin = d[np.arange(len(k)), k].reshape(gx.shape)
        window = best[i0:i1 + 1, j0:j1 + 1]
        wseg = best_seg[i0:i1 + 1, j0:j1 + 1]
        better = dmin < window
        window[better] = dmin[better]
        wseg[better] = (k.reshape(gx.shape) + s0)[better]
    rows, cols = np.nonzero(best <= radius)
    return rows, cols, best[rows, cols], best_seg[rows, cols]


def corridor_mask(points, spec: GridSpec, half_width: float) -> np.ndarray:
    rows, cols, _, _ = distance_field(points, spec, half_width)
    mask = np.zeros((spec.cells_per_side,) * 2, dtype=bool)
    mask[rows, cols] = True
    return mask


def offset_polyline(points: np.ndarray, offset: float) -> np.ndarray:
    """Shift a polyline sideways; positive offsets move to the left of travel."""
    seg = np.diff(points, axis=0)
    seg = seg / np.linalg.norm(seg, axis=1, keepdims=True)
    tang = np.zeros_like(points)
    tang[:-1] += seg
    tang[1:] += seg
    tang /= np.linalg.norm(tang, axis=1, keepdims=True)
    left = np.stack([-tang[:, 1], tang[:, 0]], axis=1)
    return points + offset * left


def dash_polyline(points: np.ndarray, on: float, off: float) -> list[np.ndarray]:
    """Split a polyline into dash pieces of length ``on`` separated by ``off``."""
    fine = resample_polyline(points, min(on, off) / 8.0)
    s = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(fine, axis=0), axis=1))])
    phase = np.mod(s, on + off) < on
    pieces = []
    start = None
    for k, keep in enumerate(phase):
        if keep and start is None:
            start = k
        if (not keep or k == len(phase) - 1) and start is not None:
            stop = k if keep else k - 1
            if stop > start:
                pieces.append(fine[start:stop + 1])
            start = None
    return pieces

"""Random rotation, translation and smooth warping of layouts and rasters."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter

from .core import INPUT_SPEC, GridMap, GridSpec
from .scene import RoadLayout, transform_layout

MAX_TRANSLATION = 16  # input cells, per component
WARP_AMPLITUDE = 4.0  # input cells
WARP_RADIUS = 16  # input cells
WARP_PASSES = 3  # one box pass leaves a jagged field that can fold the map
INTERPOLATIONS = ("nearest", "bilinear-then-threshold", "vector")


@dataclass(frozen=True, eq=False)
class AugmentParams:
    """One random draw of the augmentation.

    ``warp`` is a ``(2, 256, 256)`` displacement field in input cells (x then y
    component) defined on the input grid.
    """

    rotation: float
    translation: tuple[int, int]
    warp: np.ndarray
    seed: int | None = None
    amplitude: float = WARP_AMPLITUDE
    radius: int = WARP_RADIUS

    def __post_init__(self):
        w = np.array(self.warp, dtype=np.float64, copy=True)
        w.setflags(write=False)
        object.__setattr__(self, "warp", w)
        if max(abs(self.translation[0]), abs(self.translation[1])) > MAX_TRANSLATION:
            raise ValueError("translation exceeds 16 input cells")
        if w.size and np.max(np.hypot(w[0], w[1])) > WARP_AMPLITUDE + 1e-9:
            raise ValueError("warp amplitude exceeds 4 input cells")

    def __eq__(self, other):
        if not isinstance(other, AugmentParams):
            return NotImplemented
        return (self.rotation == other.rotation and tuple(self.translation) == tuple(other.translation)
                and np.array_equal(self.warp, other.warp))


def identity_params(size: int = INPUT_SPEC.cells_per_side) -> AugmentParams:
    return AugmentParams(0.0, (0, 0), np.zeros((2, size, size)), seed=None)


def sample_params(seed: int, size: int = INPUT_SPEC.cells_per_side) -> AugmentParams:
    """Draw rotation, translation and a smooth warp field, fully determined by ``seed``."""
    rng = np.random.default_rng(seed)
    rotation = float(rng.uniform(0.0, 2.0 * math.pi))
    tx, ty = (int(v) for v in rng.integers(-MAX_TRANSLATION, MAX_TRANSLATION + 1, size=2))
    noise = rng.standard_normal((2, size, size))
    smooth = noise
    for _ in range(WARP_PASSES):
        smooth = uniform_filter(smooth, size=(1, 2 * WARP_RADIUS + 1, 2 * WARP_RADIUS + 1), mode="wrap")
    peak = float(np.max(np.hypot(smooth[0], smooth[1])))
    warp = smooth * (WARP_AMPLITUDE / peak) if peak > 0 else smooth
    return AugmentParams(rotation, (tx, ty), warp, seed=seed)


def _bilinear(field2d: np.ndarray, rows, cols) -> np.ndarray:
    """Sample a cell-centered field at continuous (row, col); edges are clamped."""
    n_r, n_c = field2d.shape
    r = np.clip(np.asarray(rows, float) - 0.5, 0.0, n_r - 1.0)
    c = np.clip(np.asarray(cols, float) - 0.5, 0.0, n_c - 1.0)
    r0 = np.minimum(np.floor(r).astype(np.int64), n_r - 2)
    c0 = np.minimum(np.floor(c).astype(np.int64), n_c - 2)
    fr = r - r0
    fc = c - c0
    return ((1 - fr) * (1 - fc) * field2d[r0, c0] + (1 - fr) * fc * field2d[r0, c0 + 1]
            + fr * (1 - fc) * field2d[r0 + 1, c0] + fr * fc * field2d[r0 + 1, c0 + 1])


def transform_points(points, params: AugmentParams, spec: GridSpec = INPUT_SPEC) -> np.ndarray:
    """Rotate about the grid center, translate, then add the warp displacement (world meters)."""
    p = np.asarray(points, dtype=np.float64)
    m = spec.meters_per_cell
    center = np.array(spec.origin) + spec.extent / 2.0
    c, s = math.cos(params.rotation), math.sin(params.rotation)
    rot = np.array([[c, -s], [s, c]])
    q = (p - center) @ rot.T + center + np.array(params.translation, float) * m
    if params.warp.size and np.any(params.warp):
        g = spec.to_grid(q)
        dx = _bilinear(params.warp[0], g[..., 0], g[..., 1])
        dy = _bilinear(params.warp[1], g[..., 0], g[..., 1])
        q = q + np.stack([dx, dy], axis=-1) * m
    return q


def augment_layout(layout: RoadLayout, params: AugmentParams, spec: GridSpec = INPUT_SPEC) -> RoadLayout:
    return transform_layout(layout, lambda pts: transform_points(pts, params, spec))


def _source_coords(n: int, params: AugmentParams, scale: float):
    """Continuous source (x, y) grid coordinates for every output cell center."""
    jj, ii = np.meshgrid(np.arange(n) + 0.5, np.arange(n) + 0.5, indexing="xy")
    x, y = jj, ii
    if params.warp.size and np.any(params.warp):
        wx = _bilinear(params.warp[0], y / scale, x / scale) * scale
        wy = _bilinear(params.warp[1], y / scale, x / scale) * scale
        x, y = x - wx, y - wy
    x = x - params.translation[0] * scale
    y = y - params.translation[1] * scale
    c, s = math.cos(params.rotation), math.sin(params.rotation)
    ctr = n / 2.0
    dx, dy = x - ctr, y - ctr
    return c * dx + s * dy + ctr, -s * dx + c * dy + ctr


def apply(map: GridMap, params: AugmentParams, resolution_scale: float = 1.0,
          interpolation: str = "nearest", fill: float = 0.0, vector_channels=None) -> GridMap:
    """Resample a square raster under ``params``.

    Out-of-bounds cells take ``fill`` (0.5 for observation layers, 0 for labels).
    ``bilinear-then-threshold`` snaps results back to {0, 0.5, 1}; ``vector``
    samples nearest and rotates the ``(x, y)`` channel pairs in
    ``vector_channels`` by the rotation angle.
    """
    if map.height != map.width:
        raise ValueError(f"augmentation needs a square map, got {map.height}x{map.width}")
    if interpolation not in INTERPOLATIONS:
        raise ValueError(f"unknown interpolation {interpolation!r}")
    n = map.width
    sx, sy = _source_coords(n, params, resolution_scale)
    src = map.data
    if interpolation in ("nearest", "vector"):
        cj = np.floor(sx).astype(np.int64)
        ci = np.floor(sy).astype(np.int64)
        inside = (ci >= 0) & (ci < n) & (cj >= 0) & (cj < n)
        out = np.full(src.shape, float(fill))
        out[:, inside] = src[:, ci[inside], cj[inside]]
    else:
        fx, fy = sx - 0.5, sy - 0.5
        x0 = np.floor(fx).astype(np.int64)
        y0 = np.floor(fy).astype(np.int64)
        ax, ay = fx - x0, fy - y0
        out = np.zeros(src.shape)
        for di, dj, w in ((0, 0, (1 - ay) * (1 - ax)), (0, 1, (1 - ay) * ax),
                          (1, 0, ay * (1 - ax)), (1, 1, ay * ax)):
            yi, xj = y0 + di, x0 + dj
            ok = (yi >= 0) & (yi < n) & (xj >= 0) & (xj < n)
            vals = np.full(src.shape, float(fill))
            vals[:, ok] = src[:, yi[ok], xj[ok]]
            out += w * vals
        levels = np.array([0.0, 0.5, 1.0])
        out = levels[np.argmin(np.abs(out[..., None] - levels), axis=-1)]
    if interpolation == "vector":
        if vector_channels is None:
            vector_channels = (1, 2) if map.channels >= 3 else (0, 1)
        cx, cy = vector_channels
        c, s = math.cos(params.rotation), math.sin(params.rotation)
        vx, vy = out[cx].copy(), out[cy].copy()
        out[cx] = c * vx - s * vy
        out[cy] = s * vx + c * vy
    return GridMap(out)

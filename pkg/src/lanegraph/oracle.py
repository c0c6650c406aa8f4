"""Analytic stand-in for the dense network output, training labels and noise injection."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .augment import AugmentParams, augment_layout, identity_params
from .core import INPUT_SPEC, LABEL_SPEC, GridMap, GridSpec, wrap_angle
from .fields import K_MAX, AffordanceBundle, DirectionalField
from .geometry import distance_field, segment_headings
from .graphgen.graph import LaneGraph
from .scene import RoadLayout, RoutePath, enumerate_routes, ground_truth_graph, rasterize_scene

LABEL_KAPPA = 8.0
BLOB_RADIUS = 3.0
DEDUP_ANGLE = math.radians(15.0)
LABEL_BLOB_RADIUS = 1.5  # binary blob: cells where the graded blob is >= 0.5
BLOB_JITTER = 2


@dataclass(frozen=True, eq=False)
class TrainingSample:
    """2x256x256 observation paired with a 4x128x128 single-trajectory label."""

    input: GridMap
    label: GridMap
    entry_cell: tuple[int, int]
    exit_cell: tuple[int, int]
    route: tuple[str, str]

    def __eq__(self, other):
        if not isinstance(other, TrainingSample):
            return NotImplemented
        return (self.input == other.input and self.label == other.label
                and self.entry_cell == other.entry_cell and self.exit_cell == other.exit_cell)


def _port_cell(point, spec: GridSpec) -> tuple[int, int]:
    c = spec.to_cell(np.asarray(point))
    n = spec.cells_per_side - 1
    return int(min(max(c[0], 0), n)), int(min(max(c[1], 0), n))


def _blob(shape, cell, radius: float, binary: bool = False) -> np.ndarray:
    ii, jj = np.indices(shape)
    d = np.hypot(ii - cell[0], jj - cell[1])
    if binary:
        return (d <= radius).astype(np.float64)
    return np.clip(1.0 - d / radius, 0.0, 1.0)


def _cluster_angles(angles: np.ndarray, threshold: float, support=None) -> list[tuple[float, float]]:
    """Single-linkage clusters of angles on the circle: ``[(circular mean, support)]``.

    ``support`` weights each angle (default 1); a cluster's support is the sum.
    """
    raw = np.mod(angles, 2 * math.pi)
    sup = np.ones(len(raw)) if support is None else np.asarray(support, dtype=np.float64)
    order = np.argsort(raw, kind="stable")
    a, sup = raw[order], sup[order]
    if len(a) == 1:
        return [(float(a[0]), float(sup[0]))]
    gaps = np.diff(np.concatenate([a, [a[0] + 2 * math.pi]]))
    breaks = np.nonzero(gaps > threshold)[0]
    if len(breaks):
        # rotate so the list starts right after a break; wrap-around clusters stay whole
        start = (breaks[-1] + 1) % len(a)
        idx = np.roll(np.arange(len(a)), -start)
        cut = sorted(((b - start) % len(a)) + 1 for b in breaks)
        groups = [g for g in np.split(idx, cut[:-1]) if len(g)]
    else:
        groups = [np.arange(len(a))]
    out = []
    for g in groups:
        mu = math.atan2(float(np.sum(np.sin(a[g]))), float(np.sum(np.cos(a[g]))))
        out.append((float(wrap_angle(mu)), float(np.sum(sup[g]))))
    return out


def route_direction_field(routes, spec: GridSpec = LABEL_SPEC, half_width: float = 1.75,
                          kappa: float = LABEL_KAPPA, dedup: float = DEDUP_ANGLE):
    """Per-cell von Mises mixture over the tangents of all routes through each cell.

    Returns ``(field, covered_mask, warning_list)``.
    """
    n = spec.cells_per_side
    cells, angles, closeness = [], [], []
    for r in routes:
        rows, cols, dist, seg = distance_field(r.points, spec, half_width)
        hd = segment_headings(r.points)
        cells.append(rows * n + cols)
        angles.append(hd[seg])
        closeness.append(1.0 - dist / (half_width + spec.meters_per_cell))
    w = np.zeros((n, n, K_MAX))
    mu = np.zeros((n, n, K_MAX))
    kap = np.zeros((n, n, K_MAX))
    covered = np.zeros((n, n), dtype=bool)
    notes: list[str] = []
    if not cells:
        return DirectionalField(w, mu, kap), covered, notes
    flat = np.concatenate(cells)
    ang = np.concatenate(angles)
    close = np.concatenate(closeness)
    order = np.argsort(flat, kind="stable")
    flat, ang, close = flat[order], ang[order], close[order]
    uniq, start, count = np.unique(flat, return_index=True, return_counts=True)
    covered.reshape(-1)[uniq] = True
    single = count == 1
    ui, uj = np.divmod(uniq[single], n)
    w[ui, uj, 0] = 1.0
    mu[ui, uj, 0] = wrap_angle(ang[start[single]])
    kap[ui, uj, 0] = kappa
    crowded = 0
    for cell, s0, c in zip(uniq[~single], start[~single], count[~single]):
        clusters = _cluster_angles(ang[s0:s0 + c], dedup, close[s0:s0 + c])
        if len(clusters) > K_MAX:
            crowded += 1
        clusters.sort(key=lambda t: (-t[1], t[0]))
        clusters = sorted(clusters[:K_MAX], key=lambda t: t[0])
        i, j = divmod(int(cell), n)
        k = len(clusters)
        for q, (m, _) in enumerate(clusters):
            w[i, j, q] = 1.0 / k
            mu[i, j, q] = m
            kap[i, j, q] = kappa
    if crowded:
        notes.append(f"{crowded} cells carried more than {K_MAX} directions; kept the {K_MAX} best supported")
    return DirectionalField(w, mu, kap), covered, notes


def synth_affordances(layout: RoadLayout, spec: GridSpec = LABEL_SPEC, kappa: float = LABEL_KAPPA) -> AffordanceBundle:
    """Dense lane, entry, exit and direction maps computed from ground truth."""
    routes = enumerate_routes(layout)
    half = max((lane.width for lane in layout.lanes), default=3.5) / 2.0
    field, covered, notes = route_direction_field(routes, spec, half, kappa)
    n = spec.cells_per_side
    entry = np.zeros((n, n))
    exit_ = np.zeros((n, n))
    for p in layout.entries:
        entry = np.maximum(entry, _blob((n, n), _port_cell(p.point, spec), BLOB_RADIUS))
    for p in layout.exits:
        exit_ = np.maximum(exit_, _blob((n, n), _port_cell(p.point, spec), BLOB_RADIUS))
    for note in notes:
        warnings.warn(note, stacklevel=2)
    return AffordanceBundle(GridMap(covered.astype(np.float64)), GridMap(entry), GridMap(exit_), field, tuple(notes))


def _find_route(layout: RoadLayout, route) -> RoutePath:
    key = (route.entry, route.exit) if hasattr(route, "entry") else tuple(route)
    for r in enumerate_routes(layout):
        if (r.entry, r.exit) == key:
            return r
    raise KeyError(f"route {key[0]}->{key[1]} not in layout {layout.id}")


def make_sample(layout: RoadLayout, route, params: AugmentParams | None = None,
                spec: GridSpec = LABEL_SPEC, input_spec: GridSpec = INPUT_SPEC) -> TrainingSample:
    """Observation of the augmented scene plus the label of one example trajectory."""
    params = params or identity_params()
    aug = augment_layout(layout, params, input_spec)
    r = _find_route(aug, route)
    obs = rasterize_scene(aug, input_spec)
    n = spec.cells_per_side
    width = aug.lane(r.entry).width
    rows, cols, _, seg = distance_field(r.points, spec, width / 2.0)
    hd = segment_headings(r.points)[seg]
    label = np.zeros((4, n, n))
    label[0, rows, cols] = 1.0
    label[1, rows, cols] = np.cos(hd)
    label[2, rows, cols] = np.sin(hd)
    e_cell = _port_cell(aug.port(r.entry).point, spec)
    x_cell = _port_cell(aug.port(r.exit).point, spec)
    label[3] = np.maximum(_blob((n, n), e_cell, LABEL_BLOB_RADIUS, True),
                          _blob((n, n), x_cell, LABEL_BLOB_RADIUS, True))
    return TrainingSample(obs, GridMap(label), e_cell, x_cell, (r.entry, r.exit))


def make_eval_label(layout: RoadLayout, spec: GridSpec = LABEL_SPEC,
                    params: AugmentParams | None = None) -> tuple[AffordanceBundle, LaneGraph]:
    """All routes superimposed on the augmented scene, with its reference graph."""
    params = params or identity_params()
    aug = augment_layout(layout, params)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        bundle = synth_affordances(aug, spec)
    return bundle, ground_truth_graph(aug, spec)


def eval_label_tensor(bundle: AffordanceBundle) -> GridMap:
    """4-channel label of an eval sample: union mask, dominant direction, all port blobs."""
    lane = bundle.lane.data[0]
    mu = bundle.direction.dominant()
    on = lane > 0.5
    n = lane.shape[0]
    out = np.zeros((4, n, n))
    out[0] = on
    out[1][on] = np.cos(mu[on])
    out[2][on] = np.sin(mu[on])
    out[3] = (np.maximum(bundle.entry.data[0], bundle.exit.data[0]) >= 0.5).astype(np.float64)
    return GridMap(out)


def _jitter_blobs(m: np.ndarray, offsets: np.ndarray) -> np.ndarray:
    labels, count = ndimage.label(m > 0, structure=np.ones((3, 3)))
    out = np.zeros_like(m)
    n_r, n_c = m.shape
    for k in range(1, count + 1):
        ii, jj = np.nonzero(labels == k)
        di, dj = offsets[(k - 1) % len(offsets)]
        ti = np.clip(ii + di, 0, n_r - 1)
        tj = np.clip(jj + dj, 0, n_c - 1)
        np.maximum.at(out, (ti, tj), m[ii, jj])
    return out


def inject_noise(bundle: AffordanceBundle, flip_prob: float, dir_jitter_sigma: float,
                 seed: int, max_blobs: int = 64) -> AffordanceBundle:
    """Emulate imperfect network output: lane flips, heading jitter, shifted port blobs.

    Random draws are taken in a fixed order and size, so for one seed the cells
    flipped at a lower ``flip_prob`` are a subset of those flipped at a higher one.
    """
    if not 0.0 <= flip_prob <= 0.5:
        raise ValueError("flip_prob must lie in [0, 0.5]")
    rng = np.random.default_rng(seed)
    lane = bundle.lane.data[0]
    u = rng.random(lane.shape)
    z = rng.standard_normal(bundle.direction.means.shape)
    offsets = rng.integers(-BLOB_JITTER, BLOB_JITTER + 1, size=(2, max_blobs, 2))
    if flip_prob == 0.0 and dir_jitter_sigma == 0.0:
        return bundle
    lane = np.where(u < flip_prob, 1.0 - lane, lane)
    d = bundle.direction
    means = np.where(d.active, wrap_angle(d.means + dir_jitter_sigma * z), d.means)
    direction = DirectionalField(d.weights, means, d.kappas)
    entry = _jitter_blobs(bundle.entry.data[0], offsets[0])
    exit_ = _jitter_blobs(bundle.exit.data[0], offsets[1])
    return AffordanceBundle(GridMap(lane), GridMap(entry), GridMap(exit_), direction, bundle.warnings)

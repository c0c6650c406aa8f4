"""Affordance preprocessing, gated adjacency weights, point extraction and A* search."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra as _csgraph_dijkstra

from ..core import GridMap, angle_diff
from ..fields import DirectionalField

DELTA_THETA = math.radians(45.0)
KERNEL = 8
SHARPEN = 8

# 8-neighborhood as (di, dj); heading of a move is atan2(di, dj)
NEIGHBORS = ((0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1), (-1, 0), (-1, 1))


def preprocess_lane_map(lane: GridMap | np.ndarray) -> GridMap:
    """Threshold, 8x8 box average over offsets [-4, +3] (zero padded), then raise to the 8th power."""
    y = lane.data[0] if isinstance(lane, GridMap) else np.asarray(lane, dtype=np.float64)
    b = (y > 0.5).astype(np.float64)
    h, w = b.shape
    lo, hi = KERNEL // 2, KERNEL // 2 - 1
    pad = np.zeros((h + KERNEL, w + KERNEL))
    pad[lo:lo + h, lo:lo + w] = b
    sat = np.zeros((h + KERNEL + 1, w + KERNEL + 1))
    sat[1:, 1:] = pad.cumsum(0).cumsum(1)
    # window for cell (i, j) covers padded rows i .. i+7 (original i-4 .. i+3)
    r0 = np.arange(h)[:, None]
    c0 = np.arange(w)[None, :]
    r1, c1 = r0 + lo + hi + 1, c0 + lo + hi + 1
    total = sat[r1, c1] - sat[r0, c1] - sat[r1, c0] + sat[r0, c0]
    smooth = np.clip(total / (KERNEL * KERNEL), 0.0, 1.0)
    return GridMap(smooth ** SHARPEN)


@dataclass(frozen=True, eq=False)
class AdjacencyField:
    """Implicit weighted 8-neighbor adjacency; nothing of size cells^2 is built."""

    lane_tilde: np.ndarray
    direction: DirectionalField
    delta_theta: float = DELTA_THETA
    _costs: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        y = np.array(self.lane_tilde.data[0] if isinstance(self.lane_tilde, GridMap) else self.lane_tilde,
                     dtype=np.float64)
        if y.shape != tuple(self.direction.shape):
            raise ValueError("lane map and direction field differ in size")
        y.setflags(write=False)
        object.__setattr__(self, "lane_tilde", y)
        object.__setattr__(self, "_costs", self._build_costs())

    @property
    def shape(self) -> tuple[int, int]:
        return self.lane_tilde.shape

    def _build_costs(self) -> np.ndarray:
        """Weight of each of the 8 moves out of every cell; inf where gated."""
        h, w = self.lane_tilde.shape
        d = self.direction
        active = d.active
        costs = np.full((8, h, w), np.inf)
        with np.errstate(divide="ignore"):
            neg_log = -np.log(self.lane_tilde)
        for k, (di, dj) in enumerate(NEIGHBORS):
            theta = math.atan2(di, dj)
            ok = np.any(active & (angle_diff(d.means, theta) <= self.delta_theta + 1e-12), axis=2)
            src_i = slice(max(0, -di), h - max(0, di))
            src_j = slice(max(0, -dj), w - max(0, dj))
            dst_i = slice(max(0, di), h - max(0, -di))
            dst_j = slice(max(0, dj), w - max(0, -dj))
            yb = self.lane_tilde[dst_i, dst_j]
            step = math.hypot(di, dj)
            c = np.where(ok[src_i, src_j] & (yb > 0), step + neg_log[dst_i, dst_j], np.inf)
            costs[k, src_i, src_j] = c
        costs.setflags(write=False)
        return costs

    def move_costs(self) -> np.ndarray:
        return self._costs


def edge_weight(field: AdjacencyField, a, b) -> float:
    """Weight of the move a -> b between 8-neighbors, ``inf`` when unreachable."""
    di, dj = int(b[0]) - int(a[0]), int(b[1]) - int(a[1])
    if (di, dj) not in NEIGHBORS:
        raise ValueError(f"{tuple(b)} is not an 8-neighbor of {tuple(a)}")
    h, w = field.shape
    if not (0 <= a[0] < h and 0 <= a[1] < w and 0 <= b[0] < h and 0 <= b[1] < w):
        return math.inf
    return float(field.move_costs()[NEIGHBORS.index((di, dj)), int(a[0]), int(a[1])])


def extract_points(m: GridMap | np.ndarray, threshold: float = 0.5) -> list[tuple[int, int]]:
    """Value-weighted centroid of every 8-connected cluster above ``threshold``.

    The centroid is rounded to the nearest cell of its own cluster; clusters are
    returned in raster order of their first cell.
    """
    y = m.data[0] if isinstance(m, GridMap) else np.asarray(m, dtype=np.float64)
    labels, count = ndimage.label(y > threshold, structure=np.ones((3, 3), dtype=bool))
    points = []
    for k in range(1, count + 1):
        ii, jj = np.nonzero(labels == k)
        wts = y[ii, jj]
        ci = float(np.sum(wts * ii) / np.sum(wts))
        cj = float(np.sum(wts * jj) / np.sum(wts))
        d = (ii - ci) ** 2 + (jj - cj) ** 2
        best = np.lexsort((jj, ii, np.round(d, 9)))[0]
        points.append((int(ii[best]), int(jj[best])))
    return points


def _reconstruct(parent: dict, node: int, w: int) -> list[tuple[int, int]]:
    path = []
    while node != -1:
        path.append(divmod(node, w))
        node = parent[node]
    path.reverse()
    return path


def astar(start, goal, field: AdjacencyField):
    """Minimum-weight 8-connected path or ``None``; returns ``(path, cost)``.

    Euclidean distance is admissible because every move costs at least its
    length. Equal priorities pop the smaller (i, j) first.
    """
    h, w = field.shape
    s = int(start[0]) * w + int(start[1])
    g_node = int(goal[0]) * w + int(goal[1])
    if s == g_node:
        return [(int(start[0]), int(start[1]))], 0.0
    gi, gj = divmod(g_node, w)
    costs = field.move_costs().reshape(8, -1)
    moves = [di * w + dj for di, dj in NEIGHBORS]
    steps = [(k, di, dj, moves[k], costs[k]) for k, (di, dj) in enumerate(NEIGHBORS)]
    g = {s: 0.0}
    parent = {s: -1}
    closed = set()
    si, sj = divmod(s, w)
    heap = [(math.hypot(si - gi, sj - gj), s)]
    hypot = math.hypot
    while heap:
        _, node = heapq.heappop(heap)
        if node in closed:
            continue
        if node == g_node:
            return _reconstruct(parent, node, w), g[node]
        closed.add(node)
        gn = g[node]
        i, j = divmod(node, w)
        for _, di, dj, mv, ck in steps:
            c = ck[node]
            if c == math.inf:
                continue
            ni, nj = i + di, j + dj
            if ni < 0 or nj < 0 or ni >= h or nj >= w:
                continue
            nb = node + mv
            if nb in closed:
                continue
            ng = gn + c
            if ng < g.get(nb, math.inf):
                g[nb] = ng
                parent[nb] = node
                heapq.heappush(heap, (ng + hypot(ni - gi, nj - gj), nb))
    return None


def dijkstra_cost(start, goal, field: AdjacencyField) -> float:
    """Reference shortest-path cost from a sparse-graph Dijkstra (``inf`` if unreachable)."""
    h, w = field.shape
    costs = field.move_costs()
    rows, cols, vals = [], [], []
    ii, jj = np.indices((h, w))
    for k, (di, dj) in enumerate(NEIGHBORS):
        ok = np.isfinite(costs[k])
        ni, nj = ii[ok] + di, jj[ok] + dj
        rows.append(ii[ok] * w + jj[ok])
        cols.append(ni * w + nj)
        vals.append(costs[k][ok])
    graph = csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(h * w, h * w))
    dist = _csgraph_dijkstra(graph, directed=True, indices=int(start[0]) * w + int(start[1]))
    return float(dist[int(goal[0]) * w + int(goal[1])])

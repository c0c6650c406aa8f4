"""Search-based lane graph generation from an affordance bundle."""

from __future__ import annotations

import math

import numpy as np

from ..core import angle_diff
from ..fields import AffordanceBundle
from .graph import LaneGraph, PathSet, assemble_graph
from .search import DELTA_THETA, AdjacencyField, astar, extract_points, preprocess_lane_map
from .unify import LOOKAHEAD, THETA_DIV, reverse_unify, unify

UTURN_HEADING = math.radians(150.0)
UTURN_ALONG = 8.0  # cells
POINT_THRESHOLD = 0.5


def point_heading(bundle: AffordanceBundle, cell, radius: int = 1) -> float | None:
    """Circular mean of the dominant direction around ``cell`` (``None`` if undefined)."""
    mu = bundle.direction.dominant()
    h, w = mu.shape
    i, j = cell
    win = mu[max(0, i - radius):min(h, i + radius + 1), max(0, j - radius):min(w, j + radius + 1)]
    vals = win[np.isfinite(win)]
    if vals.size == 0:
        return None
    return math.atan2(float(np.sin(vals).sum()), float(np.cos(vals).sum()))


def is_uturn(entry_cell, entry_heading, exit_cell, exit_heading) -> bool:
    """Entry and exit on the same arm: opposing headings, side by side across the road."""
    if entry_heading is None or exit_heading is None:
        return False
    if angle_diff(entry_heading, exit_heading) <= UTURN_HEADING:
        return False
    # rows follow world y, so the heading vector in (i, j) is (sin, cos)
    di, dj = exit_cell[0] - entry_cell[0], exit_cell[1] - entry_cell[1]
    along = abs(di * math.sin(entry_heading) + dj * math.cos(entry_heading))
    return along <= UTURN_ALONG


def generate_graph(bundle: AffordanceBundle, delta_theta: float = DELTA_THETA, theta_div: float = THETA_DIV,
                   lookahead: int = LOOKAHEAD, point_threshold: float = POINT_THRESHOLD,
                   suppress_uturns: bool = True) -> LaneGraph:
    """Entry/exit extraction, A* between all point pairs, unification and assembly."""
    warnings: list[str] = []
    q_entry = extract_points(bundle.entry, point_threshold)
    q_exit = extract_points(bundle.exit, point_threshold)
    if not q_entry or not q_exit:
        warnings.append("no entry points found" if not q_entry else "no exit points found")
        return LaneGraph([], [], warnings)

    lane_t = preprocess_lane_map(bundle.lane)
    field = AdjacencyField(lane_t.data[0], bundle.direction, delta_theta)
    support = field.lane_tilde > 0
    entry_heads = [point_heading(bundle, c) for c in q_entry]
    exit_heads = [point_heading(bundle, c) for c in q_exit]

    paths = PathSet()
    for e, ce in enumerate(q_entry):
        tree, targets = [], []
        for x, cx in enumerate(q_exit):
            if suppress_uturns and is_uturn(ce, entry_heads[e], cx, exit_heads[x]):
                continue
            found = astar(ce, cx, field)
            if found is not None and len(found[0]) >= 2:
                tree.append(found[0])
                targets.append(x)
        if not tree:
            warnings.append(f"entry point {ce} reaches no exit")
            continue
        if len(tree) == 1:
            paths.con.append((e, targets[0], tree[0]))
            continue
        common, suffixes = unify(tree, theta_div, lookahead, support)
        paths.entry[e] = common
        for x, s in zip(targets, suffixes):
            paths.con.append((e, x, s))

    for x in range(len(q_exit)):
        members = [(e, p) for e, xx, p in paths.con if xx == x]
        if len(members) < 2:
            continue
        common, prefixes = reverse_unify([p for _, p in members], theta_div, lookahead, support)
        paths.exit[x] = common
        for (e, _), pre in zip(members, prefixes):
            paths.inter[(e, x)] = pre
    return assemble_graph(q_entry, q_exit, paths, warnings)

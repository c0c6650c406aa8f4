"""Lookahead headings, the spanned-angle divergence metric and path-tree unification."""

from __future__ import annotations

import math

import numpy as np

from ..core import TWO_PI

LOOKAHEAD = 6
THETA_DIV = 0.35

Cell = tuple[int, int]


def lookahead_direction(path, t: int, dt: int = LOOKAHEAD) -> float:
    """Heading from ``path[t]`` to ``path[min(t + dt, last)]``."""
    if len(path) < 2:
        raise ValueError("lookahead needs a path of at least 2 cells")
    last = len(path) - 1
    t = min(max(int(t), 0), last - 1)
    a = path[t]
    b = path[min(t + dt, last)]
    return math.atan2(b[0] - a[0], b[1] - a[1]) % TWO_PI


def divergence_angle(directions) -> float:
    """Angle spanned by all directions: the full turn minus the largest circular gap."""
    a = np.sort(np.mod(np.asarray(directions, dtype=np.float64), TWO_PI))
    if len(a) <= 1:
        return 0.0
    gaps = np.diff(np.concatenate([a, [a[0] + TWO_PI]]))
    return float(TWO_PI - gaps.max())


def _snap(avg: np.ndarray, support) -> Cell:
    """Round an averaged position, preferring the nearest supported cell among the four around it."""
    base = (int(round(avg[0])), int(round(avg[1])))
    if support is None:
        return base
    h, w = support.shape
    if 0 <= base[0] < h and 0 <= base[1] < w and support[base]:
        return base
    i0, j0 = int(math.floor(avg[0])), int(math.floor(avg[1]))
    best = None
    for ci in (i0, i0 + 1):
        for cj in (j0, j0 + 1):
            if 0 <= ci < h and 0 <= cj < w and support[ci, cj]:
                d = (ci - avg[0]) ** 2 + (cj - avg[1]) ** 2
                if best is None or (d, ci, cj) < best:
                    best = (d, ci, cj)
    return base if best is None else (best[1], best[2])


def _spread_ok(cells) -> bool:
    i = [c[0] for c in cells]
    j = [c[1] for c in cells]
    return max(i) - min(i) <= 1 and max(j) - min(j) <= 1


def divergence_index(paths, theta_div: float = THETA_DIV, dt: int = LOOKAHEAD) -> int:
    """First index at which the tree has split."""
    shortest = min(len(p) for p in paths)
    for t in range(shortest):
        cells = [tuple(p[t]) for p in paths]
        if not _spread_ok(cells):
            return t
        if t == shortest - 1:
            return t
        distinct = {tuple(map(tuple, p[t:t + dt + 1])): p for p in paths}
        if len(distinct) > 1:
            dirs = [lookahead_direction(p, t, dt) for p in distinct.values()]
            if divergence_angle(dirs) > theta_div:
                return t
    return shortest - 1


UNIFY_ROUNDS = 8


def _unify_once(paths, theta_div, dt, support):
    root = paths[0][0]
    unique = []
    for p in paths:
        if p not in unique:
            unique.append(p)
    if len(unique) == 1:
        return list(unique[0]), []
    t = divergence_index(unique, theta_div, dt)
    # the fork is the last index before the split
    end = max(t - 1, 0)
    common: list[Cell] = []
    for s in range(end + 1):
        avg = np.mean([p[s] for p in unique], axis=0)
        cell = _snap(avg, support)
        if not common or cell != common[-1]:
            common.append(cell)
    common[0] = root
    suffixes = []
    for p in paths:
        tail = p[end + 1:]
        suffixes.append([common[-1]] + [c for c in tail])
    return common, suffixes


def unify(tree, theta_div: float = THETA_DIV, dt: int = LOOKAHEAD, support=None):
    """Collapse paths sharing a root into a common prefix and re-rooted suffixes.

    Returns ``(common, suffixes)``. A single-path tree (or identical paths) has
    the whole path as common part and no suffixes. ``support`` is an optional
    boolean map; averaged cells are snapped onto it. Paths that differ before
    the split are re-unified on their rewritten form until the common part is
    stable, so unifying the output tree again returns the same common path.
    """
    paths = [[(int(c[0]), int(c[1])) for c in p] for p in tree]
    if not paths:
        raise ValueError("cannot unify an empty tree")
    root = paths[0][0]
    if any(p[0] != root for p in paths):
        raise ValueError("all paths of a tree must share their first cell")
    common, suffixes = _unify_once(paths, theta_div, dt, support)
    for _ in range(UNIFY_ROUNDS):
        if not suffixes:
            break
        rewritten = [common + s[1:] for s in suffixes]
        nxt = _unify_once(rewritten, theta_div, dt, support)
        if nxt[0] == common:
            break
        common, suffixes = nxt
    return common, suffixes


def reverse_unify(tree, theta_div: float = THETA_DIV, dt: int = LOOKAHEAD, support=None):
    """Unify paths that share their last cell: returns ``(common exit path, prefixes)``."""
    rev = [list(reversed([(int(c[0]), int(c[1])) for c in p])) for p in tree]
    common, suffixes = unify(rev, theta_div, dt, support)
    return list(reversed(common)), [list(reversed(s)) for s in suffixes]

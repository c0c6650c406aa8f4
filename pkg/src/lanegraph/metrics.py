"""Dense-output metrics and topological graph comparison."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import GridMap
from .fields import DirectionalField
from .graphgen.graph import LaneGraph
from .learning.vonmises import kl_divergence_arrays

MATCH_RADIUS = 5.0
EVAL_BINS = 256


def _arrays(pred, label):
    p = pred.data if isinstance(pred, GridMap) else np.asarray(pred, dtype=np.float64)
    y = label.data if isinstance(label, GridMap) else np.asarray(label, dtype=np.float64)
    if p.shape != y.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {y.shape}")
    return p, y


def acc_pos(pred, eval_label) -> float:
    """Share of positive label cells predicted above 0.5."""
    p, y = _arrays(pred, eval_label)
    pos = y > 0.5
    n = int(pos.sum())
    if n == 0:
        warnings.warn("label has no positive cells", stacklevel=2)
        return 1.0
    return float(np.count_nonzero(p[pos] > 0.5) / n)


def l1_neg(pred, eval_label) -> float:
    """Mean absolute prediction over negative label cells."""
    p, y = _arrays(pred, eval_label)
    neg = y <= 0.5
    n = int(neg.sum())
    if n == 0:
        return 0.0
    return float(np.abs(p[neg]).sum() / n)


def eval_kl(pred: DirectionalField, label: DirectionalField, lane_mask, bins: int = EVAL_BINS) -> float:
    """Mean per-cell KL(pred || label) over the lane mask."""
    m = lane_mask.data[0] if isinstance(lane_mask, GridMap) else np.asarray(lane_mask)
    m = m > 0.5
    if not m.any():
        return 0.0
    pw = pred.weights[m]
    if np.any(pw.sum(axis=1) <= 0):
        raise ValueError("undefined direction prediction on labeled cell")
    lw = label.weights[m]
    if np.any(lw.sum(axis=1) <= 0):
        raise ValueError("undefined direction label on labeled cell")
    kl = kl_divergence_arrays((pw, pred.means[m], pred.kappas[m]), (lw, label.means[m], label.kappas[m]), bins)
    return float(np.mean(kl))


def match_terminals(cand, ref, radius: float = MATCH_RADIUS) -> dict[str, str]:
    """Greedy nearest-first one-to-one matching of ``[(id, cell)]`` lists within ``radius``."""
    pairs = []
    for a, ca in cand:
        for b, cb in ref:
            d = math.hypot(ca[0] - cb[0], ca[1] - cb[1])
            if d <= radius:
                pairs.append((d, a, b))
    pairs.sort()
    used_a, used_b, out = set(), set(), {}
    for _, a, b in pairs:
        if a in used_a or b in used_b:
            continue
        used_a.add(a)
        used_b.add(b)
        out[a] = b
    return out


def graph_diff(g: LaneGraph, g_ref: LaneGraph, radius: float = MATCH_RADIUS) -> tuple[int, int]:
    """(missing, erroneous) routes of ``g`` against ``g_ref``.

    Terminals are matched by position; graphs are compared on their
    entry-to-exit route relation, and a matched route whose edge-kind sequence
    differs counts as one erroneous route.
    """
    mapping = {}
    for kind in ("entry", "exit"):
        mapping.update(match_terminals([(v.id, v.cell) for v in g.by_kind(kind)],
                                       [(v.id, v.cell) for v in g_ref.by_kind(kind)], radius))
    ref_routes = {k: sorted(set(v)) for k, v in g_ref.routes().items()}
    routes = {}
    for (e, x), seqs in g.routes().items():
        key = (mapping.get(e, ("unmatched", e)), mapping.get(x, ("unmatched", x)))
        routes.setdefault(key, set()).update(seqs)
    routes = {k: sorted(v) for k, v in routes.items()}
    missing = sum(1 for k in ref_routes if k not in routes)
    erroneous = sum(1 for k in routes if k not in ref_routes)
    erroneous += sum(1 for k in routes if k in ref_routes and routes[k] != ref_routes[k])
    return missing, erroneous


@dataclass
class EvalReport:
    acc_pos: dict[str, float] = field(default_factory=dict)
    l1_neg: dict[str, float] = field(default_factory=dict)
    d_kl: float = 0.0
    graph_missing: int = 0
    graph_erroneous: int = 0
    violations: list[str] = field(default_factory=list)

    @property
    def error_free(self) -> bool:
        return self.graph_missing == 0 and self.graph_erroneous == 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["error_free"] = self.error_free
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

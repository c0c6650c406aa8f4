"""Dataset generation, batch evaluation, toy training and SVG rendering behind the CLI."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import warnings
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from .augment import augment_layout, sample_params
from .core import GridMap, _atomic_write_bytes, read_tensor, write_tensor
from .fields import AffordanceBundle
from .graphgen.extract import generate_graph
from .graphgen.graph import LaneGraph, read_graph, validate_graph, write_graph
from .graphgen.search import DELTA_THETA
from .graphgen.unify import LOOKAHEAD, THETA_DIV
from .learning.toy import ToyConfig, curves_csv, toy_train, write_model
from .metrics import EvalReport, acc_pos, eval_kl, graph_diff, l1_neg
from .oracle import eval_label_tensor, inject_noise, make_eval_label, make_sample
from .scene import enumerate_routes, load_library, rasterize_scene

log = logging.getLogger(__name__)

SUMMARY_FIELDS = ["layout", "family", "sample", "seed", "acc_pos_lane", "acc_pos_points", "l1_neg_lane",
                  "l1_neg_points", "d_kl", "missing", "erroneous", "violations", "error_free"]


@dataclass
class RunConfig:
    library: str | None = None
    family: str = "all"
    samples: int = 20
    seed: int = 0
    noise_flip: float = 0.0
    noise_dir_sigma: float = 0.0
    delta_theta: float = DELTA_THETA
    theta_div: float = THETA_DIV
    lookahead: int = LOOKAHEAD
    toy_iters: int = 2000
    toy_batch: int = 28
    toy_checkpoints: int = 5
    toy_eval_samples: int = 40
    out: str | None = None

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)

    def override(self, **kwargs) -> "RunConfig":
        return replace(self, **{k: v for k, v in kwargs.items() if v is not None})


def worker_count() -> int:
    raw = os.environ.get("LANEGRAPH_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def derive_seed(seed: int, layout_id: str, index: int, role: int) -> int:
    """Stable 63-bit seed for one sample (role 0 = train, 1 = eval)."""
    ss = np.random.SeedSequence([int(seed), zlib.crc32(layout_id.encode("utf-8")), int(index), int(role)])
    a, b = ss.generate_state(2)
    return int((int(a) << 31) ^ int(b)) & ((1 << 63) - 1)


def _write_json(path: Path, obj) -> None:
    _atomic_write_bytes(path, (json.dumps(obj, sort_keys=True, indent=1) + "\n").encode("utf-8"))


def _generate_one(args):
    layout, k, seed, out = args
    out = Path(out)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        # training sample: one random route of an augmented scene
        s_train = derive_seed(seed, layout.id, k, 0)
        aug_seed, route_seed = np.random.SeedSequence(s_train).generate_state(2)
        routes = enumerate_routes(layout)
        route = routes[int(np.random.default_rng(int(route_seed)).integers(len(routes)))]
        sample = make_sample(layout, route, sample_params(int(aug_seed)))
        d = out / "train" / layout.id / f"{k:03d}"
        d.mkdir(parents=True, exist_ok=True)
        write_tensor(sample.input, d / "input.lgt")
        write_tensor(sample.label, d / "label.lgt")
        _write_json(d / "meta.json", {"layout": layout.id, "family": layout.family, "seed": s_train,
                                      "augment_seed": int(aug_seed), "route": list(sample.route),
                                      "entry_cell": list(sample.entry_cell), "exit_cell": list(sample.exit_cell)})

        # evaluation sample: all routes superimposed
        s_eval = derive_seed(seed, layout.id, k, 1)
        params = sample_params(s_eval)
        bundle, graph = make_eval_label(layout, params=params)
        d = out / "eval" / layout.id / f"{k:03d}"
        d.mkdir(parents=True, exist_ok=True)
        write_tensor(rasterize_scene(augment_layout(layout, params)), d / "input.lgt")
        write_tensor(eval_label_tensor(bundle), d / "label.lgt")
        write_tensor(bundle.to_map(), d / "affordance.lgt")
        write_tensor(bundle.direction.to_map(), d / "direction.lgt")
        write_graph(graph, d / "graph.json")
        _write_json(d / "meta.json", {"layout": layout.id, "family": layout.family, "seed": s_eval})
    return layout.id, k


def generate_dataset(cfg: RunConfig, out) -> dict:
    """Write ``train/`` and ``eval/`` sample trees; returns counts per split."""
    layouts = load_library(cfg.library, cfg.family)
    out = Path(out)
    jobs = [(layout, k, cfg.seed, str(out)) for layout in layouts for k in range(cfg.samples)]
    _run(_generate_one, jobs)
    _write_json(out / "dataset.json", {"layouts": [l.id for l in layouts], "family": cfg.family,
                                       "samples": cfg.samples, "seed": cfg.seed})
    return {"layouts": len(layouts), "train": len(jobs), "eval": len(jobs)}


def _run(fn, jobs):
    n = min(worker_count(), max(len(jobs), 1))
    if n <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, jobs))


def load_bundle(sample_dir) -> AffordanceBundle:
    d = Path(sample_dir)
    return AffordanceBundle.from_maps(read_tensor(d / "affordance.lgt"), read_tensor(d / "direction.lgt"))


def extract(bundle: AffordanceBundle, cfg: RunConfig, noise_seed: int = 0) -> tuple[LaneGraph, AffordanceBundle]:
    if cfg.noise_flip > 0 or cfg.noise_dir_sigma > 0:
        bundle = inject_noise(bundle, cfg.noise_flip, cfg.noise_dir_sigma, noise_seed)
    graph = generate_graph(bundle, cfg.delta_theta, cfg.theta_div, cfg.lookahead)
    return graph, bundle


def evaluate_sample(sample_dir, cfg: RunConfig) -> tuple[EvalReport, LaneGraph, dict]:
    d = Path(sample_dir)
    meta = json.loads((d / "meta.json").read_text(encoding="utf-8"))
    clean = load_bundle(d)
    label = read_tensor(d / "label.lgt")
    ref = read_graph(d / "graph.json")
    graph, pred = extract(clean, cfg, int(meta["seed"]))
    points = GridMap(np.maximum(pred.entry.data[0], pred.exit.data[0]))
    lane_mask = (label.data[0] > 0.5) & clean.direction.defined()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        report = EvalReport(
            acc_pos={"lane": acc_pos(pred.lane, GridMap(label.data[0])), "points": acc_pos(points, GridMap(label.data[3]))},
            l1_neg={"lane": l1_neg(pred.lane, GridMap(label.data[0])), "points": l1_neg(points, GridMap(label.data[3]))},
            d_kl=eval_kl(pred.direction, clean.direction, lane_mask),
        )
    report.graph_missing, report.graph_erroneous = graph_diff(graph, ref)
    report.violations = validate_graph(graph)
    return report, graph, meta


def _eval_job(args):
    sample_dir, cfg = args
    try:
        report, graph, meta = evaluate_sample(sample_dir, cfg)
    except (OSError, ValueError, KeyError) as exc:
        return sample_dir, None, None, None, f"{type(exc).__name__}: {exc}"
    return sample_dir, report, graph, meta, None


def eval_sample_dirs(dataset) -> list[Path]:
    root = Path(dataset) / "eval"
    if not root.is_dir():
        return []
    return sorted(p for p in root.glob("*/*") if p.is_dir())


def evaluate_dataset(dataset, cfg: RunConfig, out) -> dict:
    """Extract and score every eval sample; writes per-sample JSON, graphs and a CSV summary."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    dirs = eval_sample_dirs(dataset)
    results = _run(_eval_job, [(str(d), cfg) for d in dirs])
    rows, skipped = [], []
    rates: dict[str, list[int]] = {}
    total_violations = 0
    for sample_dir, report, graph, meta, err in results:
        d = Path(sample_dir)
        name = f"{d.parent.name}_{d.name}"
        if err is not None:
            skipped.append({"sample": name, "error": err})
            continue
        write_graph(graph, out / "graphs" / f"{name}.json")
        rep = report.to_dict()
        rep.update({"layout": meta["layout"], "family": meta["family"], "sample": d.name, "seed": meta["seed"]})
        _write_json(out / "reports" / f"{name}.json", rep)
        total_violations += len(report.violations)
        rates.setdefault(meta["family"], [0, 0])
        rates[meta["family"]][0] += int(report.error_free)
        rates[meta["family"]][1] += 1
        rows.append([meta["layout"], meta["family"], d.name, meta["seed"],
                     f"{report.acc_pos['lane']:.6f}", f"{report.acc_pos['points']:.6f}",
                     f"{report.l1_neg['lane']:.6f}", f"{report.l1_neg['points']:.6f}",
                     f"{report.d_kl:.6f}", report.graph_missing, report.graph_erroneous,
                     len(report.violations), int(report.error_free)])
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SUMMARY_FIELDS)
    writer.writerows(rows)
    _atomic_write_bytes(out / "summary.csv", buf.getvalue().encode("utf-8"))
    summary = {
        "samples": len(rows),
        "skipped": skipped,
        "violations": total_violations,
        "error_free": {fam: {"count": c, "total": n, "rate": c / n} for fam, (c, n) in sorted(rates.items())},
        "params": {"noise_flip": cfg.noise_flip, "noise_dir_sigma": cfg.noise_dir_sigma,
                   "delta_theta": cfg.delta_theta, "theta_div": cfg.theta_div, "lookahead": cfg.lookahead},
    }
    if not rows:
        summary["warning"] = "no evaluation samples found"
    _write_json(out / "summary.json", summary)
    return summary


class _DiskSample:
    """Minimal training-sample view read back from a dataset directory."""

    def __init__(self, d: Path):
        meta = json.loads((d / "meta.json").read_text(encoding="utf-8"))
        self.input = read_tensor(d / "input.lgt")
        self.label = read_tensor(d / "label.lgt")
        self.entry_cell = tuple(meta["entry_cell"])
        self.exit_cell = tuple(meta["exit_cell"])


def train_toy(dataset, cfg: RunConfig, out) -> dict:
    """Fit the per-pixel learner on ``train/`` samples, scoring on held-out ``eval/`` samples."""
    root = Path(dataset)
    train_dirs = sorted(p for p in (root / "train").glob("*/*") if p.is_dir())
    if not train_dirs:
        raise FileNotFoundError(f"no training samples under {root / 'train'}")
    samples = [_DiskSample(d) for d in train_dirs]
    eval_set = []
    for d in eval_sample_dirs(root)[: cfg.toy_eval_samples]:
        eval_set.append((read_tensor(d / "input.lgt"), GridMap(read_tensor(d / "label.lgt").data[0])))
    tcfg = ToyConfig(iters=cfg.toy_iters, batch=cfg.toy_batch, seed=cfg.seed, checkpoints=cfg.toy_checkpoints)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        model, curve = toy_train(samples, tcfg, eval_set)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    write_model(model, out / "model.json")
    _atomic_write_bytes(out / "curves.csv", curves_csv(curve).encode("utf-8"))
    return {"iters": cfg.toy_iters, "untrained": cfg.toy_iters == 0, "curve": [asdict(p) for p in curve]}


# ---------------------------------------------------------------------------
# SVG rendering

EDGE_COLORS = {"entry": "#1f4fd1", "intersection": "#d11f1f", "exit": "#1f9d3a", "lane": "#8a2be2"}
SCALE = 4


def _xy(i: float, j: float, h: int) -> tuple[float, float]:
    # column -> x, row -> y flipped so world y points up
    return (j + 0.5) * SCALE, (h - i - 0.5) * SCALE


def render_svg(bundle: AffordanceBundle | None, graph: LaneGraph | None, size: int = 128) -> str:
    """Static overlay of dense layers, direction modes and the lane graph."""
    h = w = size
    if bundle is not None:
        h, w = bundle.lane.height, bundle.lane.width
        if h > 128 or w > 128:
            raise ValueError("rendering is limited to 128x128 layers")
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w * SCALE}" height="{h * SCALE}" '
             f'viewBox="0 0 {w * SCALE} {h * SCALE}">',
             f'<rect x="0" y="0" width="{w * SCALE}" height="{h * SCALE}" fill="#000000"/>']
    if bundle is not None:
        lane = bundle.lane.data[0]
        parts.append('<g id="lane">')
        for i, j in zip(*np.nonzero(lane > 0)):
            v = int(round(float(lane[i, j]) * 160))
            x, y = _xy(i, j, h)
            parts.append(f'<rect x="{x - SCALE / 2:g}" y="{y - SCALE / 2:g}" width="{SCALE}" height="{SCALE}" '
                         f'fill="rgb({v},{v},{v})"/>')
        parts.append("</g>")
        for name, color, m in (("entry", "#ff0000", bundle.entry.data[0]), ("exit", "#0000ff", bundle.exit.data[0])):
            parts.append(f'<g id="{name}" fill="{color}">')
            for i, j in zip(*np.nonzero(m > 0)):
                x, y = _xy(i, j, h)
                parts.append(f'<rect x="{x - SCALE / 2:g}" y="{y - SCALE / 2:g}" width="{SCALE}" height="{SCALE}" '
                             f'fill-opacity="{float(m[i, j]) * 0.8:.3f}"/>')
            parts.append("</g>")
        d = bundle.direction
        parts.append('<g id="direction" stroke="#ffd000" stroke-width="0.6">')
        for i in range(0, h, 4):
            for j in range(0, w, 4):
                for wt, mu, _ in d.cell(i, j):
                    x, y = _xy(i, j, h)
                    dx, dy = math.cos(mu) * SCALE * 1.5, -math.sin(mu) * SCALE * 1.5
                    parts.append(f'<line x1="{x:.2f}" y1="{y:.2f}" x2="{x + dx:.2f}" y2="{y + dy:.2f}"/>')
        parts.append("</g>")
    if graph is not None:
        parts.append('<g id="edges" fill="none" stroke-width="1.5">')
        for e in graph.edges:
            pts = " ".join("{:.1f},{:.1f}".format(*_xy(i, j, h)) for i, j in e.geometry)
            parts.append(f'<polyline class="{e.kind}" stroke="{EDGE_COLORS.get(e.kind, "#ffffff")}" points="{pts}"/>')
        parts.append("</g>")
        parts.append('<g id="vertices" font-size="8" font-family="monospace">')
        for v in graph.vertices:
            x, y = _xy(v.cell[0], v.cell[1], h)
            parts.append(f'<circle cx="{x:.1f}" cy="{y:.1f}" r="3" fill="#ffffff" stroke="#000000"/>')
            parts.append(f'<text x="{x + 4:.1f}" y="{y - 4:.1f}" fill="#ffffff">{v.id}</text>')
        parts.append("</g>")
    parts.append("</svg>")
    return "\n".join(parts) + "\n"

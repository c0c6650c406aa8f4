"""Parametric road layouts, scene rasterization, routes and ground-truth lane graphs.

Every layout is built from *arms*: straight roads that radiate from the scene
center.  Each arm carries inbound lanes (towards the center) and outbound lanes
(away from it) with right-hand traffic.  Inbound lanes end at a stop radius,
outbound lanes start there, and every inbound lane is joined to every outbound
lane of every other arm by a connector lane (a circular-arc fillet).  Straight
roads, curves, forks, merges and n-way intersections are all arm sets.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .core import INPUT_SPEC, LABEL_SPEC, GridMap, GridSpec, heading
from .geometry import (
    corridor_mask,
    dash_polyline,
    forward_directions,
    offset_polyline,
    polyline_length,
    resample_polyline,
)
from .graphgen.graph import LaneGraph, PathSet, assemble_graph

LANE_WIDTH = 3.5
PORT_RADIUS = 24.0
SAMPLE_STEP = 0.25  # one input cell
MIN_ARM_SEPARATION = math.radians(50.0)
MARKING_HALF_WIDTH = 0.15
DASH_ON, DASH_OFF = 2.0, 2.0
ROUTE_GAP_TOLERANCE = 0.5
MIN_PORT_SPACING = 3.0  # 6 label cells


class LayoutError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class LaneSpec:
    id: str
    centerline: np.ndarray
    width: float = LANE_WIDTH
    entry_port: str | None = None
    exit_port: str | None = None

    def __post_init__(self):
        pts = np.asarray(self.centerline, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise LayoutError(f"lane {self.id}: centerline needs at least two 2-D points")
        if np.any(np.linalg.norm(np.diff(pts, axis=0), axis=1) <= 1e-12):
            raise LayoutError(f"lane {self.id}: consecutive centerline points coincide")
        pts.setflags(write=False)
        object.__setattr__(self, "centerline", pts)


@dataclass(frozen=True)
class Port:
    id: str
    kind: str  # "entry" | "exit"
    point: tuple[float, float]
    heading: float
    arm: int = -1


@dataclass(frozen=True)
class Route:
    entry: str
    exit: str
    lanes: tuple[str, ...]


@dataclass(frozen=True)
class RoutePath:
    entry: str
    exit: str
    points: np.ndarray
    directions: np.ndarray


@dataclass(frozen=True)
class Marking:
    points: np.ndarray
    dashed: bool


@dataclass(frozen=True, eq=False)
class RoadLayout:
    id: str
    lanes: tuple[LaneSpec, ...]
    ports: tuple[Port, ...]
    connectivity: tuple[Route, ...]
    family: str = "train"
    markings: tuple[Marking, ...] = ()
    config: dict = field(default_factory=dict)

    def lane(self, lane_id: str) -> LaneSpec:
        for lane in self.lanes:
            if lane.id == lane_id:
                return lane
        raise KeyError(lane_id)

    def port(self, port_id: str) -> Port:
        for p in self.ports:
            if p.id == port_id:
                return p
        raise KeyError(port_id)

    @property
    def entries(self) -> list[Port]:
        return [p for p in self.ports if p.kind == "entry"]

    @property
    def exits(self) -> list[Port]:
        return [p for p in self.ports if p.kind == "exit"]

    def validate(self) -> None:
        ports = {p.id: p for p in self.ports}
        lanes = {lane.id: lane for lane in self.lanes}
        for r in self.connectivity:
            if r.entry not in ports or ports[r.entry].kind != "entry":
                raise LayoutError(f"route {r.entry}->{r.exit}: unknown entry port")
            if r.exit not in ports or ports[r.exit].kind != "exit":
                raise LayoutError(f"route {r.entry}->{r.exit}: unknown exit port")
            for a, b in zip(r.lanes, r.lanes[1:]):
                gap = np.linalg.norm(lanes[a].centerline[-1] - lanes[b].centerline[0])
                if gap >= ROUTE_GAP_TOLERANCE:
                    raise LayoutError(f"route {r.entry}->{r.exit}: gap of {gap:.2f} m between {a} and {b}")


# ---------------------------------------------------------------------------
# construction


def _unit(phi: float) -> np.ndarray:
    return np.array([math.cos(phi), math.sin(phi)])


def _cross(a, b) -> float:
    return float(a[0] * b[1] - a[1] * b[0])


def _bezier(p0, p1, p2, p3, step) -> np.ndarray:
    n = max(8, int(math.ceil(4 * np.linalg.norm(p3 - p0) / step)))
    t = np.linspace(0.0, 1.0, n + 1)[:, None]
    return ((1 - t) ** 3) * p0 + 3 * ((1 - t) ** 2) * t * p1 + 3 * (1 - t) * t * t * p2 + t ** 3 * p3


def fillet_connector(start, d_in, end, d_out, step: float = SAMPLE_STEP) -> np.ndarray:
    """Curve from ``start`` (heading ``d_in``) to ``end`` (heading ``d_out``).

    Where the two lane lines meet ahead of both endpoints the curve is a
    straight run, a circular arc tangent to both lines, and another straight
    run.  Collinear lanes get a segment; other configurations fall back to a
    cubic Bezier with tangent-aligned handles.
    """
    start = np.asarray(start, float)
    end = np.asarray(end, float)
    d_in = np.asarray(d_in, float) / np.linalg.norm(d_in)
    d_out = np.asarray(d_out, float) / np.linalg.norm(d_out)
    chord = end - start
    dist = float(np.linalg.norm(chord))
    cr = _cross(d_in, d_out)
    if abs(cr) < 1e-9:
        lateral = abs(_cross(d_in, chord))
        if np.dot(d_in, d_out) > 0 and lateral < 1e-6 and np.dot(chord, d_in) > 0:
            return resample_polyline(np.stack([start, end]), step)
        h = dist / 3.0
        return resample_polyline(_bezier(start, start + h * d_in, end - h * d_out, end, step), step)
    # start + t*d_in == end - s*d_out
    mat = np.array([[d_in[0], d_out[0]], [d_in[1], d_out[1]]])
    t, s = np.linalg.solve(mat, chord)
    if t <= 1e-6 or s <= 1e-6:
        h = dist / 3.0
        return resample_polyline(_bezier(start, start + h * d_in, end - h * d_out, end, step), step)
    corner = start + t * d_in
    tan_len = min(t, s)
    gamma = math.acos(max(-1.0, min(1.0, float(np.dot(d_in, d_out)))))
    radius = tan_len / math.tan(gamma / 2.0)
    a1 = corner - tan_len * d_in
    b1 = corner + tan_len * d_out
    side = 1.0 if cr > 0 else -1.0  # left turn: center on the left
    normal = side * np.array([-d_in[1], d_in[0]])
    center = a1 + radius * normal
    phi0 = math.atan2(a1[1] - center[1], a1[0] - center[0])
    n_arc = max(4, int(math.ceil(radius * gamma / (step / 4))))
    phis = phi0 + side * np.linspace(0.0, gamma, n_arc + 1)
    arc = center + radius * np.stack([np.cos(phis), np.sin(phis)], axis=1)
    arc[0], arc[-1] = a1, b1
    pts = [start] if np.linalg.norm(a1 - start) > 1e-9 else []
    pts.extend(arc)
    if np.linalg.norm(end - b1) > 1e-9:
        pts.append(end)
    return resample_polyline(np.asarray(pts), step)


def _auto_stop_radius(angles, half_widths) -> float:
    order = np.argsort(angles)
    a = np.asarray(angles)[order]
    h = np.asarray(half_widths)[order]
    need = max(h) + 1.0
    for k in range(len(a)):
        k2 = (k + 1) % len(a)
        sep = (a[k2] - a[k]) % (2 * math.pi)
        if len(a) == 1:
            break
        need = max(need, (h[k] + h[k2]) / math.sin(min(sep, math.pi / 2)) + 1.0)
    return need


def _arms_layout(layout_id: str, arms, family: str, lane_width: float, port_radius: float,
                 stop_radius: float | None, config: dict) -> RoadLayout:
    if len(arms) < 2:
        raise LayoutError("a layout needs at least two arms")
    angles = []
    for k, arm in enumerate(arms):
        n_in, n_out = int(arm.get("lanes_in", 1)), int(arm.get("lanes_out", 1))
        if n_in < 0 or n_out < 0:
            raise LayoutError(f"arm {k}: negative lane count")
        if n_in + n_out == 0:
            raise LayoutError(f"arm {k}: 0 lanes")
        angles.append(math.radians(float(arm["angle"])) % (2 * math.pi))
    srt = sorted(angles)
    for k in range(len(srt)):
        sep = (srt[(k + 1) % len(srt)] - srt[k]) % (2 * math.pi)
        if sep < MIN_ARM_SEPARATION:
            raise LayoutError(
                f"arm angle collision: arms at {math.degrees(srt[k]):.1f} and "
                f"{math.degrees(srt[(k + 1) % len(srt)]):.1f} deg are closer than 50 deg")
    half_widths = []
    for arm in arms:
        n_in, n_out = int(arm.get("lanes_in", 1)), int(arm.get("lanes_out", 1))
        half_widths.append(max(n_in, n_out) * lane_width if n_in and n_out else (n_in + n_out) * lane_width / 2)
    if stop_radius is None:
        stop_radius = _auto_stop_radius(angles, half_widths)
    if stop_radius > port_radius - 4.0:
        raise LayoutError(f"arms too wide: stop radius {stop_radius:.1f} m leaves no room before the ports")

    lanes: list[LaneSpec] = []
    ports: list[Port] = []
    inbound: list[tuple[int, str, np.ndarray, np.ndarray]] = []
    outbound: list[tuple[int, str, np.ndarray, np.ndarray]] = []
    markings: list[Marking] = []
    for k, (arm, phi) in enumerate(zip(arms, angles)):
        n_in, n_out = int(arm.get("lanes_in", 1)), int(arm.get("lanes_out", 1))
        u = _unit(phi)
        n = np.array([-u[1], u[0]])
        # lateral offsets along n; one-way arms are centered on the axis
        if n_in and n_out:
            off_in = [(q + 0.5) * lane_width for q in range(n_in)]
            off_out = [-(q + 0.5) * lane_width for q in range(n_out)]
        else:
            off_in = [(q + 0.5 - n_in / 2) * lane_width for q in range(n_in)]
            off_out = [-(q + 0.5 - n_out / 2) * lane_width for q in range(n_out)]
        for q, off in enumerate(off_in):
            lid = f"a{k}_in{q}"
            p0 = port_radius * u + off * n
            p1 = stop_radius * u + off * n
            lanes.append(LaneSpec(lid, resample_polyline(np.stack([p0, p1]), SAMPLE_STEP), lane_width, entry_port=lid))
            ports.append(Port(lid, "entry", (float(p0[0]), float(p0[1])), float(heading(-u[0], -u[1])), k))
            inbound.append((k, lid, p1, -u))
        for q, off in enumerate(off_out):
            lid = f"a{k}_out{q}"
            p0 = stop_radius * u + off * n
            p1 = port_radius * u + off * n
            lanes.append(LaneSpec(lid, resample_polyline(np.stack([p0, p1]), SAMPLE_STEP), lane_width, exit_port=lid))
            ports.append(Port(lid, "exit", (float(p1[0]), float(p1[1])), float(heading(u[0], u[1])), k))
            outbound.append((k, lid, p0, u))
        markings.extend(_arm_markings(u, n, off_in, off_out, lane_width, stop_radius, port_radius))

    routes: list[Route] = []
    for ka, in_id, p_in, d_in in inbound:
        for kb, out_id, p_out, d_out in outbound:
            if ka == kb:
                continue  # no U-turns
            cid = f"c_{in_id}_{out_id}"
            pts = fillet_connector(p_in, d_in, p_out, d_out)
            lanes.append(LaneSpec(cid, pts, lane_width))
            routes.append(Route(in_id, out_id, (in_id, cid, out_id)))
    if not routes:
        raise LayoutError("layout has no legal entry->exit route")
    if len(arms) == 2:
        # plain roads: continue edge lines through the connectors
        for lane in lanes:
            if lane.id.startswith("c_"):
                for side in (1.0, -1.0):
                    markings.append(Marking(offset_polyline(lane.centerline, side * lane_width / 2), False))

    pts = np.array([p.point for p in ports])
    for a in range(len(ports)):
        for b in range(a + 1, len(ports)):
            if ports[a].kind == ports[b].kind and np.linalg.norm(pts[a] - pts[b]) < MIN_PORT_SPACING:
                raise LayoutError(f"ports {ports[a].id} and {ports[b].id} are closer than {MIN_PORT_SPACING} m")
    layout = RoadLayout(layout_id, tuple(lanes), tuple(ports), tuple(routes), family, tuple(markings), config)
    layout.validate()
    return layout


def _arm_markings(u, n, off_in, off_out, width, r0, r1) -> list[Marking]:
    """Edge lines and separators along one arm between stop line and port."""
    offs = sorted([(o, "in") for o in off_in] + [(o, "out") for o in off_out])
    out: list[Marking] = []
    if not offs:
        return out
    lines = [offs[0][0] - width / 2]
    kinds = ["solid"]
    for (oa, da), (ob, db) in zip(offs, offs[1:]):
        lines.append((oa + ob) / 2)
        kinds.append("solid" if da != db else "dashed")
    lines.append(offs[-1][0] + width / 2)
    kinds.append("solid")
    for off, kind in zip(lines, kinds):
        seg = np.stack([r0 * u + off * n, r1 * u + off * n])
        out.append(Marking(seg, kind == "dashed"))
    return out


def build_layout(config: dict) -> RoadLayout:
    """Build a layout from ``{"id", "generator", "params", "family"}``.

    Generators: ``straight`` (optionally ``one_way``), ``curve`` (``turn`` in
    degrees), ``n_way`` (``arms`` count or ``angles``, ``lanes`` per
    direction, optional ``one_way_in``/``one_way_out`` arm indices),
    ``fork``/``merge`` (``branch_angles``) and ``arms`` (explicit arm list).
    """
    gen = config.get("generator")
    params = dict(config.get("params", {}))
    family = config.get("family", "train")
    if family not in ("train", "test"):
        raise LayoutError(f"unknown family {family!r}")
    layout_id = config.get("id", gen)
    width = float(params.get("lane_width", LANE_WIDTH))
    port_radius = float(params.get("port_radius", PORT_RADIUS))
    stop_radius = params.get("stop_radius")
    base = float(params.get("heading", 0.0))
    if width <= 0:
        raise LayoutError("lane width must be positive")

    if gen == "straight":
        lanes = int(params.get("lanes", 1))
        if lanes != 1:
            raise LayoutError("straight roads support exactly 1 lane per direction")
        if params.get("one_way", False):
            arms = [{"angle": base + 180.0, "lanes_in": 1, "lanes_out": 0},
                    {"angle": base, "lanes_in": 0, "lanes_out": 1}]
        else:
            arms = [{"angle": base + 180.0, "lanes_in": 1, "lanes_out": 1},
                    {"angle": base, "lanes_in": 1, "lanes_out": 1}]
    elif gen == "curve":
        turn = float(params.get("turn", 60.0))
        if not 0.0 < abs(turn) <= 130.0:
            raise LayoutError("curve turn must be within (0, 130] degrees")
        arms = [{"angle": base + 180.0, "lanes_in": 1, "lanes_out": 1},
                {"angle": base + turn, "lanes_in": 1, "lanes_out": 1}]
    elif gen == "n_way":
        if "angles" in params:
            angles = [float(a) for a in params["angles"]]
        else:
            count = int(params.get("arms", 4))
            if count < 3:
                raise LayoutError("n_way needs at least 3 arms")
            angles = [base + 360.0 * k / count for k in range(count)]
        lanes = params.get("lanes", 1)
        lanes = [int(lanes)] * len(angles) if np.isscalar(lanes) else [int(v) for v in lanes]
        if len(lanes) != len(angles):
            raise LayoutError("lanes list must match the number of arms")
        if any(v <= 0 for v in lanes):
            raise LayoutError("0 lanes on an arm")
        one_in = set(params.get("one_way_in", []))
        one_out = set(params.get("one_way_out", []))
        arms = []
        for k, (a, nl) in enumerate(zip(angles, lanes)):
            arms.append({"angle": a, "lanes_in": 0 if k in one_out else nl,
                         "lanes_out": 0 if k in one_in else nl})
    elif gen in ("fork", "merge"):
        branches = [float(a) for a in params.get("branch_angles", [-30.0, 30.0])]
        lanes = int(params.get("lanes", 1))
        if lanes <= 0:
            raise LayoutError("0 lanes")
        trunk = base + 180.0
        if gen == "fork":
            arms = [{"angle": trunk, "lanes_in": lanes, "lanes_out": 0}]
            arms += [{"angle": base + b, "lanes_in": 0, "lanes_out": lanes} for b in branches]
        else:
            arms = [{"angle": base + b, "lanes_in": lanes, "lanes_out": 0} for b in branches]
            arms += [{"angle": trunk, "lanes_in": 0, "lanes_out": lanes}]
    elif gen == "arms":
        arms = [dict(a) for a in params["arms"]]
    else:
        raise LayoutError(f"unknown generator {gen!r}")
    return _arms_layout(layout_id, arms, family, width, port_radius,
                        None if stop_radius is None else float(stop_radius), dict(config))


def library_dir() -> Path:
    return Path(__file__).parent / "layouts"


def load_library(path=None, family: str = "all") -> list[RoadLayout]:
    """Load every ``*.json`` layout config in a directory, sorted by file name."""
    root = Path(path) if path is not None else library_dir()
    if not root.is_dir():
        raise FileNotFoundError(f"layout library not found: {root}")
    layouts = []
    for f in sorted(root.glob("*.json")):
        cfg = json.loads(f.read_text(encoding="utf-8"))
        cfg.setdefault("id", f.stem)
        layout = build_layout(cfg)
        if family in ("all", layout.family):
            layouts.append(layout)
    return layouts


# ---------------------------------------------------------------------------
# rasterization and routes


def _occlusion_mask(regions, spec: GridSpec) -> np.ndarray:
    x, y = spec.cell_centers()
    mask = np.zeros(x.shape, dtype=bool)
    for reg in regions or ():
        if "circle" in reg:
            cx, cy, r = reg["circle"]
            mask |= (x - cx) ** 2 + (y - cy) ** 2 <= r * r
        elif "box" in reg:
            x0, y0, x1, y1 = reg["box"]
            mask |= (x >= x0) & (x <= x1) & (y >= y0) & (y <= y1)
        else:
            raise ValueError(f"unsupported occlusion region {reg!r}")
    return mask


def rasterize_scene(layout: RoadLayout, spec: GridSpec = INPUT_SPEC, occlusion=None) -> GridMap:
    """Two-layer observation grid: drivable region and road markings."""
    n = spec.cells_per_side
    drivable = np.zeros((n, n), dtype=bool)
    for lane in layout.lanes:
        drivable |= corridor_mask(lane.centerline, spec, lane.width / 2)
    marks = np.zeros((n, n), dtype=bool)
    for mk in layout.markings:
        pieces = dash_polyline(mk.points, DASH_ON, DASH_OFF) if mk.dashed else [mk.points]
        for piece in pieces:
            marks |= corridor_mask(piece, spec, MARKING_HALF_WIDTH)
    data = np.stack([drivable, marks]).astype(np.float64)
    if occlusion:
        occ = _occlusion_mask(occlusion, spec)
        data[:, occ] = 0.5
    return GridMap(data)


def enumerate_routes(layout: RoadLayout) -> list[RoutePath]:
    """One polyline per connectivity pair with unit forward directions."""
    lanes = {lane.id: lane for lane in layout.lanes}
    out = []
    for r in layout.connectivity:
        pieces = [lanes[r.lanes[0]].centerline]
        for a, b in zip(r.lanes, r.lanes[1:]):
            prev, nxt = lanes[a].centerline, lanes[b].centerline
            gap = float(np.linalg.norm(prev[-1] - nxt[0]))
            if gap >= ROUTE_GAP_TOLERANCE:
                raise LayoutError(f"route {r.entry}->{r.exit} is discontinuous between {a} and {b} ({gap:.2f} m)")
            pieces.append(nxt[1:] if gap < 1e-9 else nxt)
        pts = np.vstack(pieces)
        keep = np.concatenate([[True], np.linalg.norm(np.diff(pts, axis=0), axis=1) > 1e-12])
        pts = pts[keep]
        out.append(RoutePath(r.entry, r.exit, pts, forward_directions(pts)))
    return out


# ---------------------------------------------------------------------------
# ground-truth graph


def _to_cells(points, spec: GridSpec) -> list[tuple[int, int]]:
    cells = spec.to_cell(points)
    cells = np.clip(cells, 0, spec.cells_per_side - 1)
    out: list[tuple[int, int]] = []
    for i, j in cells:
        c = (int(i), int(j))
        if not out or out[-1] != c:
            out.append(c)
    return out


def _lane_points(lanes: dict[str, LaneSpec], ids) -> np.ndarray:
    pts = [lanes[ids[0]].centerline]
    for lid in ids[1:]:
        pts.append(lanes[lid].centerline[1:])
    return np.vstack(pts)


def ground_truth_graph(layout: RoadLayout, spec: GridSpec = LABEL_SPEC) -> LaneGraph:
    """Reference lane graph built from the layout's connectivity.

    The fork of an entry is the end of the lane prefix shared by all of its
    routes, the merge of an exit the start of the lane suffix shared by all
    routes into it.
    """
    lanes = {lane.id: lane for lane in layout.lanes}
    entries = layout.entries
    exits = layout.exits
    e_index = {p.id: k for k, p in enumerate(entries)}
    x_index = {p.id: k for k, p in enumerate(exits)}
    paths = PathSet()
    con_lanes: dict[tuple[int, int], tuple[str, ...]] = {}
    for p in entries:
        routes = [r for r in layout.connectivity if r.entry == p.id]
        if not routes:
            continue
        e = e_index[p.id]
        if len(routes) >= 2:
            seqs = [r.lanes for r in routes]
            common = 0
            while all(len(s) > common + 1 and s[common] == seqs[0][common] for s in seqs):
                common += 1
            if common == 0:
                raise LayoutError(f"routes from {p.id} share no lane")
            paths.entry[e] = _to_cells(_lane_points(lanes, seqs[0][:common]), spec)
            for r in routes:
                con_lanes[(e, x_index[r.exit])] = r.lanes[common - 1:]
        else:
            con_lanes[(e, x_index[routes[0].exit])] = routes[0].lanes
    for (e, x), seq in sorted(con_lanes.items()):
        if e in paths.entry:
            # continuation starts at the end of the shared prefix lane
            pts = np.vstack([lanes[seq[0]].centerline[-1:], _lane_points(lanes, seq[1:])])
        else:
            pts = _lane_points(lanes, seq)
        paths.con.append((e, x, _to_cells(pts, spec)))
    for p in exits:
        x = x_index[p.id]
        incoming = [(e, seq) for (e, xx), seq in sorted(con_lanes.items()) if xx == x]
        if len(incoming) < 2:
            continue
        seqs = [seq for _, seq in incoming]
        common = 0
        while all(len(s) > common + 1 and s[-1 - common] == seqs[0][-1 - common] for s in seqs):
            common += 1
        if common == 0:
            raise LayoutError(f"routes into {p.id} share no lane")
        tail = seqs[0][len(seqs[0]) - common:]
        paths.exit[x] = _to_cells(_lane_points(lanes, tail), spec)
        for e, seq in incoming:
            head = seq[:len(seq) - common]
            if e in paths.entry:
                head = head[1:]
                pts = np.vstack([lanes[seq[0]].centerline[-1:], _lane_points(lanes, head)])
            else:
                pts = _lane_points(lanes, head)
            pts = np.vstack([pts, lanes[tail[0]].centerline[:1]])
            paths.inter[(e, x)] = _to_cells(pts, spec)
    entry_cells = [_to_cells(np.array([p.point]), spec)[0] for p in entries]
    exit_cells = [_to_cells(np.array([p.point]), spec)[0] for p in exits]
    return assemble_graph(entry_cells, exit_cells, paths)


def transform_layout(layout: RoadLayout, fn) -> RoadLayout:
    """Apply a point map ``fn((n, 2)) -> (n, 2)`` to all geometry; headings follow the lanes."""
    lanes = []
    for lane in layout.lanes:
        pts = fn(lane.centerline)
        keep = np.concatenate([[True], np.linalg.norm(np.diff(pts, axis=0), axis=1) > 1e-12])
        lanes.append(replace(lane, centerline=pts[keep]))
    by_port = {}
    for lane in lanes:
        if lane.entry_port:
            d = lane.centerline[1] - lane.centerline[0]
            by_port[lane.entry_port] = (lane.centerline[0], float(heading(d[0], d[1])))
        if lane.exit_port:
            d = lane.centerline[-1] - lane.centerline[-2]
            by_port[lane.exit_port] = (lane.centerline[-1], float(heading(d[0], d[1])))
    ports = []
    for p in layout.ports:
        if p.id in by_port:
            pt, hd = by_port[p.id]
            ports.append(replace(p, point=(float(pt[0]), float(pt[1])), heading=hd))
        else:
            q = fn(np.array([p.point]))[0]
            ports.append(replace(p, point=(float(q[0]), float(q[1]))))
    marks = tuple(replace(m, points=fn(m.points)) for m in layout.markings)
    return replace(layout, lanes=tuple(lanes), ports=tuple(ports), markings=marks)


def route_length(route: RoutePath) -> float:
    return polyline_length(route.points)

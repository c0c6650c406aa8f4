import math

import numpy as np
import pytest

from lanegraph.core import INPUT_SPEC, LABEL_SPEC, angle_diff
from lanegraph.graphgen.graph import validate_graph
from lanegraph.scene import (LaneSpec, LayoutError, RoadLayout, build_layout, enumerate_routes,
                             ground_truth_graph, load_library, rasterize_scene)


def _arm(layout, port_id):
    return layout.port(port_id).arm


def test_four_way_ports_and_connectivity(four_way):
    assert len(four_way.entries) == 4 and len(four_way.exits) == 4
    assert len(four_way.connectivity) == 12
    for r in four_way.connectivity:
        assert _arm(four_way, r.entry) != _arm(four_way, r.exit)
    # oracle: all entry/exit pairs minus the same-arm ones
    pairs = {(e.id, x.id) for e in four_way.entries for x in four_way.exits if e.arm != x.arm}
    assert pairs == {(r.entry, r.exit) for r in four_way.connectivity}


def test_straight_two_way(straight):
    assert len(straight.entries) == 2 and len(straight.exits) == 2
    assert len(straight.connectivity) == 2


def test_fork_connectivity(fork):
    assert len(fork.entries) == 1 and len(fork.exits) == 2
    assert len(fork.connectivity) == 2
    a, b = fork.connectivity
    assert a.lanes[0] == b.lanes[0]


@pytest.mark.parametrize("config,msg", [
    ({"generator": "n_way", "params": {"arms": 4, "lanes": 0}}, "0 lanes"),
    ({"generator": "n_way", "params": {"angles": [0, 10, 180]}}, "collision"),
    ({"generator": "warp_drive"}, "unknown generator"),
    ({"generator": "straight", "params": {"lanes": 2}}, "exactly 1 lane"),
    ({"generator": "straight", "params": {"lane_width": 0}}, "width"),
])
def test_invalid_layouts(config, msg):
    with pytest.raises(LayoutError, match=msg):
        build_layout(config)


def test_library_has_both_families():
    lib = load_library()
    train = [l for l in lib if l.family == "train"]
    test = [l for l in lib if l.family == "test"]
    assert len(train) >= 12 and len(test) >= 8
    assert [l.id for l in load_library(family="test")] == [l.id for l in test]


def test_missing_library(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_library(tmp_path / "nope")


def test_empty_layout_rasterizes_to_zeros():
    m = rasterize_scene(RoadLayout("empty", (), (), ()))
    assert m.shape == (2, 256, 256)
    assert not m.data.any()


def _segment_distance(px, py, a, b):
    d = b - a
    t = np.clip(((px - a[0]) * d[0] + (py - a[1]) * d[1]) / (d @ d), 0.0, 1.0)
    return np.hypot(px - (a[0] + t * d[0]), py - (a[1] + t * d[1]))


def test_straight_band_matches_point_in_corridor_oracle():
    a, b = np.array([-20.0, 0.0]), np.array([20.0, 0.0])
    lane = LaneSpec("l", np.array([a, b]), width=3.5)
    m = rasterize_scene(RoadLayout("one", (lane,), (), ()))
    x, y = INPUT_SPEC.cell_centers()
    oracle = _segment_distance(x, y, a, b) <= 1.75
    drivable = m.data[0] > 0.5
    assert np.array_equal(drivable, oracle)
    # a 14-cell band: every column strictly inside the segment holds exactly 14 cells
    inner = (x[0] > -19.0) & (x[0] < 19.0)
    assert set(drivable[:, inner].sum(axis=0)) == {14}
    # between the end points the band is exactly length x 14; round caps add the rest
    along = (x >= -20.0) & (x <= 20.0)
    assert (drivable & along).sum() == 160 * 14


def test_full_occlusion_is_unknown(four_way):
    m = rasterize_scene(four_way, occlusion=[{"box": [-40, -40, 40, 40]}])
    assert np.all(m.data == 0.5)


def test_observation_values_are_ternary(four_way):
    m = rasterize_scene(four_way, occlusion=[{"circle": [0.0, 0.0, 5.0]}])
    assert set(np.unique(m.data)) <= {0.0, 0.5, 1.0}


def test_markings_present_on_two_way_road(straight):
    m = rasterize_scene(straight)
    marks = m.data[1] > 0.5
    assert marks.any()
    assert np.all(m.data[0][marks] >= 0) and marks.sum() < (m.data[0] > 0.5).sum()


def test_straight_routes_antiparallel(straight):
    routes = enumerate_routes(straight)
    assert len(routes) == 2
    d0 = routes[0].directions[len(routes[0].directions) // 2]
    d1 = routes[1].directions[len(routes[1].directions) // 2]
    assert np.dot(d0, d1) == pytest.approx(-1.0, abs=1e-9)


def test_route_directions_are_unit(four_way):
    for r in enumerate_routes(four_way):
        assert np.allclose(np.linalg.norm(r.directions, axis=1), 1.0)


def test_four_way_has_12_routes(four_way):
    assert len(enumerate_routes(four_way)) == len(four_way.connectivity) == 12


def test_fork_routes_share_prefix(fork):
    a, b = enumerate_routes(fork)
    lane0 = fork.lane(fork.connectivity[0].lanes[0])
    n = len(lane0.centerline)
    assert np.array_equal(a.points[:n], b.points[:n])
    assert not np.array_equal(a.points[-1], b.points[-1])


def test_discontinuous_route_is_rejected(four_way):
    from dataclasses import replace
    lanes = list(four_way.lanes)
    conn = four_way.connectivity[0]
    k = next(i for i, l in enumerate(lanes) if l.id == conn.lanes[1])
    lanes[k] = replace(lanes[k], centerline=lanes[k].centerline + 3.0)
    broken = replace(four_way, lanes=tuple(lanes))
    with pytest.raises(LayoutError, match=conn.entry):
        enumerate_routes(broken)


def test_routes_stay_on_drivable_region(library):
    for layout in library:
        m = rasterize_scene(layout).data[0]
        for r in enumerate_routes(layout):
            cells = INPUT_SPEC.to_cell(r.points)
            inside = (cells >= 0).all(axis=1) & (cells < 256).all(axis=1)
            on = m[cells[inside, 0], cells[inside, 1]] > 0.5
            assert on.mean() >= 0.99, layout.id


def test_straight_graph(straight):
    g = ground_truth_graph(straight)
    assert len(g.vertices) == 4
    assert [e.kind for e in g.edges] == ["lane", "lane"]
    assert not g.by_kind("fork") and not g.by_kind("merge")


def test_four_way_graph(four_way):
    g = ground_truth_graph(four_way)
    assert len(g.by_kind("fork")) == 4 and len(g.by_kind("merge")) == 4
    counts = g.edge_kind_counts()
    assert (counts["entry"], counts["intersection"], counts["exit"], counts.get("lane", 0)) == (4, 12, 4, 0)


def test_fork_graph_is_depth_two(fork):
    g = ground_truth_graph(fork)
    kinds = sorted((g.vertex(e.src).kind, g.vertex(e.dst).kind) for e in g.edges)
    assert kinds == [("entry", "fork"), ("fork", "exit"), ("fork", "exit")]
    assert all(len(seq) == 2 for seqs in g.routes().values() for seq in seqs)


def test_library_graphs_are_valid(library):
    for layout in library:
        g = ground_truth_graph(layout)
        assert validate_graph(g) == [], layout.id
        out_deg = {v.id: len(es) for v, es in ((g.vertex(k), v) for k, v in g.out_edges().items())}
        in_deg = {v.id: len(es) for v, es in ((g.vertex(k), v) for k, v in g.in_edges().items())}
        for v in g.by_kind("fork"):
            assert out_deg[v.id] >= 2
        for v in g.by_kind("merge"):
            assert in_deg[v.id] >= 2
        for seqs in g.routes().values():
            assert all(1 <= len(s) <= 3 for s in seqs)


def test_ports_spaced_apart(library):
    # blobs of radius 3 need ports at least 6 label cells apart
    for layout in library:
        pts = np.array([p.point for p in layout.ports])
        d = np.hypot(*(pts[:, None] - pts[None]).transpose(2, 0, 1))
        np.fill_diagonal(d, np.inf)
        assert d.min() / LABEL_SPEC.meters_per_cell >= 6.0, layout.id


def test_port_headings_point_along_lanes(four_way):
    for lane in four_way.lanes:
        if lane.entry_port:
            d = lane.centerline[1] - lane.centerline[0]
            assert angle_diff(math.atan2(d[1], d[0]), four_way.port(lane.entry_port).heading) < 1e-6

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lanegraph.fields import AffordanceBundle, DirectionalField
from lanegraph.core import GridMap
from lanegraph.graphgen.extract import generate_graph
from lanegraph.graphgen.graph import Edge, LaneGraph, Vertex, read_graph, validate_graph, write_graph
from lanegraph.graphgen.search import (AdjacencyField, astar, dijkstra_cost, edge_weight, extract_points,
                                       preprocess_lane_map)
from lanegraph.graphgen.unify import divergence_angle, lookahead_direction, reverse_unify, unify
from lanegraph.metrics import graph_diff
from lanegraph.oracle import synth_affordances
from lanegraph.scene import ground_truth_graph


def _uniform_field(y, mu, shape=(32, 32)):
    h, w = shape
    weights = np.zeros((h, w, 3))
    weights[..., 0] = 1.0
    means = np.zeros((h, w, 3))
    means[..., 0] = mu
    kappas = np.zeros((h, w, 3))
    kappas[..., 0] = 8.0
    lane = np.broadcast_to(np.asarray(y, dtype=np.float64), shape)
    return AdjacencyField(lane, DirectionalField(weights, means, kappas))


def _window_oracle(b):
    """Box average over offsets [-4, +3] written as an explicit double loop."""
    h, w = b.shape
    out = np.zeros((h, w))
    for i in range(h):
        for j in range(w):
            s = 0.0
            for di in range(-4, 4):
                for dj in range(-4, 4):
                    if 0 <= i + di < h and 0 <= j + dj < w:
                        s += b[i + di, j + dj]
            out[i, j] = s / 64.0
    return out


# preprocessing

def test_preprocess_saturates_inside_ones():
    y = preprocess_lane_map(np.ones((20, 20))).data[0]
    assert y[10, 10] == 1.0


def test_preprocess_half_window():
    lane = np.zeros((20, 20))
    lane[:, 10:] = 1.0
    y = preprocess_lane_map(lane).data[0]
    # window of column 10 covers columns 6..13, four of them ones
    assert y[10, 10] == pytest.approx(0.00390625, abs=1e-15)


def test_preprocess_zero_map():
    assert not preprocess_lane_map(np.zeros((16, 16))).data.any()


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_preprocess_matches_explicit_window(seed):
    rng = np.random.default_rng(seed)
    lane = rng.random((12, 14))
    b = (lane > 0.5).astype(float)
    got = preprocess_lane_map(lane).data[0]
    np.testing.assert_allclose(got, _window_oracle(b) ** 8, atol=1e-12)


# edge weights

def test_edge_weight_examples():
    f = _uniform_field(1.0, 0.0)
    assert edge_weight(f, (5, 5), (5, 6)) == 1.0
    f = _uniform_field(math.exp(-1.0), 0.0)
    assert edge_weight(f, (5, 5), (5, 6)) == pytest.approx(2.0, abs=1e-12)
    f = _uniform_field(0.0, 0.0)
    assert edge_weight(f, (5, 5), (5, 6)) == math.inf
    # moving west against an eastward field is gated
    f = _uniform_field(1.0, 0.0)
    assert edge_weight(f, (5, 5), (5, 4)) == math.inf


def test_edge_weight_gate_admits_neighbors_within_45_degrees():
    f = _uniform_field(1.0, 0.0)
    assert edge_weight(f, (5, 5), (6, 6)) == pytest.approx(math.sqrt(2))
    assert edge_weight(f, (5, 5), (4, 6)) == pytest.approx(math.sqrt(2))
    assert edge_weight(f, (5, 5), (6, 5)) == math.inf


def test_edge_weight_rejects_non_neighbor():
    f = _uniform_field(1.0, 0.0)
    with pytest.raises(ValueError):
        edge_weight(f, (5, 5), (5, 7))


def test_edge_weight_out_of_bounds_unreachable():
    f = _uniform_field(1.0, 0.0)
    assert edge_weight(f, (5, 31), (5, 32)) == math.inf


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_edge_weights_bounded_below_by_step_length(seed):
    rng = np.random.default_rng(seed)
    f = _random_field(rng, 12)
    costs = f.move_costs()
    steps = np.array([1, math.sqrt(2)] * 4)[:, None, None]
    finite = np.isfinite(costs)
    assert np.all(costs[finite] >= np.broadcast_to(steps, costs.shape)[finite] - 1e-12)


# point extraction

def test_extract_points_examples():
    m = np.zeros((30, 40))
    m[9:12, 9:12] = 1.0
    assert extract_points(m) == [(10, 10)]
    m[9:12, 29:32] = 1.0
    assert len(extract_points(m)) == 2
    assert extract_points(np.zeros((8, 8))) == []


def test_extract_points_weighted_centroid():
    m = np.zeros((10, 10))
    m[4, 3:7] = [0.6, 0.6, 0.6, 1.0]
    assert extract_points(m) == [(4, 5)]


# A*

def _random_field(rng, n):
    lane = rng.random((n, n))
    lane[rng.random((n, n)) < 0.15] = 0.0
    k = rng.integers(1, 4, size=(n, n))
    weights = np.zeros((n, n, 3))
    for c in range(3):
        weights[..., c] = np.where(c < k, 1.0, 0.0)
    weights /= weights.sum(axis=2, keepdims=True)
    means = np.where(weights > 0, rng.uniform(0, 2 * math.pi, (n, n, 3)), 0.0)
    kappas = np.where(weights > 0, 8.0, 0.0)
    return AdjacencyField(lane, DirectionalField(weights, means, kappas))


def test_astar_axial_straight_line():
    f = _uniform_field(1.0, 0.0)
    path, cost = astar((5, 5), (5, 20), f)
    assert cost == 15.0
    assert path == [(5, j) for j in range(5, 21)]


def test_astar_diagonal_cost_is_euclidean():
    f = _uniform_field(1.0, math.pi / 4)
    path, cost = astar((0, 0), (10, 10), f)
    assert cost == pytest.approx(10 * math.sqrt(2), abs=1e-12)
    assert len(path) == 11


def test_astar_unreachable_goal():
    f = _uniform_field(1.0, 0.0)
    assert astar((5, 20), (5, 5), f) is None
    lane = np.ones((32, 32))
    lane[:, 15] = 0.0
    f = _uniform_field(lane, 0.0)
    assert astar((5, 5), (5, 25), f) is None


def test_astar_start_equals_goal():
    f = _uniform_field(1.0, 0.0)
    assert astar((3, 3), (3, 3), f) == ([(3, 3)], 0.0)


def test_astar_matches_dijkstra_on_random_fields():
    rng = np.random.default_rng(2024)
    reached = 0
    for _ in range(200):
        f = _random_field(rng, 32)
        s = tuple(int(v) for v in rng.integers(0, 32, 2))
        g = tuple(int(v) for v in rng.integers(0, 32, 2))
        ref = dijkstra_cost(s, g, f)
        found = astar(s, g, f)
        if found is None:
            assert ref == math.inf
            continue
        reached += 1
        assert abs(found[1] - ref) <= 1e-9
    assert reached > 50


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_astar_path_respects_barrier_and_sums_weights(seed):
    rng = np.random.default_rng(seed)
    f = _random_field(rng, 16)
    found = astar((0, 0), (15, 15), f)
    if found is None:
        return
    path, cost = found
    assert all(f.lane_tilde[c] > 0 for c in path[1:])
    total = sum(edge_weight(f, a, b) for a, b in zip(path, path[1:]))
    assert total == pytest.approx(cost, abs=1e-9)


def test_astar_deterministic():
    rng = np.random.default_rng(5)
    f = _random_field(rng, 32)
    f2 = _uniform_field(1.0, 0.0)
    assert astar((0, 0), (31, 31), f) == astar((0, 0), (31, 31), f)
    assert astar((2, 2), (2, 30), f2) == astar((2, 2), (2, 30), f2)


# lookahead and divergence

def test_lookahead_straight_axial():
    path = [(4, j) for j in range(20)]
    assert all(lookahead_direction(path, t) == 0.0 for t in range(19))
    up = [(i, 3) for i in range(20)]
    assert all(lookahead_direction(up, t) == pytest.approx(math.pi / 2) for t in range(19))


def test_lookahead_clamps_at_end():
    path = [(0, 0), (0, 1), (0, 2), (1, 3)]
    assert lookahead_direction(path, 2) == pytest.approx(math.pi / 4)
    with pytest.raises(ValueError):
        lookahead_direction([(0, 0)], 0)


def test_lookahead_leads_tangent_on_quarter_circle():
    r = 20
    cells = []
    for k in range(4000):
        a = k / 4000 * math.pi / 2
        c = (int(round(r - r * math.cos(a))), int(round(r * math.sin(a))))
        if not cells or cells[-1] != c:
            cells.append(c)
    leads = []
    for t in range(len(cells) - 8):
        i, j = cells[t]
        tangent = math.atan2(i - r, j) + math.pi / 2
        d = lookahead_direction(cells, t)
        leads.append((d - tangent + math.pi) % (2 * math.pi) - math.pi)
    # chord half-angle for an arc of about 6 steps
    assert np.mean(leads) == pytest.approx(6 / (2 * r), abs=0.05)
    assert max(abs(x) for x in leads) < math.radians(25)


def test_divergence_angle_examples():
    assert divergence_angle([math.radians(37)]) == 0.0
    d = [0.0, math.radians(30), math.radians(90)]
    assert divergence_angle(d) == pytest.approx(math.radians(90))
    assert divergence_angle([0.0, math.pi]) == pytest.approx(math.pi)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0, 2 * math.pi, exclude_max=True), min_size=1, max_size=6), st.floats(-10, 10))
def test_divergence_angle_rotation_invariant(dirs, shift):
    a = divergence_angle(dirs)
    b = divergence_angle([d + shift for d in dirs])
    assert a == pytest.approx(b, abs=1e-9)
    assert 0.0 <= a < 2 * math.pi


# unification

def _turn_tree():
    a = [(10, j) for j in range(61)]
    b = [(10, j) for j in range(31)] + [(10 + k, 30) for k in range(1, 31)]
    return [a, b]


def _three_way_tree():
    stem = [(20, j) for j in range(21)]
    return [stem + [(20 + s * k, 20 + k) for k in range(1, 21)] for s in (-1, 0, 1)]


def test_unify_identical_paths():
    p = [(3, j) for j in range(15)]
    common, suffixes = unify([p, list(p)])
    assert common == p and suffixes == []


def test_unify_single_path():
    p = [(3, j) for j in range(15)]
    assert unify([p]) == (p, [])


def test_unify_splits_before_turn():
    common, suffixes = unify(_turn_tree())
    fork = len(common) - 1
    # geometric split at index 30; lookahead anticipates by at most 6 cells
    assert 30 - 6 <= fork <= 30
    assert len(suffixes) == 2
    assert all(s[0] == common[-1] for s in suffixes)
    assert suffixes[0][-1] == (10, 60) and suffixes[1][-1] == (40, 30)


def test_unify_three_way_split():
    common, suffixes = unify(_three_way_tree())
    assert 20 - 6 <= len(common) - 1 <= 20
    assert len(suffixes) == 3
    assert {s[-1] for s in suffixes} == {(0, 40), (20, 40), (40, 40)}


def test_unify_requires_shared_root():
    with pytest.raises(ValueError):
        unify([[(0, 0), (0, 1)], [(1, 0), (1, 1)]])
    with pytest.raises(ValueError):
        unify([])


def test_reverse_unify_mirrors_unify():
    tree = _turn_tree()
    common, suffixes = unify(tree)
    rev_common, prefixes = reverse_unify([list(reversed(p)) for p in tree])
    assert rev_common == list(reversed(common))
    assert rev_common[0] == common[-1]
    assert all(p[-1] == rev_common[0] for p in prefixes)


def test_reverse_unify_single_path():
    p = [(3, j) for j in range(15)]
    assert reverse_unify([p]) == (p, [])


def _random_tree(rng):
    stem_len = int(rng.integers(5, 25))
    stem = [(30, j) for j in range(stem_len)]
    tree = []
    for _ in range(int(rng.integers(2, 4))):
        di = int(rng.choice([-1, 0, 1]))
        i, j = stem[-1]
        p = list(stem)
        for _ in range(int(rng.integers(4, 20))):
            if rng.random() < 0.2:
                di = int(np.clip(di + rng.choice([-1, 1]), -1, 1))
            i, j = i + di, j + 1
            p.append((i, j))
        tree.append(p)
    return tree


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_unify_idempotent(seed):
    tree = _random_tree(np.random.default_rng(seed))
    common, suffixes = unify(tree)
    if not suffixes:
        return
    again, _ = unify([common + s[1:] for s in suffixes])
    assert again == common


# graph generation

def test_generate_graph_straight_two_way(straight):
    g = generate_graph(synth_affordances(straight))
    assert len(g.vertices) == 4
    assert g.edge_kind_counts()["lane"] == 2 and len(g.edges) == 2
    assert validate_graph(g) == []


def test_generate_graph_four_way_matches_ground_truth(four_way):
    g = generate_graph(synth_affordances(four_way))
    assert graph_diff(g, ground_truth_graph(four_way)) == (0, 0)
    assert validate_graph(g) == []


def test_generate_graph_y_fork(fork):
    g = generate_graph(synth_affordances(fork))
    counts = g.edge_kind_counts()
    assert counts["entry"] >= 1 and counts["exit"] >= 2
    assert validate_graph(g) == []
    forks = [v for v in g.vertices if v.kind == "fork"]
    assert forks
    out = g.out_edges()
    assert any(len(out[v.id]) == 2 and all(e.kind == "exit" for e in out[v.id]) for v in forks)
    assert graph_diff(g, ground_truth_graph(fork)) == (0, 0)


def test_generate_graph_empty_bundle_warns():
    z = GridMap(np.zeros((32, 32)))
    b = AffordanceBundle(z, z, z, DirectionalField.empty(32))
    g = generate_graph(b)
    assert g.vertices == [] and g.edges == []
    assert g.warnings


def test_generate_graph_unreachable_entry_omitted():
    lane = np.zeros((32, 32))
    lane[10:18, 2:30] = 1.0
    entry = np.zeros((32, 32))
    entry[13:16, 24:27] = 1.0
    exit_ = np.zeros((32, 32))
    exit_[13:16, 4:7] = 1.0
    weights = np.zeros((32, 32, 3))
    weights[..., 0] = lane
    means = np.zeros((32, 32, 3))
    kappas = weights * 8.0
    # directions point east but the exit lies west of the entry
    b = AffordanceBundle(GridMap(lane), GridMap(entry), GridMap(exit_), DirectionalField(weights, means, kappas))
    g = generate_graph(b)
    assert g.edges == []
    assert any("reaches no exit" in w for w in g.warnings)


def test_generate_graph_deterministic(four_way):
    b = synth_affordances(four_way)
    assert generate_graph(b).to_json() == generate_graph(b).to_json()


@pytest.mark.filterwarnings("ignore:.*more than 3 directions")
def test_library_graphs_valid(library):
    for layout in library:
        g = generate_graph(synth_affordances(layout))
        assert validate_graph(g) == [], layout.id
        assert graph_diff(g, ground_truth_graph(layout)) == (0, 0), layout.id


# validator

def _lane_graph():
    return LaneGraph([Vertex("e0", "entry", (0, 0)), Vertex("x0", "exit", (0, 9))],
                     [Edge("e0", "x0", "lane", ((0, 0), (0, 9)))])


def _depth_three():
    v = [Vertex("e0", "entry", (0, 0)), Vertex("e1", "entry", (4, 0)), Vertex("f0", "fork", (0, 3)),
         Vertex("f1", "fork", (4, 3)), Vertex("m0", "merge", (2, 6)), Vertex("m1", "merge", (6, 6)),
         Vertex("x0", "exit", (2, 9)), Vertex("x1", "exit", (6, 9))]
    e = [Edge("e0", "f0", "entry"), Edge("e1", "f1", "entry"),
         Edge("f0", "m0", "intersection"), Edge("f0", "m1", "intersection"),
         Edge("f1", "m0", "intersection"), Edge("f1", "m1", "intersection"),
         Edge("m0", "x0", "exit"), Edge("m1", "x1", "exit")]
    return LaneGraph(v, e)


def test_validator_accepts_model_graphs():
    assert validate_graph(_lane_graph()) == []
    assert validate_graph(_depth_three()) == []
    assert validate_graph(LaneGraph()) == []


def test_validator_ground_truth_library(library):
    for layout in library:
        assert validate_graph(ground_truth_graph(layout)) == [], layout.id


def test_validator_cycle():
    g = _lane_graph()
    g.edges.append(Edge("x0", "e0", "lane"))
    assert any(v.startswith("(a)") for v in validate_graph(g))


def test_validator_fork_outdegree():
    g = LaneGraph([Vertex("e0", "entry", (0, 0)), Vertex("f0", "fork", (0, 3)), Vertex("x0", "exit", (0, 9))],
                  [Edge("e0", "f0", "entry"), Edge("f0", "x0", "exit")])
    assert any(v.startswith("(c)") for v in validate_graph(g))


def test_validator_depth_and_dangling():
    g = _depth_three()
    # an extra fork after the merge makes a four-edge path
    g.vertices.append(Vertex("f9", "fork", (3, 7)))
    g.edges = [e for e in g.edges if e.src != "m0"] + [Edge("m0", "f9", "entry"), Edge("f9", "x0", "exit"),
                                                        Edge("f9", "x1", "exit")]
    out = validate_graph(g)
    assert any(v.startswith("(b)") for v in out)
    g = LaneGraph([Vertex("e0", "entry", (0, 0))], [])
    assert any(v.startswith("(b)") for v in validate_graph(g))


def test_validator_kind_sequencing():
    g = _lane_graph()
    g.edges[0] = Edge("e0", "x0", "intersection")
    assert any(v.startswith("(d)") for v in validate_graph(g))
    g.edges[0] = Edge("e0", "zz", "lane")
    assert any(v.startswith("(d)") for v in validate_graph(g))


def test_validator_fused_intersections():
    g = _depth_three()
    g.edges.append(Edge("m0", "f1", "lane"))
    assert any(v.startswith("(e)") for v in validate_graph(g))


def test_validator_never_raises_on_garbage():
    g = LaneGraph([Vertex("a", "blob", (0, 0))], [Edge("a", "b", "weird")])
    assert validate_graph(g)


# JSON

def test_graph_json_round_trip(tmp_path, four_way):
    g = ground_truth_graph(four_way)
    path = tmp_path / "g.json"
    write_graph(g, path)
    back = read_graph(path)
    assert back.to_json() == g.to_json()
    text = path.read_text()
    assert text.index('"edges"') < text.index('"vertices"') < text.index('"warnings"')


def test_graph_json_empty():
    assert LaneGraph.from_json(LaneGraph().to_json()).to_json() == '{"edges":[],"vertices":[],"warnings":[]}'


def test_generate_graph_warning_free_on_clean(four_way):
    assert generate_graph(synth_affordances(four_way)).warnings == []

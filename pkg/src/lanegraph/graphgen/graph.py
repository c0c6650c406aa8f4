"""Lane graph container, path-set assembly, JSON I/O and the formal-model validator."""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

VERTEX_KINDS = ("entry", "fork", "merge", "exit")
EDGE_KINDS = ("entry", "intersection", "exit", "lane")

# allowed (src kind, dst kind) per edge kind; depth-2 point intersections use
# entry->merge and fork->exit
EDGE_ENDPOINTS = {
    "entry": {("entry", "fork"), ("entry", "merge")},
    "intersection": {("fork", "merge")},
    "exit": {("merge", "exit"), ("fork", "exit")},
    "lane": {("entry", "exit")},
}

Cell = tuple[int, int]


@dataclass(frozen=True)
class Vertex:
    id: str
    kind: str
    cell: Cell


@dataclass(frozen=True)
class Edge:
    src: str
    dst: str
    kind: str
    geometry: tuple[Cell, ...] = ()


@dataclass
class LaneGraph:
    vertices: list[Vertex] = field(default_factory=list)
    edges: list[Edge] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def vertex(self, vid: str) -> Vertex:
        for v in self.vertices:
            if v.id == vid:
                return v
        raise KeyError(vid)

    def by_kind(self, kind: str) -> list[Vertex]:
        return [v for v in self.vertices if v.kind == kind]

    def out_edges(self) -> dict[str, list[Edge]]:
        out = defaultdict(list)
        for e in self.edges:
            out[e.src].append(e)
        return out

    def in_edges(self) -> dict[str, list[Edge]]:
        inc = defaultdict(list)
        for e in self.edges:
            inc[e.dst].append(e)
        return inc

    def edge_kind_counts(self) -> dict[str, int]:
        counts = {k: 0 for k in EDGE_KINDS}
        for e in self.edges:
            counts[e.kind] = counts.get(e.kind, 0) + 1
        return counts

    def routes(self, max_depth: int = 8) -> dict[tuple[str, str], list[tuple[str, ...]]]:
        """Entry-to-exit reachability with the edge-kind sequence of every path."""
        out = self.out_edges()
        kinds = {v.id: v.kind for v in self.vertices}
        found: dict[tuple[str, str], list[tuple[str, ...]]] = defaultdict(list)

        def walk(start, vid, seq, depth):
            if kinds.get(vid) == "exit" and seq:
                found[(start, vid)].append(tuple(seq))
            if depth >= max_depth:
                return
            for e in out.get(vid, ()):
                walk(start, e.dst, seq + [e.kind], depth + 1)

        for v in self.vertices:
            if v.kind == "entry":
                walk(v.id, v.id, [], 0)
        return dict(found)

    def to_dict(self) -> dict:
        return {
            "vertices": [{"id": v.id, "kind": v.kind, "cell": [int(v.cell[0]), int(v.cell[1])]}
                         for v in self.vertices],
            "edges": [{"src": e.src, "dst": e.dst, "kind": e.kind,
                       "geometry": [[int(i), int(j)] for i, j in e.geometry]}
                      for e in self.edges],
            "warnings": list(self.warnings),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, data: dict) -> "LaneGraph":
        vertices = [Vertex(str(v["id"]), str(v["kind"]), (int(v["cell"][0]), int(v["cell"][1])))
                    for v in data.get("vertices", [])]
        edges = [Edge(str(e["src"]), str(e["dst"]), str(e["kind"]),
                      tuple((int(i), int(j)) for i, j in e.get("geometry", [])))
                 for e in data.get("edges", [])]
        return cls(vertices, edges, list(data.get("warnings", [])))

    @classmethod
    def from_json(cls, text: str) -> "LaneGraph":
        return cls.from_dict(json.loads(text))


def write_graph(graph: LaneGraph, path) -> None:
    from ..core import _atomic_write_bytes

    _atomic_write_bytes(Path(path), (graph.to_json() + "\n").encode("utf-8"))


def read_graph(path) -> LaneGraph:
    return LaneGraph.from_json(Path(path).read_text(encoding="utf-8"))


@dataclass
class PathSet:
    """Path sets of the extraction algorithm, keyed by entry/exit point index.

    ``entry[e]`` runs from entry point ``e`` to its fork; ``con`` holds
    ``(e, x, path)`` continuations from the fork (or from the entry itself when
    the entry reaches a single exit); ``exit[x]`` runs from the merge to exit
    ``x``; ``inter[(e, x)]`` is the part of continuation ``(e, x)`` that ends at
    the merge of ``x``.
    """

    entry: dict[int, list[Cell]] = field(default_factory=dict)
    con: list[tuple[int, int, list[Cell]]] = field(default_factory=list)
    exit: dict[int, list[Cell]] = field(default_factory=dict)
    inter: dict[tuple[int, int], list[Cell]] = field(default_factory=dict)


def _cells(path) -> tuple[Cell, ...]:
    return tuple((int(i), int(j)) for i, j in path)


def assemble_graph(entry_cells, exit_cells, paths: PathSet, warnings=()) -> LaneGraph:
    """Turn path sets into vertices and typed edges.

    Entry and fork vertices come from the ends of entry paths, merge and exit
    vertices from the ends of exit paths, and each continuation becomes an
    intersection edge (fork to merge) or collapses when there is no fork and/or
    no merge on its way.
    """
    used_entries = sorted({e for e, _, _ in paths.con})
    used_exits = sorted({x for _, x, _ in paths.con})
    vertices: list[Vertex] = []
    for e in used_entries:
        vertices.append(Vertex(f"e{e}", "entry", tuple(map(int, entry_cells[e]))))
    for e in used_entries:
        if e in paths.entry:
            vertices.append(Vertex(f"f{e}", "fork", tuple(map(int, paths.entry[e][-1]))))
    for x in used_exits:
        if x in paths.exit:
            vertices.append(Vertex(f"m{x}", "merge", tuple(map(int, paths.exit[x][0]))))
    for x in used_exits:
        vertices.append(Vertex(f"x{x}", "exit", tuple(map(int, exit_cells[x]))))

    edges: list[Edge] = []
    for e in used_entries:
        if e in paths.entry:
            edges.append(Edge(f"e{e}", f"f{e}", "entry", _cells(paths.entry[e])))
    for e, x, path in sorted(paths.con, key=lambda c: (c[0], c[1])):
        forked = e in paths.entry
        src = f"f{e}" if forked else f"e{e}"
        if x in paths.exit:
            geom = paths.inter.get((e, x), path)
            edges.append(Edge(src, f"m{x}", "intersection" if forked else "entry", _cells(geom)))
        else:
            edges.append(Edge(src, f"x{x}", "exit" if forked else "lane", _cells(path)))
    for x in used_exits:
        if x in paths.exit:
            edges.append(Edge(f"m{x}", f"x{x}", "exit", _cells(paths.exit[x])))
    return LaneGraph(vertices, edges, list(warnings))


def _has_cycle(graph: LaneGraph) -> bool:
    ids = [v.id for v in graph.vertices]
    indeg = {v: 0 for v in ids}
    out = defaultdict(list)
    for e in graph.edges:
        out[e.src].append(e.dst)
        indeg[e.dst] = indeg.get(e.dst, 0) + 1
        indeg.setdefault(e.src, 0)
    queue = [v for v, d in indeg.items() if d == 0]
    seen = 0
    while queue:
        v = queue.pop()
        seen += 1
        for w in out[v]:
            indeg[w] -= 1
            if indeg[w] == 0:
                queue.append(w)
    return seen != len(indeg)


def validate_graph(graph: LaneGraph) -> list[str]:
    """Check a lane graph against the formal model; an empty list means valid."""
    violations: list[str] = []
    kinds = {v.id: v.kind for v in graph.vertices}
    for e in graph.edges:
        for end in (e.src, e.dst):
            if end not in kinds:
                violations.append(f"(d) edge {e.src}->{e.dst} references unknown vertex {end}")
    for v in graph.vertices:
        if v.kind not in VERTEX_KINDS:
            violations.append(f"(d) vertex {v.id} has unknown kind {v.kind!r}")

    cyclic = _has_cycle(graph)
    if cyclic:
        violations.append("(a) graph contains a directed cycle")

    out = graph.out_edges()
    inc = graph.in_edges()

    if not cyclic:
        for v in graph.vertices:
            if v.kind != "entry":
                continue
            if not out.get(v.id):
                violations.append(f"(b) entry {v.id} has no outgoing path (0 edges)")
                continue
            stack = [(v.id, 0)]
            while stack:
                vid, depth = stack.pop()
                nexts = out.get(vid, [])
                if not nexts:
                    if kinds.get(vid) != "exit":
                        violations.append(f"(b) path from {v.id} ends at non-exit vertex {vid}")
                    elif depth > 3:
                        violations.append(f"(b) path {v.id}->{vid} has {depth} edges (> 3)")
                    continue
                if depth >= 3:
                    violations.append(f"(b) path from {v.id} exceeds 3 edges at {vid}")
                    continue
                for e in nexts:
                    stack.append((e.dst, depth + 1))
        for v in graph.vertices:
            if v.kind == "exit" and not inc.get(v.id):
                violations.append(f"(b) exit {v.id} is not reached by any path (0 edges)")

    for v in graph.vertices:
        if v.kind == "fork" and len(out.get(v.id, [])) < 2:
            violations.append(f"(c) fork {v.id} has outdegree {len(out.get(v.id, []))} < 2")
        if v.kind == "merge" and len(inc.get(v.id, [])) < 2:
            violations.append(f"(c) merge {v.id} has indegree {len(inc.get(v.id, []))} < 2")

    for e in graph.edges:
        if e.src not in kinds or e.dst not in kinds:
            continue
        pair = (kinds[e.src], kinds[e.dst])
        allowed = EDGE_ENDPOINTS.get(e.kind)
        if allowed is None:
            violations.append(f"(d) edge {e.src}->{e.dst} has unknown kind {e.kind!r}")
        elif pair not in allowed:
            violations.append(f"(d) {e.kind} edge {e.src}->{e.dst} joins {pair[0]} to {pair[1]}")

    # intersections are the components over fork/merge vertices joined by
    # intersection edges; any other link between such vertices fuses two
    # intersections into one lane
    junction = {"fork", "merge"}
    for e in graph.edges:
        if kinds.get(e.src) in junction and kinds.get(e.dst) in junction:
            if not (e.kind == "intersection" and kinds[e.src] == "fork" and kinds[e.dst] == "merge"):
                violations.append(f"(e) {e.kind} edge {e.src}->{e.dst} links intersections")
    for v in graph.vertices:
        if v.kind == "fork" and len(inc.get(v.id, [])) > 1:
            violations.append(f"(e) fork {v.id} is shared by {len(inc[v.id])} incoming lanes")
        if v.kind == "merge" and len(out.get(v.id, [])) > 1:
            violations.append(f"(e) merge {v.id} feeds {len(out[v.id])} outgoing lanes")
    return violations

"""Metric graphs, points on them, shortest-path distances and grids.

Every edge ``e`` is identified with the interval ``[-l_e/2, l_e/2]``; the
tail vertex sits at ``-l_e/2`` (outer normal -1) and the head at ``+l_e/2``
(outer normal +1).  Multi-edges and self-loops are allowed.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Hashable, Iterable, Mapping, Sequence

import numpy as np
import yaml
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, shortest_path

from .errors import (
    DanglingVertexReference,
    DisconnectedGraph,
    GraphDescriptionError,
    NonpositiveLength,
)

# Relative slack used when comparing path lengths for tie-breaking.
_TIE_RTOL = 1e-12


@dataclass(frozen=True)
class Edge:
    tail: int
    head: int
    length: float

    @property
    def is_loop(self) -> bool:
        return self.tail == self.head


@dataclass(frozen=True, eq=False)
class GraphPoint:
    """A location ``s`` on edge ``edge``.

    ``vertex`` is set when the point coincides with an edge endpoint, so that
    the same vertex reached through different edges compares equal.  Build
    points through :meth:`MetricGraph.point` to get this bookkeeping.
    """

    edge: int
    s: float
    vertex: int | None = None

    def _key(self) -> tuple:
        if self.vertex is not None:
            return ("v", self.vertex)
        return ("e", self.edge, self.s)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GraphPoint):
            return NotImplemented
        return self._key() == other._key()

    def __hash__(self) -> int:
        return hash(self._key())


class MetricGraph:
    """Immutable compact metric graph.

    Vertices are addressed internally by their index in ``vertices``; the
    user-facing ids are kept for reporting.
    """

    def __init__(self, vertices: Sequence[Hashable], edges: Sequence[Edge]):
        self.vertices: tuple[Hashable, ...] = tuple(vertices)
        self.edges: tuple[Edge, ...] = tuple(edges)
        incident: list[list[int]] = [[] for _ in self.vertices]
        degree = [0] * len(self.vertices)
        for k, e in enumerate(self.edges):
            incident[e.tail].append(k)
            degree[e.tail] += 1
            if not e.is_loop:
                incident[e.head].append(k)
            degree[e.head] += 1
        self.adjacency: tuple[tuple[int, ...], ...] = tuple(tuple(a) for a in incident)
        self.degree: tuple[int, ...] = tuple(degree)
        self.deg_max: int = max(degree) if degree else 0
        self.lengths = np.array([e.length for e in self.edges], dtype=float)
        self.lengths.setflags(write=False)
        self.vertex_distances = self._all_pairs()
        self.vertex_distances.setflags(write=False)

    # -- structure -------------------------------------------------------
    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def total_length(self) -> float:
        return float(self.lengths.sum())

    @property
    def min_length(self) -> float:
        return float(self.lengths.min())

    def vertex_index(self, vid: Hashable) -> int:
        return self.vertices.index(vid)

    def _all_pairs(self) -> np.ndarray:
        nv = self.num_vertices
        w = np.full((nv, nv), np.inf)
        for e in self.edges:
            if not e.is_loop:
                w[e.tail, e.head] = min(w[e.tail, e.head], e.length)
                w[e.head, e.tail] = w[e.tail, e.head]
        rows, cols = np.nonzero(np.isfinite(w))
        mat = csr_matrix((w[rows, cols], (rows, cols)), shape=(nv, nv))
        return shortest_path(mat, method="D", directed=False)

    def is_path_graph(self) -> bool:
        """True when the graph is isometric to a single interval."""
        if any(e.is_loop for e in self.edges):
            return False
        if self.num_edges != self.num_vertices - 1:
            return False
        return self.deg_max <= 2

    # -- points ----------------------------------------------------------
    def point(self, edge: int, s: float) -> GraphPoint:
        """Validated point on ``edge``; endpoints snap to their vertex."""
        e = self.edges[edge]
        half = 0.5 * e.length
        tol = 1e-13 * max(1.0, e.length)
        if not (-half - tol <= s <= half + tol):
            raise ValueError(f"coordinate {s} outside edge {edge} of length {e.length}")
        if abs(s + half) <= tol:
            return GraphPoint(edge, -half, e.tail)
        if abs(s - half) <= tol:
            return GraphPoint(edge, half, e.head)
        return GraphPoint(edge, float(s))

    def vertex_point(self, v: int) -> GraphPoint:
        if not self.adjacency[v]:
            raise ValueError(f"vertex {self.vertices[v]!r} has no incident edge")
        k = self.adjacency[v][0]
        e = self.edges[k]
        s = -0.5 * e.length if e.tail == v else 0.5 * e.length
        return GraphPoint(k, s, v)

    def point_from_tail(self, edge: int, r: float) -> GraphPoint:
        """Point at distance ``r`` from the tail of ``edge`` along the edge."""
        return self.point(edge, r - 0.5 * self.edges[edge].length)

    def _ends(self, p: GraphPoint) -> tuple[tuple[int, float, float], ...]:
        """(vertex, distance along the edge, endpoint coordinate) for both ends."""
        e = self.edges[p.edge]
        half = 0.5 * e.length
        return (e.tail, p.s + half, -half), (e.head, half - p.s, half)


@dataclass(frozen=True)
class ExtensionMap:
    """Relation between ``G`` and ``G^{2eps}``.

    Original edge ``k`` keeps index ``k`` and its coordinates in the extended
    graph.  ``pendant[v]`` is the index of the pendant edge hanging at vertex
    ``v``; it is oriented with its tail at ``v``.  Along the line of edge
    ``e`` the tail pendant occupies ``[-l_e/2 - 2eps, -l_e/2]`` and the head
    pendant ``[l_e/2, l_e/2 + 2eps]``.
    """

    eps: float
    source: MetricGraph
    target: MetricGraph
    pendant: tuple[int, ...]

    @cached_property
    def alpha(self) -> np.ndarray:
        return (self.source.lengths + 2 * self.eps) / self.source.lengths

    def embed(self, p: GraphPoint) -> GraphPoint:
        return self.target.point(p.edge, p.s)


def build_graph(description: Mapping[str, Any]) -> MetricGraph:
    """Validate a description record and build the graph.

    The record has exactly the keys ``vertices`` (list of ids), ``edges``
    (list of ``{tail, head, length}`` mappings) and optionally ``name``.
    """
    if not isinstance(description, Mapping):
        raise GraphDescriptionError("graph description must be a mapping")
    unknown = set(description) - {"vertices", "edges", "name"}
    if unknown:
        raise GraphDescriptionError(f"unknown fields: {sorted(map(str, unknown))}")
    for key in ("vertices", "edges"):
        if key not in description:
            raise GraphDescriptionError(f"missing field {key!r}")
    vids = list(description["vertices"])
    if not vids:
        raise GraphDescriptionError("graph needs at least one vertex")
    if len(set(vids)) != len(vids):
        raise GraphDescriptionError("duplicate vertex ids")
    index = {v: i for i, v in enumerate(vids)}
    edges = []
    for k, rec in enumerate(description["edges"]):
        if not isinstance(rec, Mapping):
            raise GraphDescriptionError(f"edge {k} must be a mapping")
        extra = set(rec) - {"tail", "head", "length"}
        if extra:
            raise GraphDescriptionError(f"edge {k}: unknown fields {sorted(map(str, extra))}")
        missing = {"tail", "head", "length"} - set(rec)
        if missing:
            raise GraphDescriptionError(f"edge {k}: missing fields {sorted(missing)}")
        for end in ("tail", "head"):
            if rec[end] not in index:
                raise DanglingVertexReference(f"edge {k}: unknown vertex {rec[end]!r}")
        try:
            length = float(rec["length"])
        except (TypeError, ValueError) as exc:
            raise GraphDescriptionError(f"edge {k}: length is not a number") from exc
        if not (length > 0 and math.isfinite(length)):
            raise NonpositiveLength(f"edge {k}: length {rec['length']!r}")
        edges.append(Edge(index[rec["tail"]], index[rec["head"]], length))
    if not edges:
        raise GraphDescriptionError("graph needs at least one edge")
    _check_connected(len(vids), edges)
    return MetricGraph(vids, edges)


def _check_connected(nv: int, edges: Iterable[Edge]) -> None:
    edges = list(edges)
    rows = [e.tail for e in edges]
    cols = [e.head for e in edges]
    adj = csr_matrix((np.ones(len(edges)), (rows, cols)), shape=(nv, nv))
    ncomp, _ = connected_components(adj, directed=False)
    if ncomp != 1:
        raise DisconnectedGraph(f"graph has {ncomp} connected components")


def load_graph(path: str | Path) -> MetricGraph:
    """Read a graph description file (YAML flow or block syntax, JSON works too)."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise GraphDescriptionError(f"cannot parse {path}: {exc}") from exc
    return build_graph(data)


# -- distances -------------------------------------------------------------

def graph_distance(G: MetricGraph, x: GraphPoint, y: GraphPoint) -> float:
    """Shortest-path distance between two points of ``G``."""
    if x == y:
        return 0.0
    best = math.inf
    if x.edge == y.edge:
        best = abs(x.s - y.s)
    D = G.vertex_distances
    for vx, ox, _ in G._ends(x):
        for vy, oy, _ in G._ends(y):
            best = min(best, ox + D[vx, vy] + oy)
    return float(best)


def _point_arrays(G: MetricGraph, edge: np.ndarray, s: np.ndarray):
    tails = np.array([e.tail for e in G.edges])[edge]
    heads = np.array([e.head for e in G.edges])[edge]
    half = 0.5 * G.lengths[edge]
    return tails, s + half, heads, half - s


def pairwise_distances(
    G: MetricGraph,
    edge_a: np.ndarray,
    s_a: np.ndarray,
    edge_b: np.ndarray,
    s_b: np.ndarray,
) -> np.ndarray:
    """Distance matrix between two point clouds given as (edge, s) arrays."""
    edge_a = np.asarray(edge_a, dtype=np.intp)
    edge_b = np.asarray(edge_b, dtype=np.intp)
    s_a = np.asarray(s_a, dtype=float)
    s_b = np.asarray(s_b, dtype=float)
    D = G.vertex_distances
    ta, ota, ha, oha = _point_arrays(G, edge_a, s_a)
    tb, otb, hb, ohb = _point_arrays(G, edge_b, s_b)
    out = np.full((edge_a.size, edge_b.size), np.inf)
    for va, oa in ((ta, ota), (ha, oha)):
        for vb, ob in ((tb, otb), (hb, ohb)):
            np.minimum(out, oa[:, None] + D[np.ix_(va, vb)] + ob[None, :], out=out)
    same = edge_a[:, None] == edge_b[None, :]
    direct = np.abs(s_a[:, None] - s_b[None, :])
    np.minimum(out, np.where(same, direct, np.inf), out=out)
    return out


def point_distances(G: MetricGraph, xs: Sequence[GraphPoint], ys: Sequence[GraphPoint]) -> np.ndarray:
    ea = np.array([p.edge for p in xs], dtype=np.intp)
    sa = np.array([p.s for p in xs], dtype=float)
    eb = np.array([p.edge for p in ys], dtype=np.intp)
    sb = np.array([p.s for p in ys], dtype=float)
    out = pairwise_distances(G, ea, sa, eb, sb)
    # identified vertex points are at distance zero even across edges
    va = np.array([-1 if p.vertex is None else p.vertex for p in xs])
    vb = np.array([-2 if p.vertex is None else p.vertex for p in ys])
    out[va[:, None] == vb[None, :]] = 0.0
    return out


# -- geodesics -------------------------------------------------------------

def _vertex_path(G: MetricGraph, a: int, b: int) -> list[tuple[int, int]]:
    """Lexicographically smallest shortest path from ``a`` to ``b``.

    Returned as a list of (edge id, vertex reached) pairs.
    """
    D = G.vertex_distances
    path = []
    u = a
    while u != b:
        target = D[u, b]
        tol = _TIE_RTOL * max(1.0, target)
        for k in sorted(G.adjacency[u]):
            e = G.edges[k]
            if e.is_loop:
                continue
            w = e.head if e.tail == u else e.tail
            if abs(e.length + D[w, b] - target) <= tol:
                path.append((k, w))
                u = w
                break
        else:  # pragma: no cover - APSP guarantees a tight neighbour
            raise RuntimeError("shortest-path reconstruction failed")
    return path


def _routes(G: MetricGraph, x: GraphPoint, y: GraphPoint):
    """Candidate shortest routes as (length, edge-id sequence, legs).

    ``legs`` is a list of (edge, start coordinate, end coordinate) segments
    traversed in order.
    """
    routes = []
    if x.edge == y.edge:
        routes.append((abs(x.s - y.s), (x.edge,), [(x.edge, x.s, y.s)]))
    D = G.vertex_distances
    for vx, ox, end_x in G._ends(x):
        for vy, oy, end_y in G._ends(y):
            length = ox + D[vx, vy] + oy
            legs = []
            if ox > 0:
                legs.append((x.edge, x.s, end_x))
            u = vx
            for k, w in _vertex_path(G, vx, vy):
                e = G.edges[k]
                if e.tail == u:
                    legs.append((k, -0.5 * e.length, 0.5 * e.length))
                else:
                    legs.append((k, 0.5 * e.length, -0.5 * e.length))
                u = w
            if oy > 0:
                legs.append((y.edge, end_y, y.s))
            routes.append((length, tuple(leg[0] for leg in legs), legs))
    return routes


def geodesic_point(G: MetricGraph, x: GraphPoint, y: GraphPoint, s: float) -> GraphPoint:
    """Point at fraction ``s`` along a fixed shortest path from ``x`` to ``y``.

    Among equal-length shortest paths the one whose sequence of edge ids is
    lexicographically smallest is used.
    """
    if not 0.0 <= s <= 1.0:
        raise ValueError("s must lie in [0, 1]")
    if s == 0.0 or x == y:
        return x
    if s == 1.0:
        return y
    routes = _routes(G, x, y)
    dmin = min(r[0] for r in routes)
    tol = _TIE_RTOL * max(1.0, dmin)
    _, _, legs = min((r for r in routes if r[0] <= dmin + tol), key=lambda r: r[1])
    remaining = s * dmin
    for k, a, b in legs:
        seg = abs(b - a)
        if remaining <= seg:
            return G.point(k, a + math.copysign(remaining, b - a))
        remaining -= seg
    k, a, b = legs[-1]
    return G.point(k, b)


# -- extension ---------------------------------------------------------------

def extend_graph(G: MetricGraph, eps: float) -> tuple[MetricGraph, ExtensionMap]:
    """Attach a pendant edge of length ``2 eps`` at every vertex."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    nv = G.num_vertices
    vertices = list(G.vertices) + [("pendant", v) for v in G.vertices]
    edges = list(G.edges)
    pendant = []
    for v in range(nv):
        pendant.append(len(edges))
        edges.append(Edge(v, nv + v, 2.0 * eps))
    H = MetricGraph(vertices, edges)
    return H, ExtensionMap(float(eps), G, H, tuple(pendant))


# -- grids -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform per-edge grid with shared vertex nodes.

    Flat indices ``0 .. V-1`` are the vertices; interior nodes of edge ``k``
    follow in a contiguous block.  ``weights`` are the trapezoidal (lumped
    mass) weights, so ``weights @ f`` integrates a piecewise-linear ``f``.
    """

    graph: MetricGraph
    n: np.ndarray
    h: np.ndarray
    offsets: np.ndarray
    size: int
    target_h: float = math.nan
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def flat(self, edge: int, k: int) -> int:
        e = self.graph.edges[edge]
        if k == 0:
            return e.tail
        if k == self.n[edge] - 1:
            return e.head
        return int(self.offsets[edge] + k - 1)

    @cached_property
    def edge_nodes(self) -> tuple[np.ndarray, ...]:
        out = []
        for k, e in enumerate(self.graph.edges):
            idx = np.empty(self.n[k], dtype=np.intp)
            idx[0] = e.tail
            idx[-1] = e.head
            idx[1:-1] = self.offsets[k] + np.arange(self.n[k] - 2)
            idx.setflags(write=False)
            out.append(idx)
        return tuple(out)

    def edge_coords(self, edge: int) -> np.ndarray:
        half = 0.5 * self.graph.lengths[edge]
        return np.linspace(-half, half, int(self.n[edge]))

    @cached_property
    def cells(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Arrays (left node, right node, cell length) over all grid cells."""
        left, right, length = [], [], []
        for k, idx in enumerate(self.edge_nodes):
            left.append(idx[:-1])
            right.append(idx[1:])
            length.append(np.full(idx.size - 1, self.h[k]))
        return np.concatenate(left), np.concatenate(right), np.concatenate(length)

    @cached_property
    def weights(self) -> np.ndarray:
        a, b, hc = self.cells
        w = np.zeros(self.size)
        np.add.at(w, a, 0.5 * hc)
        np.add.at(w, b, 0.5 * hc)
        w.setflags(write=False)
        return w

    @cached_property
    def _node_table(self) -> tuple[np.ndarray, np.ndarray]:
        edge = np.empty(self.size, dtype=np.intp)
        coords = np.empty(self.size)
        for v in range(self.graph.num_vertices):
            p = self.graph.vertex_point(v)
            edge[v], coords[v] = p.edge, p.s
        for k, idx in enumerate(self.edge_nodes):
            edge[idx[1:-1]] = k
            coords[idx[1:-1]] = self.edge_coords(k)[1:-1]
        edge.setflags(write=False)
        coords.setflags(write=False)
        return edge, coords

    @property
    def node_edge(self) -> np.ndarray:
        return self._node_table[0]

    @property
    def node_s(self) -> np.ndarray:
        """Edge coordinate of each node (vertex nodes use a canonical edge)."""
        return self._node_table[1]

    @property
    def num_vertices(self) -> int:
        return self.graph.num_vertices

    def node_point(self, i: int) -> GraphPoint:
        if i < self.graph.num_vertices:
            return self.graph.vertex_point(i)
        return GraphPoint(int(self.node_edge[i]), float(self.node_s[i]))

    def node_points(self) -> list[GraphPoint]:
        return [self.node_point(i) for i in range(self.size)]

    @property
    def distance_matrix(self) -> np.ndarray:
        """Node-to-node graph distances, built once on first use."""
        cached = self.__dict__.get("_dist")
        if cached is not None:
            return cached
        with self._lock:
            cached = self.__dict__.get("_dist")
            if cached is None:
                e, s = self.node_edge, self.node_s
                cached = pairwise_distances(self.graph, e, s, e, s)
                nv = self.graph.num_vertices
                cached[np.arange(nv), np.arange(nv)] = 0.0
                cached.setflags(write=False)
                self.__dict__["_dist"] = cached
        return cached

    def locate(self, p: GraphPoint) -> tuple[int, int, float]:
        """Interpolation stencil ``(i, j, w)``: ``f(p) = (1-w) f_i + w f_j``."""
        if p.vertex is not None:
            return p.vertex, p.vertex, 0.0
        k = p.edge
        r = (p.s + 0.5 * self.graph.lengths[k]) / self.h[k]
        c = min(int(math.floor(r)), int(self.n[k]) - 2)
        c = max(c, 0)
        w = r - c
        idx = self.edge_nodes[k]
        return int(idx[c]), int(idx[c + 1]), float(w)

    def interpolate(self, values: np.ndarray, p: GraphPoint) -> float:
        i, j, w = self.locate(p)
        return float((1.0 - w) * values[i] + w * values[j])

    def sample(self, fn) -> np.ndarray:
        """Evaluate ``fn(edge, s)`` at every node (vertex nodes via a canonical edge)."""
        return np.array([fn(int(k), float(s)) for k, s in zip(self.node_edge, self.node_s)])

    @property
    def h_max(self) -> float:
        return float(self.h.max())


def discretize(G: MetricGraph, target_h: float) -> Grid:
    """Uniform grid with ``n_e = max(2, ceil(l_e/target_h) + 1)`` nodes per edge.

    Self-loops get at least three nodes so that they carry an interior node.
    """
    if not target_h > 0:
        raise ValueError("target_h must be positive")
    n = np.empty(G.num_edges, dtype=np.intp)
    for k, e in enumerate(G.edges):
        # the small slack keeps ratios like 0.3/0.1 from rounding up a cell
        cells = math.ceil(e.length / target_h - 1e-9)
        n[k] = max(2, cells + 1, 3 if e.is_loop else 2)
    h = G.lengths / (n - 1)
    offsets = np.empty(G.num_edges, dtype=np.intp)
    pos = G.num_vertices
    for k in range(G.num_edges):
        offsets[k] = pos
        pos += int(n[k]) - 2
    for arr in (n, h, offsets):
        arr.setflags(write=False)
    return Grid(G, n, h, offsets, pos, float(target_h))

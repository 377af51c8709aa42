"""Distance computation on basin components.

Two routes: a closed-form hyperbolic distance on the unit disk (reference
oracle), and a quasi-hyperbolic shortest-path surrogate on grid components,
where the metric density is 1 / boundary_dist and paths live on a 16-neighbor
stencil (king + knight moves; direction anisotropy <= ~2.8%).

For a simply connected component the surrogate brackets the true hyperbolic
distance: value / 4 <= d_hyp <= value (Koebe quarter theorem / disk
inclusion), up to the stencil anisotropy.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from . import maps as mc
from .errors import (
    DegenerateComponent,
    DisconnectedPair,
    NoSuchComponent,
    OutOfDomain,
)
from .grid import SphereGrid
from .maps import ComplexPoint, RationalMap

ANISOTROPY = 1.028  # worst-direction overestimate of the 16-neighbor stencil
KOEBE = 4.0

# Half-stencil: each (dy, dx) paired with its reverse by symmetrization.
STENCIL = ((0, 1), (1, 0), (1, 1), (1, -1), (1, 2), (2, 1), (2, -1), (1, -2))


def disk_reference_distance(z1: complex, z2: complex) -> float:
    """Poincare distance on the unit disk for the density |dz| / (1 - |z|^2).

    Closed form atanh(|z1 - z2| / |1 - conj(z1) z2|); this is the exact
    infimum of lengths over curves, the oracle for the graph surrogate.
    """
    z1, z2 = complex(z1), complex(z2)
    if abs(z1) >= 1.0 or abs(z2) >= 1.0:
        raise OutOfDomain(f"|z1|={abs(z1):.4f}, |z2|={abs(z2):.4f} not both < 1")
    num = abs(z1 - z2)
    den = abs(1.0 - z1.conjugate() * z2)
    return math.atanh(num / den)


@dataclass(frozen=True)
class DistanceResult:
    value: float
    path: tuple        # global cell ids along the shortest path
    lower_bound: float
    upper_bound: float


@dataclass(frozen=True)
class MetricGraph:
    """Weighted graph over the member cells of one component."""

    component_id: int
    vertex_cells: np.ndarray     # (n,) global cell ids, ascending
    matrix: sparse.csr_matrix    # symmetric, positive finite weights
    grid: SphereGrid

    @property
    def n_vertices(self) -> int:
        return len(self.vertex_cells)

    def vertex_of_cell(self, cid: int) -> int:
        i = int(np.searchsorted(self.vertex_cells, cid))
        if i >= len(self.vertex_cells) or self.vertex_cells[i] != cid:
            raise ValueError(f"cell {cid} is not a vertex of component {self.component_id}")
        return i


def build_metric_graph(grid: SphereGrid, component_id: int) -> MetricGraph:
    """Connected weighted graph over one component's member cells.

    Edge weight = chordal length between cell centers x mean of the two
    endpoint densities 1 / boundary_dist (trapezoid rule, second-order in
    the cell pitch). Cross-chart stitch edges join corresponding overlap
    cells, so the graph spans both charts exactly like the labeling.
    """
    if grid.component_id is None or grid.boundary_dist is None:
        raise ValueError("grid must be labeled with boundary distances")
    if component_id < 1 or component_id > grid.n_components:
        raise NoSuchComponent(f"component {component_id} of {grid.n_components}")

    r = grid.resolution
    comp = grid.component_id
    mask = comp == component_id
    n_cells = int(mask.sum())
    if n_cells < 2:
        raise DegenerateComponent(f"component {component_id} has {n_cells} cell(s)")

    vid = np.full((2, r, r), -1, dtype=np.int64)
    vid[mask] = np.arange(n_cells)
    vertex_cells = np.nonzero(mask.reshape(-1))[0]

    ax = grid.spec.axis()
    inv_delta = np.zeros((2, r, r))
    inv_delta[mask] = 1.0 / grid.boundary_dist[mask]

    rows, cols, data = [], [], []
    for c in (0, 1):
        m = mask[c]
        centers = ax[None, :] + 1j * ax[:, None]
        for dy, dx in STENCIL:
            y0s, y0e = max(0, -dy), min(r, r - dy)
            x0s, x0e = max(0, -dx), min(r, r - dx)
            a = m[y0s:y0e, x0s:x0e]
            b = m[y0s + dy : y0e + dy, x0s + dx : x0e + dx]
            both = a & b
            if not both.any():
                continue
            iy, ix = np.nonzero(both)
            iy = iy + y0s
            ix = ix + x0s
            ca = centers[iy, ix]
            cb = centers[iy + dy, ix + dx]
            length = mc.chordal_same_chart(ca, cb)
            w = length * 0.5 * (inv_delta[c, iy, ix] + inv_delta[c, iy + dy, ix + dx])
            rows.append(vid[c, iy, ix])
            cols.append(vid[c, iy + dy, ix + dx])
            data.append(w)

    # stitch edges across the chart overlap; the correspondence is not an
    # involution, so keep every pair (canonicalized + deduplicated) to match
    # the merges the labeling performed
    corr = grid.correspondence.reshape(-1)
    flat_vid = vid.reshape(-1)
    src = np.nonzero((flat_vid >= 0) & (corr >= 0))[0]
    dst = corr[src]
    ok = flat_vid[dst] >= 0
    src, dst = src[ok], dst[ok]
    lo = np.minimum(src, dst)
    hi = np.maximum(src, dst)
    packed = np.unique(lo * (2 * r * r) + hi)
    src, dst = packed // (2 * r * r), packed % (2 * r * r)
    if src.size:
        sc, sy, sx = np.unravel_index(src, (2, r, r))
        dc, dy_, dx_ = np.unravel_index(dst, (2, r, r))
        va = ax[sx] + 1j * ax[sy]
        vb = ax[dx_] + 1j * ax[dy_]
        length = mc.chordal_mixed(va, sc.astype(bool), vb, dc.astype(bool))
        # corresponding centers may nearly coincide; keep weights positive
        length = np.maximum(length, 1e-9 * grid.spec.pitch)
        invd = inv_delta.reshape(-1)
        w = length * 0.5 * (invd[src] + invd[dst])
        rows.append(flat_vid[src])
        cols.append(flat_vid[dst])
        data.append(w)

    # No duplicate pairs can arise: stencil offsets are distinct within a
    # chart, stitch edges always cross charts, and only src < dst is emitted.
    rows = np.concatenate(rows) if rows else np.zeros(0, np.int64)
    cols = np.concatenate(cols) if cols else np.zeros(0, np.int64)
    data = np.concatenate(data) if data else np.zeros(0, float)
    mat = sparse.coo_matrix(
        (np.concatenate([data, data]),
         (np.concatenate([rows, cols]), np.concatenate([cols, rows]))),
        shape=(n_cells, n_cells),
    ).tocsr()
    return MetricGraph(component_id=component_id, vertex_cells=vertex_cells,
                       matrix=mat, grid=grid)


def single_source(graph: MetricGraph, cell_id: int):
    """Dijkstra distances and predecessors from one cell to all vertices."""
    src = graph.vertex_of_cell(cell_id)
    dist, pred = csgraph.dijkstra(
        graph.matrix, directed=True, indices=src, return_predecessors=True
    )
    return dist, pred


def multi_source_field(graph: MetricGraph, source_cells: np.ndarray):
    """Min distance to the nearest of several source cells, for every vertex.

    Returns (dist, attained_source_vertex); the graph is symmetric, so this
    equals per-vertex single-source minima in one Dijkstra sweep.
    """
    sources = np.array([graph.vertex_of_cell(int(c)) for c in source_cells])
    dist, _pred, srcs = csgraph.dijkstra(
        graph.matrix, directed=True, indices=sources,
        return_predecessors=True, min_only=True,
    )
    return dist, srcs


def _walk_path(pred: np.ndarray, src: int, dst: int) -> list[int]:
    path = [dst]
    v = dst
    while v != src:
        v = int(pred[v])
        if v < 0:
            raise DisconnectedPair("no predecessor chain; labeling bug")
        path.append(v)
    path.reverse()
    return path


def bounds_for(value: float) -> tuple[float, float]:
    """Bracket of the continuum hyperbolic distance implied by a graph value."""
    return value / (KOEBE * ANISOTROPY), value


def quasihyperbolic_distance(graph: MetricGraph, a_cell: int, b_cell: int) -> DistanceResult:
    """Shortest-path distance between two cells of one component."""
    va = graph.vertex_of_cell(a_cell)
    vb = graph.vertex_of_cell(b_cell)
    if va == vb:
        return DistanceResult(0.0, (a_cell,), 0.0, 0.0)
    dist, pred = csgraph.dijkstra(
        graph.matrix, directed=True, indices=va, return_predecessors=True
    )
    d = float(dist[vb])
    if not np.isfinite(d):
        raise DisconnectedPair(
            f"cells {a_cell} and {b_cell} disconnected inside component "
            f"{graph.component_id}"
        )
    path = tuple(int(graph.vertex_cells[v]) for v in _walk_path(pred, va, vb))
    lo, hi = bounds_for(d)
    return DistanceResult(d, path, lo, hi)


@dataclass(frozen=True)
class SchwarzPickRecord:
    pair_index: int
    d_before: float
    d_after: float
    tolerance_factor: float
    violation: bool


@dataclass(frozen=True)
class SchwarzPickReport:
    records: tuple
    n_pairs: int
    n_violations: int

    @property
    def violation_fraction(self) -> float:
        return self.n_violations / self.n_pairs if self.n_pairs else 0.0


def schwarz_pick_check(rmap: RationalMap, grid: SphereGrid,
                       pairs: list[tuple[ComplexPoint, ComplexPoint]]) -> SchwarzPickReport:
    """Distance-decreasing check d(f(a), f(b)) <= d(a, b) on the surrogate.

    Advisory: each pair gets the slack factor 1 + (4 / resolution) * path
    edge count, absorbing the discretization of both distances. Pairs must
    lie in one component and map into one component.
    """
    from .grid import locate

    graphs: dict[int, MetricGraph] = {}

    def graph_for(comp: int) -> MetricGraph:
        if comp not in graphs:
            graphs[comp] = build_metric_graph(grid, comp)
        return graphs[comp]

    records = []
    res = grid.resolution
    for i, (a, b) in enumerate(pairs):
        cell_a, comp_a = locate(grid, a)
        cell_b, comp_b = locate(grid, b)
        if comp_a != comp_b:
            raise ValueError(f"pair {i}: points lie in different components")
        fa, fb = mc.evaluate(rmap, a), mc.evaluate(rmap, b)
        cell_fa, comp_fa = locate(grid, fa)
        cell_fb, comp_fb = locate(grid, fb)
        if comp_fa != comp_fb:
            raise ValueError(f"pair {i}: images lie in different components")
        before = quasihyperbolic_distance(graph_for(comp_a), cell_a, cell_b)
        after = quasihyperbolic_distance(graph_for(comp_fa), cell_fa, cell_fb)
        tol = 1.0 + (4.0 / res) * max(len(before.path) - 1, 1)
        violation = after.value > before.value * tol
        records.append(SchwarzPickRecord(i, before.value, after.value, tol, violation))
    n_viol = sum(rec.violation for rec in records)
    return SchwarzPickReport(tuple(records), len(records), n_viol)

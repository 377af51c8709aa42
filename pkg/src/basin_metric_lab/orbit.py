"""Backward orbit trees: deduplicated preimage expansion inside a basin.

Levels are solved in batch (one simultaneous-iteration call per level and
chart), nodes are Newton-polished against their exact parent, deduplicated at
chordal tolerance 1e-8 via the R^3 sphere embedding, and tagged with the
component of their raster cell. Preimages landing in non-member cells are
discarded: they cannot serve as nearby orbit points and belong to other
Fatou regions or the Julia set.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from . import maps as mc
from . import metric as mt
from . import roots as rt
from .errors import BaseNotInBasin, NoOrbitNodeInComponent
from .grid import SphereGrid, locate
from .maps import ComplexPoint, RationalMap

DEDUP_TOL = 1e-8
PARENT_RESIDUAL_TOL = 1e-8
NODE_BUDGET = 2_000_000


@dataclass
class LevelStats:
    depth: int
    produced: int
    discarded_outside: int
    deduplicated: int
    kept: int


@dataclass
class OrbitTree:
    """Flat arrays over nodes, ordered by (depth, chart, re, im)."""

    base: ComplexPoint
    depth_requested: int
    depth_effective: int
    values: np.ndarray       # complex coordinates, one per node
    is_w: np.ndarray         # chart flags
    depths: np.ndarray       # int32
    parents: np.ndarray      # int64 index into nodes, -1 for the root
    residuals: np.ndarray    # chordal distance of map(node) to parent
    cell_ids: np.ndarray     # int64 raster cell of each node
    component_ids: np.ndarray  # int32 component of each node
    level_stats: list
    budget_exceeded: bool

    @property
    def n_nodes(self) -> int:
        return len(self.values)

    def point(self, i: int) -> ComplexPoint:
        v = complex(self.values[i])
        return ComplexPoint(v.real, v.imag,
                            mc.Chart.W if bool(self.is_w[i]) else mc.Chart.Z)

    def nodes_at_depth(self, depth: int) -> np.ndarray:
        return np.nonzero(self.depths <= depth)[0]


def _preimage_batch(rmap: RationalMap, values: np.ndarray, is_w: np.ndarray):
    """All preimages of each target, flattened, with parent indices.

    Targets given in chart W are solved through the reversed coefficients
    (Q - w P), keeping conditioning uniform near infinity. Preimages at
    infinity (leading-coefficient drops) come out as plane value inf and
    normalize to the w = 0 representation downstream.
    """
    n = rmap.degree
    p, q = rmap.padded()
    m = len(values)
    coeffs = np.empty((m, n + 1), dtype=np.complex128)
    zmask = ~is_w
    if zmask.any():
        coeffs[zmask] = p[None, :] - values[zmask, None] * q[None, :]
    if is_w.any():
        coeffs[is_w] = q[None, :] - values[is_w, None] * p[None, :]

    scale = np.max(np.abs(coeffs), axis=1)
    full = np.abs(coeffs[:, -1]) > 1e-12 * scale
    roots_out = []
    parents_out = []

    if full.any():
        idx = np.nonzero(full)[0]
        batch = coeffs[idx]
        roots = rt.aberth_batch(batch)
        roots = rt.newton_polish_batch(batch, roots)
        # re-anchor large roots on the reversed polynomial (root 1/x)
        big = np.abs(roots) > 1.0
        if big.any():
            rev = batch[:, ::-1].copy()
            inv = np.where(big, 1.0 / np.where(roots == 0, 1, roots), 0.2)
            inv = rt.newton_polish_batch(rev, inv)
            nz = big & (inv != 0)
            roots = np.where(nz, 1.0 / np.where(inv == 0, 1, inv), roots)
        roots_out.append(roots.ravel())
        parents_out.append(np.repeat(idx, n))

    # degree-dropped rows (target equals the map's value at infinity):
    # solve the trimmed polynomial per row; the drop itself contributes an
    # infinity preimage
    for i in np.nonzero(~full)[0]:
        c = coeffs[i]
        sc = float(np.max(np.abs(c)))
        k = n
        while k > 0 and abs(c[k]) <= 1e-12 * sc:
            k -= 1
        flat = [complex(np.inf, 0.0)]
        if k >= 1:
            solved = rt.solve_poly(c[: k + 1])
            flat += [root for root, mult in solved for _ in range(mult)]
        roots_out.append(np.asarray(flat, dtype=np.complex128))
        parents_out.append(np.full(len(flat), i, dtype=np.int64))

    if not roots_out:
        return np.zeros(0, np.complex128), np.zeros(0, np.int64)
    return np.concatenate(roots_out), np.concatenate(parents_out)


def build_backward_tree(rmap: RationalMap, p0: ComplexPoint, depth_max: int,
                        grid: SphereGrid, node_budget: int = NODE_BUDGET) -> OrbitTree:
    """Breadth-first backward orbit of p0 restricted to the basin raster.

    Expansion stops early (level-complete) if the next level would push the
    node count past the budget; the tree records the effective depth.
    """
    if not (1 <= depth_max <= 24):
        raise ValueError("depth_max must lie in [1, 24]")
    try:
        cell0, comp0 = locate(grid, p0)
    except Exception as exc:
        raise BaseNotInBasin(f"base point {p0}: {exc}") from exc

    pref = p0.preferred()
    values = np.array([pref.value], dtype=np.complex128)
    is_w = np.array([pref.chart is mc.Chart.W])
    depths = np.array([0], dtype=np.int32)
    parents = np.array([-1], dtype=np.int64)
    residuals = np.array([0.0])
    cells = np.array([cell0], dtype=np.int64)
    comps = np.array([comp0], dtype=np.int32)

    embedded = mc.embed_sphere(values, is_w)
    stats: list[LevelStats] = []
    truncated = False
    effective = 0

    r = grid.resolution
    comp_flat = grid.component_id.reshape(-1)
    mem_flat = grid.membership.reshape(-1)
    e, pitch = grid.spec.chart_extent, grid.spec.pitch

    for depth in range(1, depth_max + 1):
        level_mask = depths == depth - 1
        tv, tw = values[level_mask], is_w[level_mask]
        parent_idx = np.nonzero(level_mask)[0]
        produced_roots, local_parent = _preimage_batch(rmap, tv, tw)
        produced = len(produced_roots)
        if values.size + produced > node_budget:
            truncated = True
            break

        # normalize to the preferred chart (plane inf -> w = 0)
        cand_w = ~(np.abs(produced_roots) <= 1.0)
        cand_vals = produced_roots.copy()
        nz = cand_w & (produced_roots != 0)
        with np.errstate(divide="ignore"):
            cand_vals[nz] = 1.0 / produced_roots[nz]
        cand_vals[~np.isfinite(cand_vals)] = 0.0
        cand_parents = parent_idx[local_parent]

        # residual against the exact parent point
        img_vals, img_w = mc.evaluate_array(rmap, cand_vals, cand_w)
        res = mc.chordal_mixed(img_vals, img_w,
                               values[cand_parents], is_w[cand_parents])

        # locate cells; discard candidates in non-member cells
        ix = np.clip(((cand_vals.real + e) / pitch).astype(np.int64), 0, r - 1)
        iy = np.clip(((cand_vals.imag + e) / pitch).astype(np.int64), 0, r - 1)
        cand_cells = cand_w.astype(np.int64) * r * r + iy * r + ix
        inside = mem_flat[cand_cells]
        n_outside = int((~inside).sum())

        keep = inside & (res <= PARENT_RESIDUAL_TOL)
        cand_vals, cand_w = cand_vals[keep], cand_w[keep]
        cand_parents, cand_cells = cand_parents[keep], cand_cells[keep]
        res = res[keep]

        # deterministic order within the level
        order = np.lexsort((cand_vals.imag, cand_vals.real, cand_w))
        cand_vals, cand_w = cand_vals[order], cand_w[order]
        cand_parents, cand_cells, res = cand_parents[order], cand_cells[order], res[order]

        # dedup against existing nodes, then within the level (keep first)
        n_dedup = 0
        if len(cand_vals):
            cand_emb = mc.embed_sphere(cand_vals, cand_w)
            tree = cKDTree(embedded)
            close = tree.query_ball_point(cand_emb, r=DEDUP_TOL, workers=-1)
            fresh = np.array([len(c) == 0 for c in close])
            n_dedup += int((~fresh).sum())
            cand_vals, cand_w = cand_vals[fresh], cand_w[fresh]
            cand_parents, cand_cells, res = (
                cand_parents[fresh], cand_cells[fresh], res[fresh])
            cand_emb = cand_emb[fresh]
        if len(cand_vals):
            self_tree = cKDTree(cand_emb)
            pairs = self_tree.query_pairs(r=DEDUP_TOL, output_type="ndarray")
            drop = np.zeros(len(cand_vals), bool)
            if len(pairs):
                uf = {}

                def find(a):
                    while uf.get(a, a) != a:
                        uf[a] = uf.get(uf[a], uf[a])
                        a = uf[a]
                    return a

                for a, b in np.sort(pairs, axis=1):
                    ra, rb = find(int(a)), find(int(b))
                    if ra != rb:
                        uf[max(ra, rb)] = min(ra, rb)
                for i in range(len(cand_vals)):
                    if find(i) != i:
                        drop[i] = True
                n_dedup += int(drop.sum())
            keep2 = ~drop
            cand_vals, cand_w = cand_vals[keep2], cand_w[keep2]
            cand_parents, cand_cells, res = (
                cand_parents[keep2], cand_cells[keep2], res[keep2])
            cand_emb = cand_emb[keep2]

        kept = len(cand_vals)
        stats.append(LevelStats(depth, produced, n_outside, n_dedup, kept))
        if kept == 0:
            effective = depth
            continue

        values = np.concatenate([values, cand_vals])
        is_w = np.concatenate([is_w, cand_w])
        depths = np.concatenate([depths, np.full(kept, depth, np.int32)])
        parents = np.concatenate([parents, cand_parents])
        residuals = np.concatenate([residuals, res])
        cells = np.concatenate([cells, cand_cells])
        comps = np.concatenate([comps, comp_flat[cand_cells].astype(np.int32)])
        embedded = np.concatenate([embedded, cand_emb])
        effective = depth

    return OrbitTree(
        base=p0, depth_requested=depth_max, depth_effective=effective,
        values=values, is_w=is_w, depths=depths, parents=parents,
        residuals=residuals, cell_ids=cells, component_ids=comps,
        level_stats=stats, budget_exceeded=truncated,
    )


def nearest_orbit_point(z0: ComplexPoint, tree: OrbitTree, graph: mt.MetricGraph,
                        grid: SphereGrid, max_depth: int | None = None):
    """Closest tree node to z0 in the component's shortest-path metric.

    One single-source sweep from z0's cell prices every node; ties break by
    lower depth, then lexicographic cell index. Returns (node index,
    DistanceResult).
    """
    cell0, comp0 = locate(grid, z0)
    if comp0 != graph.component_id:
        raise ValueError(f"z0 lies in component {comp0}, graph covers {graph.component_id}")
    sel = tree.component_ids == comp0
    if max_depth is not None:
        sel &= tree.depths <= max_depth
    cand = np.nonzero(sel)[0]
    if cand.size == 0:
        raise NoOrbitNodeInComponent(
            f"no tree node in component {comp0} at depth <= {max_depth}"
        )
    dist, pred = mt.single_source(graph, cell0)
    verts = np.searchsorted(graph.vertex_cells, tree.cell_ids[cand])
    dvals = dist[verts]
    finite = np.isfinite(dvals)
    if not finite.any():
        raise NoOrbitNodeInComponent(
            f"tree nodes in component {comp0} unreachable (labeling bug?)"
        )
    cand, verts, dvals = cand[finite], verts[finite], dvals[finite]
    keys = np.lexsort((cand, tree.cell_ids[cand], tree.depths[cand], dvals))
    best = keys[0]
    node = int(cand[best])
    value = float(dvals[best])
    path = tuple(int(graph.vertex_cells[v])
                 for v in mt._walk_path(pred, graph.vertex_of_cell(cell0), int(verts[best])))
    lo, hi = mt.bounds_for(value)
    return node, mt.DistanceResult(value, path, lo, hi)


def tree_csv_rows(tree: OrbitTree) -> list[tuple]:
    """(node_id, parent_id, depth, re, im, chart, component_id, residual)."""
    rows = []
    for i in range(tree.n_nodes):
        rows.append((
            i, int(tree.parents[i]), int(tree.depths[i]),
            float(tree.values[i].real), float(tree.values[i].imag),
            "W" if tree.is_w[i] else "Z",
            int(tree.component_ids[i]), float(tree.residuals[i]),
        ))
    return rows

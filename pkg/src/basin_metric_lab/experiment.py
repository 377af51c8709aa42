"""Scenario orchestration: basin, tree, per-component distance statistics.

The measured quantity per component is the covering radius of the backward
orbit: the maximum over sample points of the shortest-path distance to the
nearest tree node. It is non-increasing in tree depth (node sets are nested)
and its convergence across depth and resolution is the experiment's output.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import __version__
from . import greens as gn
from . import grid as gd
from . import maps as mc
from . import metric as mt
from . import orbit as ob
from .config import ScenarioConfig
from .errors import BaseNotInBasin, NotAttracting
from .grid import GridSpec, SphereGrid, locate
from .maps import ComplexPoint, FixedClass

EXCLUSION_CELLS = 2      # samples keep this many cells away from the boundary
TOP_COMPONENTS = 10      # studied components in the per-component scenario
BAND_LEVELS = 6          # level bands scored in the coverage check
OFFSET_DEFAULT = 0.1     # base-point offset when the fixed point is its only preimage


@dataclass
class ComponentResult:
    component_id: int
    cells: int
    samples_used: int
    covering_radius: float
    mean_distance: float
    unresolved: int
    depth_series: list      # (depth, covering_radius, unresolved)
    sample_cells: np.ndarray
    sample_dists: np.ndarray
    sample_nodes: np.ndarray


@dataclass
class ExperimentReport:
    config: ScenarioConfig
    scenario_id: str
    version: str
    fixed_points: list
    attracting_point: ComplexPoint
    base_point: ComplexPoint
    base_policy: str
    grid: SphereGrid
    tree: ob.OrbitTree
    components: list
    resolution_series: list          # (resolution, comp1 radius, max radius)
    coverage: gn.CoverageReport | None
    coverage_levels: tuple | None
    coverage_t0: float | None
    decomposition: gn.AnnulusDecomposition | None = None
    notes: list = field(default_factory=list)

    @property
    def max_covering_radius(self) -> float:
        vals = [c.covering_radius for c in self.components if np.isfinite(c.covering_radius)]
        return max(vals) if vals else float("nan")


def resolve_attracting_point(cfg: ScenarioConfig, fps) -> ComplexPoint:
    if cfg.scenario == "basin-of-infinity":
        inf_fp = [fp for fp in fps if fp.location.is_infinity]
        if not inf_fp or inf_fp[0].klass not in (FixedClass.ATTRACTING,
                                                 FixedClass.SUPERATTRACTING):
            raise NotAttracting("infinity is not attracting for this map")
        return ComplexPoint.infinity()
    if isinstance(cfg.attracting_point, ComplexPoint):
        target = cfg.attracting_point
        for fp in fps:
            if fp.location.chordal(target) <= 1e-6:
                return fp.location
        raise NotAttracting(f"no fixed point within 1e-6 of {target}")
    attracting = [fp for fp in fps
                  if fp.klass in (FixedClass.ATTRACTING, FixedClass.SUPERATTRACTING)]
    if not attracting:
        raise NotAttracting("map has no attracting fixed point")
    return attracting[0].location


def _offset_base(grid: SphereGrid, p: ComplexPoint, radius: float) -> ComplexPoint:
    """p + radius * (unit step toward the deepest neighboring cell), in p's
    preferred chart; the radius halves until the point lands in the basin."""
    pref = p.preferred()
    chart_idx, iy, ix = grid.cell_of_point(pref)
    r = grid.resolution
    best, best_depth = None, -1.0
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            if dy == 0 and dx == 0:
                continue
            jy, jx = iy + dy, ix + dx
            if not (0 <= jy < r and 0 <= jx < r):
                continue
            if not grid.membership[chart_idx, jy, jx]:
                continue
            depth = grid.boundary_dist[chart_idx, jy, jx]
            if depth > best_depth:
                best_depth = depth
                best = (dy, dx)
    if best is None:
        best = (0, 1)
    direction = complex(best[1], best[0])
    direction /= abs(direction)
    for _ in range(6):
        cand = ComplexPoint(
            pref.re + radius * direction.real,
            pref.im + radius * direction.imag,
            pref.chart,
        ).preferred()
        try:
            locate(grid, cand)
            return cand
        except Exception:
            radius *= 0.5
    raise BaseNotInBasin(f"offset base from {p} never landed in the basin")


def resolve_base_point(cfg: ScenarioConfig, rmap, grid: SphereGrid,
                       p: ComplexPoint) -> tuple[ComplexPoint, str]:
    spec = cfg.base_point
    if isinstance(spec, ComplexPoint):
        return spec, "explicit"
    if spec == "fixed-point":
        return p, "fixed-point"
    if isinstance(spec, str) and spec.startswith("offset:"):
        radius = float(spec.split(":", 1)[1])
        return _offset_base(grid, p, radius), spec
    # auto: use p itself when it has another preimage in its own component,
    # else step off by the default offset
    _, p_comp = locate(grid, p)
    for q, _mult in mc.preimages(rmap, p):
        if q.chordal(p) <= ob.DEDUP_TOL:
            continue
        try:
            _, comp = locate(grid, q)
        except Exception:
            continue
        if comp == p_comp:
            return p, "auto:fixed-point"
    return _offset_base(grid, p, OFFSET_DEFAULT), f"auto:offset:{OFFSET_DEFAULT}"


def studied_components(grid: SphereGrid, scenario: str) -> list[int]:
    if scenario in ("finite-basin", "basin-of-infinity"):
        return [1]
    sizes = grid.component_sizes
    order = sorted(range(1, grid.n_components + 1), key=lambda c: (-int(sizes[c]), c))
    return order[:TOP_COMPONENTS]


def draw_samples(grid: SphereGrid, comp: int, count: int,
                 rng: np.random.Generator) -> np.ndarray:
    """Rejection-sample cell ids uniformly over a component's interior cells.

    Cells within EXCLUSION_CELLS of the membership boundary are rejected
    (the boundary-distance field is unreliable at sub-cell scale there), as
    are cells outside their chart's preferred region (each sphere point is
    sampled through exactly one representation).
    """
    r = grid.resolution
    comp_flat = grid.component_id.reshape(-1)
    edt_flat = grid.edt_chart.reshape(-1)
    pref_flat = grid.preferred_mask().reshape(-1)
    pitch = grid.spec.pitch
    eligible = (comp_flat == comp) & (edt_flat >= EXCLUSION_CELLS * pitch) & pref_flat
    if not eligible.any():
        return np.zeros(0, dtype=np.int64)
    out = np.empty(count, dtype=np.int64)
    got = 0
    while got < count:
        draw = rng.integers(0, 2 * r * r, size=4096)
        ok = eligible[draw]
        take = draw[ok][: count - got]
        out[got : got + len(take)] = take
        got += len(take)
    return out


def _component_study(grid: SphereGrid, tree: ob.OrbitTree, comp: int,
                     samples: np.ndarray, depth_max: int) -> ComponentResult:
    graph = mt.build_metric_graph(grid, comp)
    sample_verts = np.searchsorted(graph.vertex_cells, samples)

    in_comp = tree.component_ids == comp
    node_idx = np.nonzero(in_comp)[0]
    node_cells = tree.cell_ids[node_idx]
    node_depths = tree.depths[node_idx]

    # map each node cell to its best node (lowest depth, then node index)
    cell_best: dict[int, int] = {}
    for j in np.lexsort((node_idx, node_depths))[::-1]:
        cell_best[int(node_cells[j])] = int(node_idx[j])

    depth_series = []
    dists = np.full(len(samples), np.inf)
    nodes = np.full(len(samples), -1, dtype=np.int64)
    prev_n_sources = -1
    for depth in range(0, depth_max + 1):
        sel = node_depths <= depth
        cells = np.unique(node_cells[sel])
        if len(cells) == 0:
            depth_series.append((depth, float("inf"), len(samples)))
            continue
        if len(cells) != prev_n_sources:
            dist_field, src_field = mt.multi_source_field(graph, cells)
            prev_n_sources = len(cells)
            dists = dist_field[sample_verts]
            src_cells = graph.vertex_cells[src_field[sample_verts]]
            nodes = np.array([cell_best.get(int(c), -1) for c in src_cells])
        unresolved = int((~np.isfinite(dists)).sum())
        radius = float(np.max(dists[np.isfinite(dists)])) if (np.isfinite(dists)).any() else float("inf")
        depth_series.append((depth, radius, unresolved))

    finite = np.isfinite(dists)
    return ComponentResult(
        component_id=comp,
        cells=int(grid.component_sizes[comp]),
        samples_used=len(samples),
        covering_radius=float(np.max(dists[finite])) if finite.any() else float("inf"),
        mean_distance=float(np.mean(dists[finite])) if finite.any() else float("nan"),
        unresolved=int((~finite).sum()),
        depth_series=depth_series,
        sample_cells=samples,
        sample_dists=dists,
        sample_nodes=nodes,
    )


def _run_once(cfg: ScenarioConfig, spec: GridSpec, with_coverage: bool):
    rmap = cfg.rmap
    fps = mc.fixed_points(rmap)
    p = resolve_attracting_point(cfg, fps)
    grid = gd.compute_basin(rmap, p, spec)
    grid = gd.label_components(grid)
    grid = gd.boundary_distance(grid)

    p0, policy = resolve_base_point(cfg, rmap, grid, p)
    tree = ob.build_backward_tree(rmap, p0, cfg.depth, grid)

    coverage = None
    levels = None
    t0 = None
    dec = None
    if with_coverage and rmap.is_polynomial and cfg.scenario == "basin-of-infinity":
        field = gn.greens_function(rmap, grid)
        base_g = gn.greens_at(rmap, p0, spec.max_iter)
        t0 = gn.default_top_level(field, rmap, base_g=base_g)
        dec = gn.annulus_decomposition(field, t0, BAND_LEVELS)
        coverage = gn.verify_annulus_coverage(dec, tree.cell_ids, tree.depths,
                                              base_g=base_g)
        levels = dec.levels

    comps = studied_components(grid, cfg.scenario)
    rng = np.random.default_rng(cfg.seed)
    results = []
    for comp in comps:
        samples = draw_samples(grid, comp, cfg.samples, rng)
        if len(samples) == 0 or grid.component_sizes[comp] < 2:
            results.append(ComponentResult(
                component_id=comp, cells=int(grid.component_sizes[comp]),
                samples_used=0, covering_radius=float("nan"),
                mean_distance=float("nan"), unresolved=0, depth_series=[],
                sample_cells=np.zeros(0, np.int64),
                sample_dists=np.zeros(0), sample_nodes=np.zeros(0, np.int64),
            ))
            continue
        results.append(_component_study(grid, tree, comp, samples,
                                        tree.depth_effective))
    return fps, p, grid, p0, policy, tree, results, coverage, levels, t0, dec


def run_experiment(cfg: ScenarioConfig) -> ExperimentReport:
    """Full pipeline for one scenario, including the coarse-grid repeat."""
    spec = cfg.grid_spec()
    (fps, p, grid, p0, policy, tree, results,
     coverage, levels, t0, dec) = _run_once(cfg, spec, with_coverage=True)

    def radius_of(rs, comp):
        for c in rs:
            if c.component_id == comp:
                return c.covering_radius
        return float("nan")

    resolution_series = []
    if cfg.resolution // 2 >= 64:
        coarse_spec = GridSpec(resolution=cfg.resolution // 2,
                               epsilon_attract=cfg.epsilon_attract,
                               max_iter=cfg.max_iter)
        try:
            coarse = _run_once(cfg, coarse_spec, with_coverage=False)
            coarse_results = coarse[6]
            resolution_series.append((
                cfg.resolution // 2,
                radius_of(coarse_results, 1),
                max((c.covering_radius for c in coarse_results
                     if np.isfinite(c.covering_radius)), default=float("nan")),
            ))
        except Exception:  # the coarse repeat is diagnostic only
            resolution_series.append((cfg.resolution // 2, float("nan"), float("nan")))
    resolution_series.append((
        cfg.resolution,
        radius_of(results, 1),
        max((c.covering_radius for c in results
             if np.isfinite(c.covering_radius)), default=float("nan")),
    ))

    return ExperimentReport(
        config=cfg,
        scenario_id=cfg.scenario,
        version=__version__,
        fixed_points=fps,
        attracting_point=p,
        base_point=p0,
        base_policy=policy,
        grid=grid,
        tree=tree,
        components=results,
        resolution_series=resolution_series,
        coverage=coverage,
        coverage_levels=levels,
        coverage_t0=t0,
        decomposition=dec,
    )

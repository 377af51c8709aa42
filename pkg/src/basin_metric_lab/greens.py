"""Escape potential (Green's function) of the basin of infinity and its
level-set decomposition into bands.

For a polynomial of degree d, G(z) = lim d^-n log|f^n(z)| satisfies
G(f(z)) = d G(z); stopping the iteration at the first |f^n(z)| > R gives an
absolute error below log(1 + C/R) / d^n, under 1e-6 for R = 1e8. Level sets
{G > t0 / d^n} are the successive preimages of the top disk around infinity,
and the open bands between consecutive levels decompose the basin raster.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import maps as mc
from .errors import BadThreshold, NotPolynomial
from .grid import SphereGrid, merged_labels
from .maps import ComplexPoint, RationalMap

ESCAPE_RADIUS = 1e8
SMALL_AREA_CUTOFF = 25  # band components below this many cells are not scored


def greens_values(rmap: RationalMap, vals: np.ndarray, is_w: np.ndarray,
                  max_iter: int, escape_radius: float = ESCAPE_RADIUS) -> np.ndarray:
    """Pointwise escape potential for arrays of sphere points.

    Points whose orbit does not exceed the escape radius within max_iter
    get 0 (bounded or slow orbits).
    """
    if not rmap.is_polynomial:
        raise NotPolynomial("escape potential requires a polynomial map")
    d = rmap.degree
    if d < 2:
        raise NotPolynomial("degree must be >= 2")
    pcoef = rmap.num / rmap.den[0]

    vals = np.asarray(vals, dtype=np.complex128)
    is_w = np.asarray(is_w, dtype=bool)
    z = vals.copy()
    if is_w.any():
        with np.errstate(divide="ignore"):
            z[is_w] = 1.0 / vals[is_w]
    out = np.zeros(z.shape, dtype=np.float64)
    alive = np.arange(z.size)
    zf = z.ravel().copy()
    # exact infinity escapes immediately
    inf0 = ~np.isfinite(zf)
    out.reshape(-1)[inf0] = np.inf
    keep = ~inf0
    alive, zf = alive[keep], zf[keep]
    gone0 = np.abs(zf) > escape_radius
    if gone0.any():
        out.reshape(-1)[alive[gone0]] = np.log(np.abs(zf[gone0]))
        alive, zf = alive[~gone0], zf[~gone0]

    scale = 1.0
    for _ in range(max_iter):
        if alive.size == 0:
            break
        scale *= d
        zf = _horner(pcoef, zf)
        gone = np.abs(zf) > escape_radius
        if gone.any():
            out.reshape(-1)[alive[gone]] = np.log(np.abs(zf[gone])) / scale
            keep = ~gone
            alive, zf = alive[keep], zf[keep]
    return out


def _horner(coeffs: np.ndarray, x: np.ndarray) -> np.ndarray:
    out = np.full(x.shape, coeffs[-1], dtype=np.complex128)
    for k in range(len(coeffs) - 2, -1, -1):
        out = out * x + coeffs[k]
    return out


def greens_at(rmap: RationalMap, point: ComplexPoint, max_iter: int = 2000) -> float:
    return float(greens_values(
        rmap, np.array([point.value]), np.array([point.chart is mc.Chart.W]), max_iter
    )[0])


@dataclass(frozen=True)
class GreensField:
    """Escape potential sampled at cell centers of a basin-of-infinity grid.

    Values are zeroed outside membership so that G > 0 holds exactly on
    member cells (the carved dust proxy keeps its bounded-orbit value 0).
    """

    grid: SphereGrid
    values: np.ndarray      # (2, r, r) float64
    escape_radius: float
    degree: int


def greens_function(rmap: RationalMap, grid: SphereGrid,
                    escape_radius: float = ESCAPE_RADIUS) -> GreensField:
    """Escape potential over the basin-of-infinity raster."""
    if not rmap.is_polynomial:
        raise NotPolynomial("Green's field requires a polynomial map")
    r = grid.resolution
    ax = grid.spec.axis()
    centers = (ax[None, :] + 1j * ax[:, None]).ravel()
    vals = np.concatenate([centers, centers])
    isw = np.concatenate([np.zeros(r * r, bool), np.ones(r * r, bool)])
    g = greens_values(rmap, vals, isw, grid.spec.max_iter, escape_radius)
    g = g.reshape(2, r, r)
    g[~grid.membership] = 0.0
    return GreensField(grid=grid, values=g, escape_radius=escape_radius,
                       degree=rmap.degree)


def default_top_level(field: GreensField, rmap: RationalMap,
                      base_g: float | None = None) -> float:
    """Default threshold for the top level set.

    Half the maximum potential over cells at least 5 cells away from the
    non-escaping set, raised above every critical point's potential (so the
    top disk is unbranched), and capped below the base point's potential
    when one is supplied (the backward tree must start inside the top disk).
    """
    g = field.values
    finite = np.where(np.isfinite(g), g, 0.0)
    nonesc = g == 0.0
    if nonesc.any():
        far = np.ones_like(nonesc)
        for c in (0, 1):
            if nonesc[c].any():
                far[c] = ndimage.distance_transform_edt(~nonesc[c]) >= 5.0
            # a chart with no zero cells is entirely far
        pool = finite[far & ~nonesc]
    else:
        pool = finite[finite > 0]
    if pool.size == 0:
        raise BadThreshold("no escaping cells available to set the top level")
    t0 = 0.5 * float(pool.max())

    crit_g = 0.0
    for cp in mc.critical_points(rmap):
        if cp.is_infinity:
            continue
        gc = greens_at(rmap, cp, field.grid.spec.max_iter)
        crit_g = max(crit_g, gc)
    if crit_g > 0:
        t0 = max(t0, crit_g * 1.000001)
    if base_g is not None and np.isfinite(base_g):
        t0 = min(t0, 0.8 * base_g)
    return t0


@dataclass(frozen=True)
class AnnulusDecomposition:
    """Level thresholds and labeled band components of the escape potential.

    Band k (1-based) is the open set {t_k < G < t_(k-1)}; its connected
    pieces carry globally unique ids in band_comp. Cells exactly on a level
    value fall in the band below (closure convention for the inner edge).
    """

    grid: SphereGrid
    t0: float
    levels: tuple           # t_0 .. t_(n_max), descending
    n_max: int
    band_index: np.ndarray  # (2, r, r) int16; 0 = no band, k = band k
    band_comp: np.ndarray   # (2, r, r) int32; global component ids, 0 = none
    comp_sizes: np.ndarray  # cell count per global id ([0] unused)
    comp_band: np.ndarray   # band k per global id ([0] unused)

    def components_of_band(self, k: int) -> list[int]:
        return [i for i in range(1, len(self.comp_sizes))
                if self.comp_band[i] == k]


def annulus_decomposition(field: GreensField, t0: float, n_max: int) -> AnnulusDecomposition:
    """Threshold the potential into n_max bands below the top level t0.

    The top set {G > t0} must be one raster component containing infinity.
    """
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    if not (t0 > 0):
        raise BadThreshold(f"t0 = {t0} must be positive")
    grid = field.grid
    g = field.values
    d = field.degree
    levels = tuple(t0 / d**n for n in range(n_max + 1))

    top = g > t0
    if not top.any():
        raise BadThreshold(f"top level set {{G > {t0:g}}} is empty")
    top_labels = merged_labels(top, grid.correspondence)
    inf_cell = grid.cell_of_point(ComplexPoint.infinity())
    if not top[inf_cell]:
        raise BadThreshold("top level set does not contain infinity's cell")
    if len(np.unique(top_labels[top])) != 1:
        raise BadThreshold("top level set is disconnected; raise t0")

    r = grid.resolution
    band_index = np.zeros((2, r, r), dtype=np.int16)
    band_comp = np.zeros((2, r, r), dtype=np.int32)
    sizes = [0]
    bands = [0]
    next_id = 1
    for k in range(1, n_max + 1):
        mask = (g > levels[k]) & (g < levels[k - 1])
        band_index[mask] = k
        if not mask.any():
            continue
        merged = merged_labels(mask, grid.correspondence)
        roots = np.unique(merged[mask])
        flat = merged.reshape(-1)
        for root in sorted(int(x) for x in roots):
            cells = flat == root
            band_comp.reshape(-1)[cells] = next_id
            sizes.append(int(cells.sum()))
            bands.append(k)
            next_id += 1
    return AnnulusDecomposition(
        grid=grid, t0=t0, levels=levels, n_max=n_max,
        band_index=band_index, band_comp=band_comp,
        comp_sizes=np.array(sizes, dtype=np.int64),
        comp_band=np.array(bands, dtype=np.int16),
    )


@dataclass(frozen=True)
class CoverageReport:
    """Which band components hold a backward-orbit node, per level."""

    per_level: tuple        # (level k, total scored, covered, fraction)
    comp_min_depth: np.ndarray  # per global id: min node depth hitting it, -1 if none
    scored: np.ndarray      # per global id: bool, size >= cutoff
    comp_band: np.ndarray   # band k per global id
    base_inside_top: bool
    off_band_nodes: int     # nodes whose cell carries no band (top set or G=0)

    @property
    def total_fraction(self) -> float:
        tot = sum(rec[1] for rec in self.per_level)
        cov = sum(rec[2] for rec in self.per_level)
        return cov / tot if tot else 1.0

    def fractions_at_depth(self, depth: int) -> list[tuple[int, int, int, float]]:
        """Coverage per level counting only nodes of depth <= depth."""
        out = []
        for k, _total, _cov, _f in self.per_level:
            ids = [i for i in range(1, len(self.scored))
                   if self.scored[i] and self.comp_band[i] == k]
            tot = len(ids)
            cov = sum(1 for i in ids
                      if 0 <= self.comp_min_depth[i] <= depth)
            out.append((k, tot, cov, cov / tot if tot else 1.0))
        return out


def verify_annulus_coverage(dec: AnnulusDecomposition, node_cells: np.ndarray,
                            node_depths: np.ndarray,
                            base_g: float | None = None) -> CoverageReport:
    """Check that every scored band component contains an orbit-tree node.

    Components smaller than SMALL_AREA_CUTOFF cells are recorded but not
    scored (sub-resolution pieces cannot be labeled reliably).
    """
    n_ids = len(dec.comp_sizes)
    flat_comp = dec.band_comp.reshape(-1)
    node_cells = np.asarray(node_cells, dtype=np.int64)
    node_depths = np.asarray(node_depths, dtype=np.int64)
    gids = flat_comp[node_cells]
    off_band = int((gids == 0).sum())
    hit = gids > 0
    min_depth = np.full(n_ids, np.iinfo(np.int64).max, dtype=np.int64)
    np.minimum.at(min_depth, gids[hit], node_depths[hit])
    min_depth[min_depth == np.iinfo(np.int64).max] = -1

    scored = dec.comp_sizes >= SMALL_AREA_CUTOFF
    scored[0] = False
    per_level = []
    for k in range(1, dec.n_max + 1):
        ids = [i for i in range(1, n_ids) if scored[i] and dec.comp_band[i] == k]
        tot = len(ids)
        cov = sum(1 for i in ids if min_depth[i] >= 0)
        per_level.append((k, tot, cov, cov / tot if tot else 1.0))

    return CoverageReport(
        per_level=tuple(per_level),
        comp_min_depth=min_depth,
        scored=scored,
        comp_band=dec.comp_band,
        base_inside_top=(base_g is None or base_g > dec.t0),
        off_band_nodes=off_band,
    )


def contour_rows(dec: AnnulusDecomposition) -> list[tuple[int, int, str, float, float]]:
    """Boundary cells of every band component: (level, component, chart, re, im)."""
    rows = []
    grid = dec.grid
    ax = grid.spec.axis()
    struct = np.ones((3, 3), dtype=bool)
    for gid in range(1, len(dec.comp_sizes)):
        k = int(dec.comp_band[gid])
        for c in (0, 1):
            mask = dec.band_comp[c] == gid
            if not mask.any():
                continue
            interior = ndimage.binary_erosion(mask, structure=struct)
            by, bx = np.nonzero(mask & ~interior)
            chart = "Z" if c == 0 else "W"
            for iy, ix in zip(by.tolist(), bx.tolist()):
                rows.append((k, gid, chart, float(ax[ix]), float(ax[iy])))
    return rows

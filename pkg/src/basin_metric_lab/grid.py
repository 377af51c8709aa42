"""Two-chart rasterization of attracting basins.

Each chart is a square raster over [-1.5, 1.5]^2 in its own coordinate (z or
w = 1/z); together the charts cover the sphere with an overlap band
2/3 <= |coord| <= 3/2 plus the square corners. Cells are classified by their
center's orbit. Cross-chart consistency is handled by a correspondence table
mapping each cell with |center| >= 2/3 to the other-chart cell containing the
inverted center.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from . import maps as mc
from .errors import (
    AttractorNotMember,
    NotAttracting,
    NotInBasin,
    NumericalError,
)
from .maps import Chart, ComplexPoint, RationalMap

CHART_EXTENT = 1.5
OVERLAP_INNER = 2.0 / 3.0


@dataclass(frozen=True)
class GridSpec:
    resolution: int = 512
    chart_extent: float = CHART_EXTENT
    epsilon_attract: float = 1e-3
    max_iter: int = 2000

    def __post_init__(self):
        if not (64 <= self.resolution <= 8192):
            raise ValueError(f"resolution {self.resolution} outside [64, 8192]")
        if not (0.0 < self.epsilon_attract < 0.1):
            raise ValueError("epsilon_attract must lie in (0, 0.1)")
        if not (50 <= self.max_iter <= 100000):
            raise ValueError("max_iter outside [50, 100000]")
        if self.chart_extent != CHART_EXTENT:
            raise ValueError("chart_extent is fixed at 1.5")

    @property
    def pitch(self) -> float:
        return 2.0 * self.chart_extent / self.resolution

    def axis(self) -> np.ndarray:
        k = np.arange(self.resolution, dtype=np.float64)
        return -self.chart_extent + self.pitch * (k + 0.5)


@dataclass(frozen=True)
class SphereGrid:
    """Immutable basin raster; labeling and distance stages return new grids."""

    spec: GridSpec
    attracting_point: ComplexPoint
    membership: np.ndarray          # (2, res, res) bool; axis 0: chart Z, W
    component_id: np.ndarray | None = None   # (2, res, res) int32; 0 = none
    n_components: int = 0
    component_sizes: np.ndarray | None = None  # index by label, [0] unused
    boundary_dist: np.ndarray | None = None    # chordal-scaled, member cells
    edt_chart: np.ndarray | None = None        # chart-unit EDT, member cells
    correspondence: np.ndarray = field(default=None, repr=False)  # (2,res,res) int64, -1 = none

    @property
    def resolution(self) -> int:
        return self.spec.resolution

    # --- cell geometry -------------------------------------------------
    def centers(self, chart_idx: int) -> np.ndarray:
        ax = self.spec.axis()
        return ax[None, :] + 1j * ax[:, None]  # [iy, ix]

    def cell_id(self, chart_idx: int, iy: int, ix: int) -> int:
        r = self.resolution
        return chart_idx * r * r + iy * r + ix

    def cell_of_id(self, cid: int) -> tuple[int, int, int]:
        r = self.resolution
        chart_idx, rem = divmod(int(cid), r * r)
        iy, ix = divmod(rem, r)
        return chart_idx, iy, ix

    def cell_center(self, cid: int) -> ComplexPoint:
        chart_idx, iy, ix = self.cell_of_id(cid)
        ax = self.spec.axis()
        return ComplexPoint(float(ax[ix]), float(ax[iy]),
                            Chart.W if chart_idx else Chart.Z)

    def cell_of_point(self, point: ComplexPoint) -> tuple[int, int, int]:
        """Cell containing the point in its preferred chart."""
        pref = point.preferred()
        chart_idx = 1 if pref.chart is Chart.W else 0
        e, pitch, r = self.spec.chart_extent, self.spec.pitch, self.resolution
        ix = min(max(int((pref.re + e) / pitch), 0), r - 1)
        iy = min(max(int((pref.im + e) / pitch), 0), r - 1)
        return chart_idx, iy, ix

    def member_count(self) -> int:
        return int(self.membership.sum())

    def local_scale(self, chart_idx: int) -> np.ndarray:
        """Chordal conversion factor 2 / (1 + |coord|^2) at cell centers."""
        c = self.centers(chart_idx)
        return 2.0 / (1.0 + c.real**2 + c.imag**2)

    def preferred_mask(self) -> np.ndarray:
        """Cells whose center lies in their own chart's preferred region,
        so every sphere point is owned by exactly one cell."""
        r = self.resolution
        out = np.zeros((2, r, r), dtype=bool)
        for c in (0, 1):
            mod = np.abs(self.centers(c))
            out[c] = (mod <= 1.0) if c == 0 else (mod < 1.0)
        return out

    def spherical_cell_area(self, chart_idx: int) -> np.ndarray:
        return (self.local_scale(chart_idx) * self.spec.pitch) ** 2

    def component_cells(self, comp: int) -> np.ndarray:
        """Global cell ids belonging to a component, ascending."""
        if self.component_id is None:
            raise ValueError("grid is not labeled")
        return np.nonzero(self.component_id.reshape(-1) == comp)[0]

    def boundary_at(self, cid: int) -> float:
        """Boundary distance of a member cell; raises for non-members."""
        if self.boundary_dist is None:
            raise ValueError("boundary distances not computed")
        chart_idx, iy, ix = self.cell_of_id(cid)
        if not self.membership[chart_idx, iy, ix]:
            raise NotInBasin(f"cell {cid} is not a member; distance undefined")
        return float(self.boundary_dist[chart_idx, iy, ix])


def _build_correspondence(spec: GridSpec) -> np.ndarray:
    """For each cell with |center| >= 2/3: flat index of the other-chart cell
    containing the inverted center; -1 where no counterpart exists."""
    r = spec.resolution
    ax = spec.axis()
    centers = ax[None, :] + 1j * ax[:, None]
    mod = np.abs(centers)
    table = np.full((2, r, r), -1, dtype=np.int64)
    e, pitch = spec.chart_extent, spec.pitch
    sel = mod >= OVERLAP_INNER
    inv = np.zeros_like(centers)
    inv[sel] = 1.0 / centers[sel]
    ix = np.floor((inv.real + e) / pitch).astype(np.int64)
    iy = np.floor((inv.imag + e) / pitch).astype(np.int64)
    ok = sel & (ix >= 0) & (ix < r) & (iy >= 0) & (iy < r)
    flat = iy * r + ix
    for chart_idx in (0, 1):
        other = 1 - chart_idx
        t = np.full((r, r), -1, dtype=np.int64)
        t[ok] = other * r * r + flat[ok]
        table[chart_idx] = t
    return table


def _target_reps(p: ComplexPoint) -> list[tuple[int, complex]]:
    """(chart_idx, coordinate) representations of p usable for ball tests.

    Representations with |coord| > 3 are dropped: no normalized orbit point
    in that chart can come within epsilon < 0.1 of the target.
    """
    reps = []
    if p.is_infinity:
        reps.append((1, 0j))
        return reps
    z = p.as_plane()
    if abs(z) <= 3.0:
        reps.append((0, z))
    if z != 0 and abs(1.0 / z) <= 3.0:
        reps.append((1, 1.0 / z))
    return reps


def _within_ball(vals, is_w, reps, eps) -> np.ndarray:
    hit = np.zeros(vals.shape, dtype=bool)
    for chart_idx, t in reps:
        sel = is_w if chart_idx == 1 else ~is_w
        if not sel.any():
            continue
        v = vals[sel]
        d2 = 4.0 * np.abs(v - t) ** 2
        bound = eps * eps * (1.0 + np.abs(v) ** 2) * (1.0 + abs(t) ** 2)
        sub = d2 <= bound
        idx = np.nonzero(sel)[0][sub]
        hit[idx] = True
    return hit


def _mark_cantor_boundary(rmap: RationalMap, spec: GridSpec,
                          membership: np.ndarray) -> int:
    """Carve a boundary proxy into an all-member basin-of-infinity raster.

    When the basin complement is a measure-zero dust (z^2 + c with escaping
    critical orbit), every cell center escapes and no cell is non-member, yet
    the basin boundary is needed as the anchor of the 1/distance metric.
    The exterior distance estimate d ~ |z_n| ln|z_n| / |(f^n)'(z)| flags the
    cells that straddle the dust; those are removed from membership. The
    estimate is tight only up to a factor of 4 (Koebe), so when the strict
    half-diagonal pass finds nothing the threshold escalates once.
    Returns the number of cells marked.
    """
    r = spec.resolution
    ax = spec.axis()
    centers = ax[None, :] + 1j * ax[:, None]
    pcoef = rmap.num / rmap.den[0]
    dcoef = np.zeros_like(pcoef)
    dcoef[:-1] = pcoef[1:] * np.arange(1, len(pcoef), dtype=np.float64)

    estimates = []
    for chart_idx in (0, 1):
        if chart_idx == 0:
            z0 = centers.ravel().copy()
            half_diag = np.full(z0.shape, spec.pitch * np.sqrt(2) / 2)
        else:
            w = centers.ravel()
            z0 = 1.0 / w
            half_diag = spec.pitch * np.sqrt(2) / 2 / np.abs(w) ** 2
        z = z0.copy()
        dz = np.ones_like(z)
        alive = np.arange(z.size)
        dist_est = np.full(z.size, np.inf)
        for _ in range(spec.max_iter):
            dz_new = polyval_vec(dcoef, z) * dz
            z_new = polyval_vec(pcoef, z)
            gone = np.abs(z_new) > 1e6
            if gone.any():
                zn = z_new[gone]
                dist_est[alive[gone]] = np.abs(zn) * np.log(np.abs(zn)) / np.abs(dz_new[gone])
                keep = ~gone
                alive, z, dz = alive[keep], z_new[keep], dz_new[keep]
            else:
                z, dz = z_new, dz_new
            if alive.size == 0:
                break
        # Non-escapers sit on the dust itself.
        dist_est[alive] = 0.0
        estimates.append((dist_est, half_diag))

    marked = 0
    for kappa in (1.0, 4.0):
        for chart_idx, (dist_est, half_diag) in enumerate(estimates):
            straddle = (dist_est <= kappa * half_diag).reshape(r, r)
            marked += int((membership[chart_idx] & straddle).sum())
            membership[chart_idx] &= ~straddle
        if marked > 0:
            break
    return marked


def polyval_vec(coeffs: np.ndarray, x: np.ndarray) -> np.ndarray:
    out = np.full(x.shape, coeffs[-1], dtype=np.complex128)
    for k in range(len(coeffs) - 2, -1, -1):
        out = out * x + coeffs[k]
    return out


def compute_basin(rmap: RationalMap, p: ComplexPoint, spec: GridSpec) -> SphereGrid:
    """Raster membership of the basin of the attracting fixed point p.

    A cell is a member iff its center's orbit enters the epsilon ball around
    p within max_iter steps. Orbits entering the ball of a different
    attracting fixed point are dropped early; with the default epsilon those
    balls are forward invariant for desk-scale maps, so the classification is
    unchanged. If p is infinity, the map is a polynomial, and the complement
    never captures a single cell (Cantor dust), a one-cell-thick boundary
    proxy is carved out via the exterior distance estimate.
    """
    mult = mc.multiplier(rmap, p)  # raises NotFixed on bad input
    if abs(mult) >= 1.0 - mc.CLASS_TOL:
        raise NotAttracting(f"|multiplier| = {abs(mult):.6f} at claimed attractor")

    p_reps = _target_reps(p)
    other_reps = []
    for fp in mc.fixed_points(rmap):
        if fp.klass in (mc.FixedClass.ATTRACTING, mc.FixedClass.SUPERATTRACTING):
            if fp.location.chordal(p) > 10 * spec.epsilon_attract:
                other_reps.extend(_target_reps(fp.location))

    r = spec.resolution
    ax = spec.axis()
    centers = (ax[None, :] + 1j * ax[:, None]).ravel()
    vals = np.concatenate([centers, centers])
    is_w = np.concatenate([np.zeros(r * r, bool), np.ones(r * r, bool)])
    idx = np.arange(2 * r * r)
    member = np.zeros(2 * r * r, dtype=bool)
    eps = spec.epsilon_attract

    for step in range(spec.max_iter + 1):
        hit = _within_ball(vals, is_w, p_reps, eps)
        if hit.any():
            member[idx[hit]] = True
        drop = hit
        if other_reps:
            lost = _within_ball(vals, is_w, other_reps, eps)
            drop = drop | lost
        if drop.any():
            keep = ~drop
            vals, is_w, idx = vals[keep], is_w[keep], idx[keep]
        if idx.size == 0 or step == spec.max_iter:
            break
        vals, is_w = mc.evaluate_array(rmap, vals, is_w)

    membership = member.reshape(2, r, r)
    if p.is_infinity and rmap.is_polynomial and bool(membership.all()):
        _mark_cantor_boundary(rmap, spec, membership)
    return SphereGrid(
        spec=spec,
        attracting_point=p,
        membership=membership,
        correspondence=_build_correspondence(spec),
    )


class _UnionFind:
    def __init__(self, n: int):
        self.parent = np.arange(n, dtype=np.int64)

    def find(self, a: int) -> int:
        p = self.parent
        root = a
        while p[root] != root:
            root = p[root]
        while p[a] != root:
            p[a], a = root, p[a]
        return root

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def merged_labels(mask: np.ndarray, correspondence: np.ndarray) -> np.ndarray:
    """8-connected labels of a (2, r, r) mask, unified across the chart seam.

    Labels are union-find roots (positive, not contiguous); 0 means outside
    the mask. Chart-level pieces joined by a correspondence pair share one
    root, exactly mirroring how components are merged.
    """
    r = mask.shape[1]
    struct = np.ones((3, 3), dtype=int)
    labs = np.zeros((2, r, r), dtype=np.int64)
    lab_z, n_z = ndimage.label(mask[0], structure=struct)
    lab_w, _n_w = ndimage.label(mask[1], structure=struct)
    labs[0] = lab_z
    labs[1] = np.where(lab_w > 0, lab_w + n_z, 0)
    total = int(labs.max())

    uf = _UnionFind(total + 1)
    flat_lab = labs.reshape(-1)
    corr = correspondence.reshape(-1)
    src = np.nonzero((corr >= 0) & (flat_lab > 0))[0]
    dst = corr[src]
    both = flat_lab[dst] > 0
    for a, b in zip(flat_lab[src[both]], flat_lab[dst[both]]):
        uf.union(int(a), int(b))
    roots = np.array([uf.find(i) for i in range(total + 1)], dtype=np.int64)
    return roots[flat_lab].reshape(2, r, r)


def label_components(grid: SphereGrid) -> SphereGrid:
    """8-connected labeling per chart, merged across charts by correspondence.

    Component 1 is the one containing the attracting point; the rest are
    ordered by decreasing cell count (ties by first raster occurrence).
    """
    merged = merged_labels(grid.membership, grid.correspondence)

    chart_idx, iy, ix = grid.cell_of_point(grid.attracting_point)
    if not grid.membership[chart_idx, iy, ix]:
        raise AttractorNotMember(
            "attracting point's cell is not a member; epsilon/max_iter too tight"
        )
    p_root = int(merged[chart_idx, iy, ix])

    uniq, counts = np.unique(merged[merged > 0], return_counts=True)
    order = sorted(
        (u for u in uniq.tolist() if u != p_root),
        key=lambda u: (-int(counts[np.searchsorted(uniq, u)]), u),
    )
    relabel = np.zeros(int(uniq.max()) + 1 if uniq.size else 1, dtype=np.int32)
    relabel[p_root] = 1
    for i, u in enumerate(order, start=2):
        relabel[u] = i
    comp = np.where(merged > 0, relabel[merged], 0).astype(np.int32)

    n_components = 1 + len(order)
    sizes = np.zeros(n_components + 1, dtype=np.int64)
    got = np.bincount(comp.reshape(-1), minlength=n_components + 1)
    sizes[: len(got)] = got
    sizes[0] = 0
    return replace(grid, component_id=comp, n_components=n_components,
                   component_sizes=sizes)


def boundary_distance(grid: SphereGrid) -> SphereGrid:
    """Distance-to-boundary fields for member cells.

    Per chart: exact Euclidean distance transform to the nearest non-member
    cell in chart units, then scaled by the local chordal factor
    2 / (1 + |c|^2). Each chart keeps its own value: substituting the
    other chart's (finite-distance) figure would bias the density 1/delta by
    up to the coordinate ratio and shift disk distances by a
    resolution-independent amount. Cross-chart values fill blind spots only:
    a member cell whose chart has no non-member cells takes its counterpart's
    value, and cells no chart can see fall back to the exact chordal distance
    to the nearest non-member center anywhere on the sphere.
    """
    r = grid.resolution
    pitch = grid.spec.pitch
    edt = np.zeros((2, r, r), dtype=np.float64)
    dressed = np.zeros((2, r, r), dtype=np.float64)
    for c in (0, 1):
        mem = grid.membership[c]
        if bool((~mem).any()):
            edt[c] = ndimage.distance_transform_edt(mem, sampling=pitch)
        else:
            edt[c] = np.where(mem, np.inf, 0.0)
        dressed[c] = edt[c] * grid.local_scale(c)

    base = dressed.copy()
    flat_base = base.reshape(-1)
    corr = grid.correspondence.reshape(-1)
    mem_flat = grid.membership.reshape(-1)
    out = dressed.reshape(-1)
    blind = mem_flat & ~np.isfinite(out)
    src = np.nonzero(blind & (corr >= 0))[0]
    dst = corr[src]
    ok = mem_flat[dst] & np.isfinite(flat_base[dst])
    out[src[ok]] = flat_base[dst[ok]]

    bad = mem_flat & ~np.isfinite(out)
    if bad.any():
        nonmem = ~mem_flat
        if not nonmem.any():
            raise NumericalError(
                "no non-member cells on the whole raster; resolution too coarse"
            )
        ax = grid.spec.axis()
        centers = (ax[None, :] + 1j * ax[:, None]).ravel()
        all_vals = np.concatenate([centers, centers])
        all_isw = np.concatenate([np.zeros(r * r, bool), np.ones(r * r, bool)])
        tree = cKDTree(mc.embed_sphere(all_vals[nonmem], all_isw[nonmem]))
        q = mc.embed_sphere(all_vals[bad], all_isw[bad])
        d, _ = tree.query(q, workers=-1)
        out[bad] = d

    return replace(grid, boundary_dist=dressed, edt_chart=edt)


def locate(grid: SphereGrid, point: ComplexPoint) -> tuple[int, int]:
    """Cell id (preferred chart) and component id for a point in the basin."""
    if grid.component_id is None:
        raise ValueError("grid is not labeled")
    chart_idx, iy, ix = grid.cell_of_point(point)
    if not grid.membership[chart_idx, iy, ix]:
        raise NotInBasin(f"point {point} is not in a member cell")
    return grid.cell_id(chart_idx, iy, ix), int(grid.component_id[chart_idx, iy, ix])

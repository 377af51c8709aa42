"""File emission: CSV tables, P6 raster renders, and the text report.

Every format starts with the version header line; float fields use one fixed
format so identical configurations produce byte-identical files.
"""
from __future__ import annotations

import colorsys
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from . import FORMAT_HEADER
from . import greens as gn
from . import maps as mc
from .experiment import ExperimentReport
from .grid import SphereGrid
from .orbit import OrbitTree, tree_csv_rows

GOLDEN = 0.6180339887498949


def fnum(x: float) -> str:
    return format(float(x), ".12g")


def component_color(label: int) -> tuple[int, int, int]:
    """Fixed palette: golden-angle hue walk, never black."""
    if label <= 0:
        return (0, 0, 0)
    h = (label * GOLDEN) % 1.0
    r, g, b = colorsys.hsv_to_rgb(h, 0.85, 0.95)
    return (int(round(r * 255)), int(round(g * 255)), int(round(b * 255)))


def heat_color(t: float) -> tuple[int, int, int]:
    """Blue (near) to red (far) gradient over t in [0, 1]."""
    t = min(max(t, 0.0), 1.0)
    r = int(round(255 * t))
    g = int(round(204 * (1.0 - abs(2.0 * t - 1.0))))
    b = int(round(255 * (1.0 - t)))
    return (r, g, b)


def _ppm_bytes(pixels: np.ndarray) -> bytes:
    h, w, _ = pixels.shape
    header = f"P6\n# {FORMAT_HEADER}\n{w} {h}\n255\n".encode("ascii")
    return header + pixels.astype(np.uint8).tobytes()


def basin_ppm(grid: SphereGrid) -> bytes:
    """Both charts side by side (Z left, W right), colored by component."""
    r = grid.resolution
    palette_size = grid.n_components + 1
    lut = np.zeros((palette_size, 3), dtype=np.uint8)
    for label in range(1, palette_size):
        lut[label] = component_color(label)
    img = np.zeros((r, 2 * r, 3), dtype=np.uint8)
    comp = grid.component_id
    img[:, :r] = lut[comp[0]]
    img[:, r:] = lut[comp[1]]
    return _ppm_bytes(img[::-1])  # +im upward


def heat_ppm(report: ExperimentReport) -> bytes:
    """Nearest-sample fill of per-sample minimum distances, per component."""
    grid = report.grid
    r = grid.resolution
    img = np.zeros((2 * r * r, 3), dtype=np.uint8)
    ax = grid.spec.axis()
    centers = (ax[None, :] + 1j * ax[:, None]).ravel()
    all_vals = np.concatenate([centers, centers])
    all_isw = np.concatenate([np.zeros(r * r, bool), np.ones(r * r, bool)])
    comp_flat = grid.component_id.reshape(-1)

    finite_max = 0.0
    for cres in report.components:
        finite = np.isfinite(cres.sample_dists)
        if finite.any():
            finite_max = max(finite_max, float(cres.sample_dists[finite].max()))
    scale = finite_max if finite_max > 0 else 1.0

    for cres in report.components:
        finite = np.isfinite(cres.sample_dists)
        if not finite.any():
            continue
        s_cells = cres.sample_cells[finite]
        s_vals = cres.sample_dists[finite]
        tree = cKDTree(mc.embed_sphere(all_vals[s_cells], all_isw[s_cells]))
        cells = np.nonzero(comp_flat == cres.component_id)[0]
        q = mc.embed_sphere(all_vals[cells], all_isw[cells])
        _, idx = tree.query(q, workers=1)
        colors = np.array([heat_color(v / scale) for v in s_vals], dtype=np.uint8)
        img[cells] = colors[idx]

    img = img.reshape(2, r, r, 3)
    out = np.zeros((r, 2 * r, 3), dtype=np.uint8)
    out[:, :r] = img[0]
    out[:, r:] = img[1]
    return _ppm_bytes(out[::-1])


def samples_csv(report: ExperimentReport) -> str:
    lines = [f"# {FORMAT_HEADER}",
             "scenario_id,component_id,sample_re,sample_im,sample_chart,"
             "depth,min_dist,q_re,q_im,q_depth"]
    tree = report.tree
    for cres in report.components:
        for cell, dist, node in zip(cres.sample_cells, cres.sample_dists,
                                    cres.sample_nodes):
            if not np.isfinite(dist) or node < 0:
                continue  # unresolved samples are counted, not listed
            pt = report.grid.cell_center(int(cell))
            q = tree.point(int(node))
            lines.append(
                f"{report.scenario_id},{cres.component_id},"
                f"{fnum(pt.re)},{fnum(pt.im)},{pt.chart.value},"
                f"{tree.depth_effective},{fnum(dist)},"
                f"{fnum(q.re)},{fnum(q.im)},{int(tree.depths[int(node)])}"
            )
    return "\n".join(lines) + "\n"


def components_csv(report: ExperimentReport) -> str:
    lines = [f"# {FORMAT_HEADER}",
             "scenario_id,component_id,cells,samples_used,covering_radius,"
             "mean_distance,unresolved_samples"]
    for cres in report.components:
        lines.append(
            f"{report.scenario_id},{cres.component_id},{cres.cells},"
            f"{cres.samples_used},{fnum(cres.covering_radius)},"
            f"{fnum(cres.mean_distance)},{cres.unresolved}"
        )
    return "\n".join(lines) + "\n"


def tree_csv(tree: OrbitTree) -> str:
    lines = [f"# {FORMAT_HEADER}",
             "node_id,parent_id,depth,re,im,chart,component_id,residual"]
    for nid, pid, depth, re, im, chart, comp, res in tree_csv_rows(tree):
        lines.append(f"{nid},{pid},{depth},{fnum(re)},{fnum(im)},{chart},"
                     f"{comp},{fnum(res)}")
    return "\n".join(lines) + "\n"


def contours_csv(dec: gn.AnnulusDecomposition) -> str:
    lines = [f"# {FORMAT_HEADER}", "level,component,chart,re,im"]
    for k, gid, chart, re, im in gn.contour_rows(dec):
        lines.append(f"{k},{gid},{chart},{fnum(re)},{fnum(im)}")
    return "\n".join(lines) + "\n"


def report_txt(report: ExperimentReport) -> str:
    g = report.grid
    t = report.tree
    out = [FORMAT_HEADER, f"version {report.version}", ""]
    out.append("[config]")
    out.extend(report.config.echo())
    out.append("")
    out.append("[fixed points]")
    for fp in report.fixed_points:
        loc = "inf" if fp.location.is_infinity else fnum(fp.location.as_plane().real) + \
            "," + fnum(fp.location.as_plane().imag)
        out.append(f"{loc}  multiplier={fnum(abs(fp.multiplier))}  {fp.klass.value}")
    out.append("")
    pt = report.attracting_point
    out.append(f"attracting point: {'inf' if pt.is_infinity else fnum(pt.as_plane().real) + ',' + fnum(pt.as_plane().imag)}")
    bp = report.base_point
    out.append(f"base point ({report.base_policy}): "
               f"{fnum(bp.re)},{fnum(bp.im)} chart {bp.chart.value}")
    out.append("")
    out.append("[grid]")
    out.append(f"resolution {g.resolution}  members {g.member_count()}  "
               f"components {g.n_components}")
    out.append("")
    out.append("[tree]")
    out.append(f"nodes {t.n_nodes}  depth {t.depth_effective}/{t.depth_requested}"
               f"{'  budget-truncated' if t.budget_exceeded else ''}")
    for ls in t.level_stats:
        out.append(f"  depth {ls.depth}: produced {ls.produced}, outside "
                   f"{ls.discarded_outside}, dedup {ls.deduplicated}, kept {ls.kept}")
    out.append("")
    out.append("[components]")
    out.append("id cells samples covering_radius mean unresolved")
    for c in report.components:
        out.append(f"{c.component_id} {c.cells} {c.samples_used} "
                   f"{fnum(c.covering_radius)} {fnum(c.mean_distance)} {c.unresolved}")
    out.append("")
    out.append("[covering radius by depth]")
    for c in report.components:
        series = " ".join(f"{d}:{fnum(v)}" for d, v, _u in c.depth_series)
        out.append(f"component {c.component_id}: {series}")
    out.append("")
    out.append("[covering radius by resolution]")
    for res, c1, cmax in report.resolution_series:
        out.append(f"resolution {res}: component1 {fnum(c1)} max {fnum(cmax)}")
    if report.coverage is not None:
        out.append("")
        out.append("[band coverage]")
        out.append(f"top level t0 = {fnum(report.coverage_t0)}")
        out.append(f"base inside top set: {report.coverage.base_inside_top}")
        out.append(f"off-band nodes: {report.coverage.off_band_nodes}")
        for k, tot, cov, frac in report.coverage.per_level:
            out.append(f"band {k}: covered {cov}/{tot} ({fnum(frac)})")
        out.append("note: cells within half a cell of a level line count "
                   "toward the inner band")
    out.append("")
    return "\n".join(out)


def emit_outputs(report: ExperimentReport, out_dir) -> list:
    """Write all scenario outputs; returns the paths written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    def write_text(name: str, content: str):
        p = out / name
        p.write_text(content, encoding="utf-8", newline="\n")
        written.append(p)

    def write_bytes(name: str, content: bytes):
        p = out / name
        p.write_bytes(content)
        written.append(p)

    write_text("samples.csv", samples_csv(report))
    write_text("components.csv", components_csv(report))
    write_bytes("basin.ppm", basin_ppm(report.grid))
    write_bytes("heat.ppm", heat_ppm(report))
    write_text("report.txt", report_txt(report))
    write_text("tree.csv", tree_csv(report.tree))
    if report.decomposition is not None:
        write_text("contours.csv", contours_csv(report.decomposition))
    return written

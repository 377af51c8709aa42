"""Command line interface.

Subcommands: fixed-points, basin, tree, verify-lemma, experiment, render.
Exit codes: 0 success; 1 usage/configuration error; 2 numerical failure;
3 verification failure (an invariant check such as band coverage fell
short). Diagnostics go to stderr; data goes to files, or to stdout with
`--out -` (the subcommand's primary CSV table).
"""
from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from . import FORMAT_HEADER, __version__
from . import greens as gn
from . import grid as gd
from . import maps as mc
from . import orbit as ob
from . import outputs as op
from .config import ScenarioConfig, load_config, validate_config
from .errors import BasinMetricError, ConfigError
from .experiment import resolve_attracting_point, resolve_base_point, run_experiment

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2
EXIT_VERIFICATION = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="basin-metric-lab", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, desc in [
        ("fixed-points", "classify the map's fixed points"),
        ("basin", "raster the basin and its components"),
        ("tree", "build and export the backward orbit tree"),
        ("verify-lemma", "check band coverage by the backward orbit"),
        ("experiment", "full distance experiment with all outputs"),
        ("render", "write the component raster image only"),
    ]:
        p = sub.add_parser(name, help=desc)
        p.add_argument("--config", required=True, help="scenario config file")
        p.add_argument("--out", default=None, help="output directory ('-': stdout CSV)")
        p.add_argument("--resolution", type=int, default=None)
        p.add_argument("--depth", type=int, default=None)
        p.add_argument("--samples", type=int, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=None)
    return parser


def _apply_overrides(cfg: ScenarioConfig, args) -> ScenarioConfig:
    updates = {}
    for key in ("resolution", "depth", "samples", "seed", "threads"):
        val = getattr(args, key)
        if val is not None:
            updates[key] = val
    if args.out is not None and args.out != "-":
        updates["out_dir"] = Path(args.out)
    if updates:
        cfg = dataclasses.replace(cfg, **updates)
        validate_config(cfg)
    return cfg


def _grid_for(cfg: ScenarioConfig):
    fps = mc.fixed_points(cfg.rmap)
    p = resolve_attracting_point(cfg, fps)
    g = gd.compute_basin(cfg.rmap, p, cfg.grid_spec())
    g = gd.label_components(g)
    return fps, p, gd.boundary_distance(g)


def _emit(path_or_stdout, name: str, content: str, to_stdout: bool):
    if to_stdout:
        sys.stdout.write(content)
    else:
        out = Path(path_or_stdout)
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(content, encoding="utf-8", newline="\n")


def cmd_fixed_points(cfg: ScenarioConfig, args) -> int:
    fps = mc.fixed_points(cfg.rmap)
    print(FORMAT_HEADER)
    print("location,multiplier_abs,class")
    for fp in fps:
        loc = "inf" if fp.location.is_infinity else (
            f"{op.fnum(fp.location.as_plane().real)},"
            f"{op.fnum(fp.location.as_plane().imag)}")
        print(f"{loc},{op.fnum(abs(fp.multiplier))},{fp.klass.value}")
    return EXIT_OK


def cmd_basin(cfg: ScenarioConfig, args) -> int:
    _fps, _p, grid = _grid_for(cfg)
    rows = [f"# {FORMAT_HEADER}", "component_id,cells"]
    for comp in range(1, grid.n_components + 1):
        rows.append(f"{comp},{int(grid.component_sizes[comp])}")
    table = "\n".join(rows) + "\n"
    if args.out == "-":
        sys.stdout.write(table)
        return EXIT_OK
    out = Path(args.out) if args.out else cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    (out / "basin.ppm").write_bytes(op.basin_ppm(grid))
    (out / "basin_components.csv").write_text(table, encoding="utf-8", newline="\n")
    print(f"members {grid.member_count()}  components {grid.n_components}",
          file=sys.stderr)
    return EXIT_OK


def cmd_tree(cfg: ScenarioConfig, args) -> int:
    _fps, p, grid = _grid_for(cfg)
    p0, policy = resolve_base_point(cfg, cfg.rmap, grid, p)
    tree = ob.build_backward_tree(cfg.rmap, p0, cfg.depth, grid)
    content = op.tree_csv(tree)
    _emit(args.out or cfg.out_dir, "tree.csv", content, args.out == "-")
    print(f"base policy {policy}; nodes {tree.n_nodes}; "
          f"depth {tree.depth_effective}/{tree.depth_requested}", file=sys.stderr)
    return EXIT_OK


def cmd_verify_lemma(cfg: ScenarioConfig, args) -> int:
    if not cfg.rmap.is_polynomial or cfg.scenario != "basin-of-infinity":
        raise ConfigError("verify-lemma requires a polynomial basin-of-infinity scenario")
    _fps, p, grid = _grid_for(cfg)
    p0, _policy = resolve_base_point(cfg, cfg.rmap, grid, p)
    tree = ob.build_backward_tree(cfg.rmap, p0, cfg.depth, grid)
    field = gn.greens_function(cfg.rmap, grid)
    base_g = gn.greens_at(cfg.rmap, p0, cfg.max_iter)
    t0 = gn.default_top_level(field, cfg.rmap, base_g=base_g)
    dec = gn.annulus_decomposition(field, t0, 6)
    cov = gn.verify_annulus_coverage(dec, tree.cell_ids, tree.depths, base_g=base_g)

    rows = [f"# {FORMAT_HEADER}", "level,total,covered,fraction"]
    for k, tot, covd, frac in cov.per_level:
        rows.append(f"{k},{tot},{covd},{op.fnum(frac)}")
    content = "\n".join(rows) + "\n"
    _emit(args.out or cfg.out_dir, "coverage.csv", content, args.out == "-")
    if args.out != "-":
        out = Path(args.out) if args.out else cfg.out_dir
        (out / "contours.csv").write_text(op.contours_csv(dec), encoding="utf-8",
                                          newline="\n")
    shortfall = any(frac < 1.0 for _k, tot, _c, frac in cov.per_level if tot > 0)
    print(f"t0 {op.fnum(t0)}; coverage {op.fnum(cov.total_fraction)}; "
          f"off-band nodes {cov.off_band_nodes}", file=sys.stderr)
    return EXIT_VERIFICATION if shortfall else EXIT_OK


def cmd_experiment(cfg: ScenarioConfig, args) -> int:
    report = run_experiment(cfg)
    if args.out == "-":
        sys.stdout.write(op.samples_csv(report))
        return EXIT_OK
    out = Path(args.out) if args.out else cfg.out_dir
    paths = op.emit_outputs(report, out)
    print(f"max covering radius {op.fnum(report.max_covering_radius)}; "
          f"wrote {len(paths)} files to {out}", file=sys.stderr)
    return EXIT_OK


def cmd_render(cfg: ScenarioConfig, args) -> int:
    if args.out == "-":
        raise ConfigError("render writes binary PPM; '-' is not supported")
    _fps, _p, grid = _grid_for(cfg)
    out = Path(args.out) if args.out else cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    (out / "basin.ppm").write_bytes(op.basin_ppm(grid))
    return EXIT_OK


COMMANDS = {
    "fixed-points": cmd_fixed_points,
    "basin": cmd_basin,
    "tree": cmd_tree,
    "verify-lemma": cmd_verify_lemma,
    "experiment": cmd_experiment,
    "render": cmd_render,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = _apply_overrides(load_config(args.config), args)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BasinMetricError as exc:
        print(f"error: {exc.__class__.__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())

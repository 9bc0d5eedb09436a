"""Command-line entry point: config-driven pipeline stages."""

import argparse
import logging
import os
import sys

from . import pipeline
from .config import ConfigError, load_config

log = logging.getLogger("mchom")


def _setup_logging():
    level = os.environ.get("MCHOM_LOG", "INFO").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )


def _add_common(p):
    p.add_argument("--config", required=True, help="YAML run configuration")
    p.add_argument("--jobs", type=int, default=None, help="worker process cap")
    p.add_argument("--out", default=None, help="output directory override")
    p.add_argument("--force", action="store_true", help="recompute existing artifacts")


def build_parser():
    ap = argparse.ArgumentParser(
        prog="mchom",
        description="Multicontinuum coarse models for time-fractional "
        "diffusion-wave problems in high-contrast media",
    )
    sub = ap.add_subparsers(dest="verb", required=True)
    verbs = [
        ("generate-media", "write the coefficient raster"),
        ("solve-fine", "reference fine-grid solve with snapshots"),
        ("solve-cells", "solve and dump cell bases of selected blocks"),
        ("upscale", "solve all cell problems and export effective blocks"),
        ("solve-macro", "coarse multicontinuum solve with snapshots"),
        ("compare", "error table from stored snapshots"),
        ("full", "run every stage in order"),
        ("zero-order", "decoupled reaction-only coarse model with oracle check"),
    ]
    for name, help_ in verbs:
        p = sub.add_parser(name, help=help_)
        _add_common(p)
        if name == "solve-cells":
            p.add_argument(
                "--blocks",
                type=int,
                nargs="+",
                default=[0],
                help="coarse block ids to dump",
            )
    return ap


def main(argv=None):
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except (ConfigError, FileNotFoundError) as exc:
        log.error("invalid configuration: %s", exc)
        return 2
    if args.jobs is not None:
        cfg.jobs = args.jobs
    if args.out is not None:
        cfg.out = args.out
    try:
        cfg.validate()
        return _dispatch(args, cfg)
    except (ConfigError, ValueError, FileNotFoundError) as exc:
        log.error("%s", exc)
        return 1


def _dispatch(args, cfg):
    verb = args.verb
    if verb == "generate-media":
        mesh, _ = pipeline.build_geometry(cfg)
        _, path = pipeline.stage_generate_media(cfg, mesh)
        log.info("medium raster at %s", path)
        return 0
    if verb == "solve-fine":
        mesh, _ = pipeline.build_geometry(cfg)
        medium, _ = pipeline.stage_generate_media(cfg, mesh)
        pipeline.stage_solve_fine(cfg, mesh, medium, force=args.force)
        return 0
    if verb == "solve-cells":
        pipeline.dump_cell_basis(cfg, args.blocks)
        return 0
    if verb == "upscale":
        mesh, part = pipeline.build_geometry(cfg)
        medium, _ = pipeline.stage_generate_media(cfg, mesh)
        pipeline.stage_upscale(cfg, mesh, part, medium, force=args.force)
        return 0
    if verb == "solve-macro":
        mesh, part = pipeline.build_geometry(cfg)
        medium, _ = pipeline.stage_generate_media(cfg, mesh)
        eff, _ = pipeline.stage_upscale(cfg, mesh, part, medium, force=False)
        pipeline.stage_solve_macro(cfg, part, medium, eff, force=args.force)
        return 0
    if verb == "compare":
        mesh, part = pipeline.build_geometry(cfg)
        medium, _ = pipeline.stage_generate_media(cfg, mesh)
        rows, path = pipeline.stage_compare(cfg, part, medium)
        for row in rows:
            log.info(
                "t=%.2f " + " ".join("e%d=%.4f%%" % (i, e) for i, e in
                                     enumerate(row[1:], start=1)),
                row[0],
            )
        log.info("error table at %s", path)
        return 0
    if verb == "full":
        rows, path = pipeline.run_full(cfg, force=args.force)
        log.info("error table at %s", path)
        return 0
    if verb == "zero-order":
        _, _, report = pipeline.stage_zero_order(cfg)
        log.info("zero-order report at %s", report)
        return 0
    raise AssertionError(f"unhandled verb {verb}")


if __name__ == "__main__":
    sys.exit(main())

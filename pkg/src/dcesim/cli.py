"""Command line entry point: ``dcesim <verb> [options]``.

Exit codes: 0 success, 2 configuration error, 3 numerical or invariant
failure, 4 missing upstream artifact.
"""

from __future__ import annotations

import argparse
import logging
import sys
import warnings

from . import __version__
from .config import dump_config, load_config, with_overrides
from .errors import ConfigError, DceError, DependencyError
from .export import EXPORTS, STAGE_EXPORTS, export_figures
from .pipeline import STAGES, Pipeline, write_manifest

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_DEPENDENCY = 0, 2, 3, 4

VERBS = {
    "soliton": "soliton",
    "modulate": "modulation",
    "hamiltonian": "hamiltonian",
    "evolve": "evolution",
    "analyze": "analysis",
}


def _common(parser):
    parser.add_argument("--config", metavar="PATH", help="YAML experiment config (defaults if omitted)")
    parser.add_argument("--out", metavar="DIR", help="output directory (overrides io.output_dir)")
    parser.add_argument("--stage-cache", metavar="DIR", help="artifact cache directory (overrides io.cache_dir)")
    parser.add_argument("--format", choices=("csv", "json"), help="columnar output format")
    parser.add_argument("--matrix-format", choices=("text", "binary"), help="format of the n(theta, t) matrix")
    parser.add_argument("--force", action="store_true", help="ignore cached artifacts and recompute")
    parser.add_argument("--check", action="store_true", help="run the invariant suite only and report it")
    parser.add_argument("--no-abort", action="store_true", help="continue past failed invariant checks")
    parser.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    parser.add_argument("-v", "--verbose", action="count", default=0)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="dcesim",
        description="Soliton-driven dynamical Casimir simulation: staged pipeline with cached artifacts.",
    )
    parser.add_argument("--version", action="version", version=f"dcesim {__version__}")
    sub = parser.add_subparsers(dest="verb", required=True, metavar="VERB")
    for verb, stage in VERBS.items():
        _common(sub.add_parser(verb, help=f"run the {stage} stage (upstream artifacts must be cached)"))
    _common(sub.add_parser("pipeline", help="run every stage, export everything and write the manifest"))
    exp = sub.add_parser("export", help="write plot-ready data from cached artifacts")
    _common(exp)
    exp.add_argument("--which", default="all", choices=sorted(EXPORTS) + ["all"], help="export group")
    cfg = sub.add_parser("config", help="print the resolved configuration as YAML")
    cfg.add_argument("--config", metavar="PATH")
    return parser


def _resolve_config(args):
    cfg = load_config(args.config)
    io = {}
    if getattr(args, "out", None):
        io["output_dir"] = args.out
    if getattr(args, "stage_cache", None):
        io["cache_dir"] = args.stage_cache
    if getattr(args, "format", None):
        io["columnar_format"] = args.format
    if getattr(args, "matrix_format", None):
        io["matrix_format"] = args.matrix_format
    if getattr(args, "no_figures", False):
        io["figures"] = False
    return with_overrides(cfg, io=io) if io else cfg


def _report(pipe, stages, stream):
    failed = False
    for stage in stages:
        art = pipe.cached(stage)
        if art is None:
            continue
        for c in art.checks:
            status = "PASS" if c.passed else ("FAIL" if c.severity == "error" else "WARN")
            failed |= status == "FAIL"
            value = "n/a" if c.value is None else f"{c.value:.3e}"
            print(f"{stage:<12} {c.name:<28} {value:>11}  limit {c.limit!s:<14} {status}", file=stream)
    return failed


def _run(args, stream):
    if args.verb == "config":
        stream.write(dump_config(load_config(args.config)))
        return EXIT_OK
    cfg = _resolve_config(args)
    abort = False if (args.no_abort or args.check) else None
    pipe = Pipeline(cfg, cfg.io.cache_dir, force=args.force, abort=abort)
    out = cfg.io.output_dir

    if args.verb == "export":
        if args.check:
            return EXIT_NUMERIC if _report(pipe, STAGES, stream) else EXIT_OK
        files = export_figures(pipe, args.which, out, fmt=cfg.io.columnar_format,
                               matrix_format=cfg.io.matrix_format, figures=cfg.io.figures)
        write_manifest(pipe, files, out)
        print(f"wrote {len(files)} files to {out}", file=stream)
        return EXIT_OK

    stages = STAGES if args.verb == "pipeline" else (VERBS[args.verb],)
    for stage in stages:
        art = pipe.run_stage(stage)
        source = "cache" if stage in pipe.reused else "computed"
        print(f"{stage}: {source} [{art.config_hash[:12]}]", file=stream)
    if args.check:
        return EXIT_NUMERIC if _report(pipe, stages, stream) else EXIT_OK
    groups = [g for s in stages for g in STAGE_EXPORTS[s]]
    files = export_figures(pipe, groups, out, fmt=cfg.io.columnar_format,
                           matrix_format=cfg.io.matrix_format, figures=cfg.io.figures)
    manifest = write_manifest(pipe, files, out)
    print(f"wrote {len(files)} files and {manifest}", file=stream)
    return EXIT_OK


def main(argv=None, stream=None):
    stream = stream or sys.stdout
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(getattr(args, "verbose", 0), 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    logging.captureWarnings(True)
    warnings.simplefilter("default")
    try:
        return _run(args, stream)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DependencyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEPENDENCY
    except DceError as exc:
        stage = getattr(exc, "stage", None)
        prefix = f"stage {stage}: " if stage else ""
        print(f"error: {prefix}{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

"""Command line front end: one config file, one stage per subcommand.

Every subcommand reads the same INI grammar and runs the family it
describes; they differ only in which pipeline stages are forced on or
off and which CSV projection lands in the output directory.  Exit code
0 means every member ran clean, 2 means at least one member errored
(its row records why), 1 means the config itself was rejected.
"""

import argparse
import dataclasses
import os
import sys

from . import sweep as sweeplib
from .config import parse_config
from .errors import ConfigError, InsufficientPoints

_STAGES = ("analyze", "torsion", "decompose", "sweep", "capillarity")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="cmclab",
        description="deficit measurements, torsion solves, ball decompositions",
    )
    sub = p.add_subparsers(dest="stage", required=True)
    for stage in _STAGES:
        sp = sub.add_parser(stage, help=f"run the {stage} stage on a config")
        sp.add_argument("config", help="experiment config (INI)")
        sp.add_argument(
            "--dump-field",
            action="append",
            default=[],
            choices=list(sweeplib._DUMPABLE),
            metavar="NAME",
            help="write a grid snapshot per member (phi, dist, f, f_eps)",
        )
        sp.add_argument(
            "--dump-surface",
            action="store_true",
            help="write sampled surface points per member",
        )
        sp.add_argument("--out", default=None, help="override the output directory")
        sp.add_argument(
            "--h", default=None, type=float, help="override the grid spacing"
        )
    return p


def _stage_toggles(stage: str, toggles):
    if stage == "analyze":
        return dataclasses.replace(
            toggles, identities=False, decompose=False, capillarity=False
        )
    if stage == "torsion":
        return dataclasses.replace(
            toggles,
            torsion=True,
            identities=False,
            decompose=False,
            capillarity=False,
        )
    if stage == "decompose":
        return dataclasses.replace(toggles, decompose=True, capillarity=False)
    if stage == "capillarity":
        return dataclasses.replace(toggles, capillarity=True)
    return toggles


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = parse_config(args.config, h_override=args.h, out_override=args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    cfg = dataclasses.replace(cfg, toggles=_stage_toggles(args.stage, cfg.toggles))

    try:
        result = sweeplib.run_experiment(
            cfg,
            dump_fields=tuple(args.dump_field),
            dump_surface=args.dump_surface,
            member_files=(args.stage in ("decompose", "sweep")),
            fit_outputs=(args.stage == "sweep"),
        )
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1

    if args.stage == "analyze":
        sweeplib.write_projection_csv(
            os.path.join(cfg.outdir, "analyze.csv"),
            cfg,
            result.rows,
            sweeplib.ANALYZE_HEADER,
        )
    elif args.stage == "torsion":
        sweeplib.write_projection_csv(
            os.path.join(cfg.outdir, "torsion.csv"),
            cfg,
            result.rows,
            sweeplib.TORSION_HEADER,
        )

    failed = [r for r in result.rows if r.error]
    for r in result.rows:
        status = f"error: {r.error}" if r.error else "ok"
        print(f"param {r.param:g}: {status}")
    if args.stage == "sweep":
        try:
            table = sweeplib.exponent_report(result)
        except InsufficientPoints as exc:
            print(f"fits: {exc}")
        else:
            print(sweeplib.format_exponent_table(table))
    print(f"wrote {len(result.files)} files to {cfg.outdir}")
    return 2 if failed else 0


if __name__ == "__main__":
    sys.exit(main())

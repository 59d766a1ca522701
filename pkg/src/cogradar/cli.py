"""Command-line entry point: ``python -m cogradar {run,roc,dump-map,catalog}``.

Any configuration field can be set with a dotted flag, for example
``--bandit.epsilon 0.2`` or ``--signal.pfa "[1e-6, 1e-4]"``.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .harness import (
    ALGORITHMS,
    SCENARIOS,
    ConfigError,
    ExperimentConfig,
    RunArtifacts,
    aggregate,
    output_dir,
    run_episode,
    write_artifacts,
)
from .signalchain import write_rd_dump
from .spectrum import write_catalog_csv

log = logging.getLogger("cogradar")


class UsageError(Exception):
    pass


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cogradar", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", type=Path, help="YAML experiment configuration")
        sp.add_argument("--scenario", choices=SCENARIOS)
        sp.add_argument("--algo", choices=ALGORITHMS)
        con = sp.add_mutually_exclusive_group()
        con.add_argument("--constrained", dest="constrained", action="store_true", default=None)
        con.add_argument("--unconstrained", dest="constrained", action="store_false")
        sp.add_argument("--seed", type=int)

    run = sub.add_parser("run", help="run one experiment (all runs of one policy variant)")
    common(run)
    run.add_argument("--runs", type=int)
    run.add_argument("--cpis", type=int)
    run.add_argument("--out", type=Path, help="output directory (default $COGRADAR_OUT or ./runs)")

    roc = sub.add_parser("roc", help="aggregate run directories into summary CSVs")
    roc.add_argument("paths", nargs="+", type=Path, help="run directories or parents of them")
    roc.add_argument("--out", type=Path, help="output directory (default: print ROC table)")

    dump = sub.add_parser("dump-map", help="write one range-Doppler map")
    common(dump)
    dump.add_argument("--cpi", type=int, default=0, help="zero-based CPI index")
    dump.add_argument("--run-index", type=int, default=0)
    dump.add_argument("--out", type=Path, required=True, help="output prefix for .bin/.hdr")

    cat = sub.add_parser("catalog", help="export the waveform catalog as CSV")
    cat.add_argument("--config", type=Path)
    cat.add_argument("--out", type=Path, help="CSV path (default: stdout)")
    return p


def _overrides(extra: Sequence[str]) -> list[tuple[str, str]]:
    pairs = []
    it = iter(extra)
    for tok in it:
        if not tok.startswith("--") or len(tok) == 2:
            raise UsageError(f"unexpected argument {tok!r}")
        key, eq, value = tok[2:].partition("=")
        if not eq:
            value = next(it, None)
            if value is None:
                raise UsageError(f"flag {tok} needs a value")
        pairs.append((key, value))
    return pairs


def _config(args, extra) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    flags = {
        "scenario": getattr(args, "scenario", None),
        "algorithm": getattr(args, "algo", None),
        "constrained": getattr(args, "constrained", None),
        "seed": getattr(args, "seed", None),
        "runs": getattr(args, "runs", None),
        "cpis": getattr(args, "cpis", None),
    }
    cfg = dataclasses.replace(cfg, **{k: v for k, v in flags.items() if v is not None})
    for key, value in _overrides(extra):
        cfg = cfg.override(key, value)
    return cfg.validate()


def cmd_run(args, extra) -> int:
    cfg = _config(args, extra)
    root = (args.out or output_dir()) / cfg.label
    for r in range(cfg.runs):
        result = run_episode(cfg, cfg.seed, r)
        arts = write_artifacts(result, root / f"run_{r:03d}")
        pd = ", ".join(f"{p:g}:{result.mean_pd(p):.3f}" for p in cfg.signal.pfa)
        log.info("run %d done, mean P_d {%s}", r, pd)
        print(arts.episode_log.parent)
    return 0


def _find_runs(paths) -> list[RunArtifacts]:
    found = []
    for p in paths:
        if not p.exists():
            raise UsageError(f"no such path: {p}")
        for roc in sorted(p.rglob("roc.csv")) if p.is_dir() else []:
            d = roc.parent
            found.append(
                RunArtifacts(d / "episode.csv", roc, d / "regret.csv", d / "scores.csv", d / "config.yaml")
            )
    if not found:
        raise UsageError("no run directories found")
    return found


def cmd_roc(args, extra) -> int:
    if extra:
        raise UsageError(f"unexpected arguments {extra}")
    summary = aggregate(_find_runs(args.paths))
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "roc_summary.csv").write_text(summary.roc_csv())
        (args.out / "regret_summary.csv").write_text(summary.regret_csv())
        print(args.out / "roc_summary.csv")
    else:
        sys.stdout.write(summary.roc_csv())
    return 0


def cmd_dump_map(args, extra) -> int:
    cfg = _config(args, extra)
    if args.cpi < 0:
        raise UsageError("--cpi must be >= 0")
    # later CPIs cannot influence earlier ones, so stop after the requested one
    cfg = dataclasses.replace(cfg, cpis=args.cpi + 1, burn_in_cpis=0)
    result = run_episode(cfg, cfg.seed, args.run_index, keep_maps=(args.cpi,))
    args.out.parent.mkdir(parents=True, exist_ok=True)
    scenario_id = f"{cfg.label}/seed{cfg.seed}/run{args.run_index}/cpi{args.cpi}"
    bin_path, hdr_path = write_rd_dump(args.out, result.maps[args.cpi], scenario_id)
    print(bin_path)
    print(hdr_path)
    return 0


def cmd_catalog(args, extra) -> int:
    cfg = _config(args, extra)
    catalog = cfg.catalog()
    if args.out:
        with open(args.out, "w", newline="") as fh:
            write_catalog_csv(catalog, fh)
    else:
        write_catalog_csv(catalog, sys.stdout)
    return 0


COMMANDS = {"run": cmd_run, "roc": cmd_roc, "dump-map": cmd_dump_map, "catalog": cmd_catalog}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _parser()
    try:
        args, extra = parser.parse_known_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args, extra)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"cogradar {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, ValueError, OSError) as exc:
        print(f"cogradar {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: ``feedback-bins classify|simulate|verify``.

Exit codes: 0 pass or definite verdict, 1 failure or error, 2 indeterminate.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

from . import __version__
from .acceptance import CATALOG, SEED, run_criterion
from .classifier import ClassifierInternalError, ContradictoryInputs, classify_sequence
from .config import ConfigError, ExperimentConfig
from .montecarlo import default_threads, jsonable, records_csv, records_json, run_replications, trajectory_csv

EXIT_OK, EXIT_FAIL, EXIT_INDETERMINATE = 0, 1, 2

log = logging.getLogger("feedback_bins")


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def cmd_classify(cfg: ExperimentConfig) -> int:
    seq = cfg.sequence()
    verdict = classify_sequence(seq, cfg.model.alpha, strict=cfg.analysis.strict)
    print(verdict.to_json(indent=2))
    return EXIT_OK if verdict.definite else EXIT_INDETERMINATE


def cmd_simulate(cfg: ExperimentConfig, out_dir: Path, threads: int | None,
                 dump: bool | None) -> int:
    params = cfg.model_params()
    options = cfg.run_options(threads, dump)
    res = run_replications(params, cfg.run.horizon, cfg.run.reps, cfg.run.master_seed, options)
    try:
        verdict = classify_sequence(params.seq, params.alpha).to_dict()
    except (ValueError, ClassifierInternalError) as exc:
        verdict = {"error": str(exc)}
    summary = {
        "schema": res.summary.schema,
        "version": __version__,
        "config": cfg.to_dict(),
        "verdict": verdict,
        "summary": jsonable(res.summary.to_dict()),
    }
    if "json" in cfg.output.formats:
        atomic_write(out_dir / "summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
        atomic_write(out_dir / "records.json",
                     json.dumps(records_json(res.records), indent=1, sort_keys=True) + "\n")
    if "csv" in cfg.output.formats:
        atomic_write(out_dir / "records.csv", records_csv(res.records))
    if res.trajectories is not None:
        for rep, rows in sorted(res.trajectories.items()):
            atomic_write(out_dir / "trajectories" / f"rep_{rep:06d}.csv", trajectory_csv(rows))
    s = res.summary
    print(f"{s.reps} replications to n={s.horizon}: certified fraction {s.certified_fraction:.4g}, "
          f"median min_side {s.median_min_side:.4g}, float switch at "
          f"{s.float_switch_step if s.float_switch_step is not None else 'never'}; "
          f"output in {out_dir}")
    if s.partial:
        print("step budget reached: results are partial", file=sys.stderr)
        return EXIT_INDETERMINATE
    return EXIT_OK


def cmd_verify(keys: list[str], seed: int, threads: int, out_dir: Path | None) -> int:
    if keys == ["all"]:
        keys = list(CATALOG)
    results = []
    for key in keys:
        r = run_criterion(key, seed, threads)
        results.append(r)
        print(r.line())
        for note in r.notes:
            print(f"    note: {note}")
    if out_dir is not None:
        atomic_write(out_dir / "verify.json",
                     json.dumps([r.to_dict() for r in results], indent=2) + "\n")
    return EXIT_OK if all(r.passed and r.within_budget for r in results) else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="feedback-bins", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("classify", help="print the predicted regime as JSON")
    c.add_argument("--config", required=True, type=Path)

    s = sub.add_parser("simulate", help="run replications and write summary and records")
    s.add_argument("--config", required=True, type=Path)
    s.add_argument("--seed", type=int, help="override run.master_seed")
    s.add_argument("--threads", type=int, help="worker processes (default: all cores)")
    s.add_argument("--out", type=Path, help="override output.dir")
    s.add_argument("--dump-trajectories", action="store_true", default=None,
                   help="write one CSV per replication")

    v = sub.add_parser("verify", help="run acceptance experiments by id, or 'all'")
    v.add_argument("ids", nargs="+", metavar="ID", help=f"one of: all, {', '.join(CATALOG)}")
    v.add_argument("--seed", type=int, default=SEED)
    v.add_argument("--threads", type=int, default=None)
    v.add_argument("--out", type=Path)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "verify":
            unknown = [k for k in args.ids if k != "all" and k not in CATALOG
                       and not any(k == str(c.number) for c in CATALOG.values())]
            if unknown:
                print(f"unknown criterion: {', '.join(unknown)}; known: all, "
                      f"{', '.join(CATALOG)}", file=sys.stderr)
                return EXIT_FAIL
            return cmd_verify(args.ids, args.seed, args.threads or default_threads(), args.out)
        cfg = ExperimentConfig.load(args.config)
        if args.command == "classify":
            return cmd_classify(cfg)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be >= 0")
            cfg.run.master_seed = args.seed
        out_dir = args.out or Path(cfg.output.dir)
        return cmd_simulate(cfg, out_dir, args.threads, args.dump_trajectories)
    except (ConfigError, ContradictoryInputs, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except ClassifierInternalError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())

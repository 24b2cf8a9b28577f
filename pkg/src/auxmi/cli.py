"""Command-line entry point: ``auxmi run|presets|validate|oracle``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
import time
from pathlib import Path

from .datagen import PRESETS, prepare_scenario
from .errors import AuxmiError, ConfigurationError
from .simulation import load_manifest, preset_manifest, run_scenario

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

log = logging.getLogger("auxmi")


def _load(args):
    manifest = load_manifest(args.manifest)
    scen = manifest.scenario
    if getattr(args, "k_reps", None) is not None:
        scen = dataclasses.replace(scen, k_reps=args.k_reps)
    if getattr(args, "m", None) is not None:
        scen = dataclasses.replace(scen, m=args.m)
    manifest = dataclasses.replace(manifest, scenario=scen)
    if getattr(args, "threads", None) is not None:
        manifest.threads = args.threads
    if getattr(args, "out", None) is not None:
        manifest.output_dir = Path(args.out)
    if getattr(args, "verbose_traces", False):
        manifest.verbose_traces = True
    return manifest


def cmd_run(args) -> int:
    manifest = _load(args)
    k = manifest.scenario.k_reps
    start = time.time()

    def progress(rep):
        if rep % max(1, k // 10) == 0:
            log.info("replicate %d/%d (%.0fs)", rep, k, time.time() - start)

    report = run_scenario(manifest, progress)
    print(f"{report.config.name}: {k} replicates x {len(manifest.strategies)} strategies "
          f"in {time.time() - start:.1f}s; mean missing fraction {report.miss_fraction:.4f}")
    print(f"wrote results.csv, summary.csv, selection.csv, plotdata.csv to {manifest.output_dir}")
    return EXIT_OK


def cmd_presets(args) -> int:
    names = [args.name] if args.name else list(PRESETS)
    docs = {}
    for name in names:
        if name not in PRESETS:
            raise ConfigurationError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
        docs[name] = preset_manifest(name).to_dict()
    if args.write:
        out = Path(args.write)
        out.mkdir(parents=True, exist_ok=True)
        for name, doc in docs.items():
            path = out / f"{name.lower()}.json"
            path.write_text(json.dumps(doc, indent=2) + "\n")
            print(path)
    else:
        print(json.dumps(docs if len(docs) > 1 else next(iter(docs.values())), indent=2))
    return EXIT_OK


def cmd_validate(args) -> int:
    manifest = _load(args)
    cfg = prepare_scenario(manifest.scenario)
    print(f"ok: scenario {cfg.name!r} n={cfg.n} p={cfg.p} sigma_eps={cfg.sigma_eps:.6g} "
          f"gamma0={cfg.gamma0:.6g} strategies={[s.kind.value for s in manifest.strategies]}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    from .oracle import run_all

    start = time.time()
    results = run_all()
    n_pass = sum(r.passed for r in results)
    print(f"{n_pass}/{len(results)} oracle checks passed in {time.time() - start:.1f}s")
    return EXIT_OK if n_pass == len(results) else EXIT_RUNTIME


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="auxmi", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a simulation manifest and write CSV reports")
    run.add_argument("manifest")
    run.add_argument("--threads", type=int, help="worker processes (0 = all cores)")
    run.add_argument("--k-reps", type=int, help="override the replicate count")
    run.add_argument("--m", type=int, help="override the number of imputations")
    run.add_argument("--out", help="output directory")
    run.add_argument("--verbose-traces", action="store_true", help="write per-replicate selection traces")
    run.set_defaults(func=cmd_run)

    pre = sub.add_parser("presets", help="print preset manifests as JSON")
    pre.add_argument("name", nargs="?", help="one of: " + ", ".join(PRESETS))
    pre.add_argument("--write", metavar="DIR", help="write one <name>.json per preset into DIR")
    pre.set_defaults(func=cmd_presets)

    val = sub.add_parser("validate", help="check a manifest and calibrate its scenario")
    val.add_argument("manifest")
    val.set_defaults(func=cmd_validate)

    orc = sub.add_parser("oracle", help="run the independent numerical checks")
    orc.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AuxmiError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

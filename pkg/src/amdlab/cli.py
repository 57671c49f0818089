"""amdlab command line: train, landscape, compare, check.

Exit codes: 0 success, 1 failed self-check, 2 config error, 3 numeric
failure, 4 I/O failure.
"""

import argparse
import json
import logging
import os
import sys

from . import checks, engine
from . import io as amdio
from .errors import AmdLabError, SinkError

log = logging.getLogger("amdlab")


def _makedirs(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise SinkError(f"cannot create output directory {path}: {exc.strerror}") from None


def _write_json(path, obj):
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(amdio.snapshots._clean(obj), fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise SinkError(f"cannot write {path}: {exc.strerror}") from None


def run_one(cfg, out_dir, figures=True):
    """Train ``cfg`` into ``out_dir``; returns the RunRecord."""
    _makedirs(out_dir)
    with open(os.path.join(out_dir, "config.yaml"), "w", encoding="utf-8") as fh:
        fh.write(amdio.serialize_config(cfg))
    with amdio.SnapshotWriter.open(os.path.join(out_dir, "snapshots.jsonl")) as sink:
        record, _ = engine.train(cfg, sink=sink)
    _write_json(os.path.join(out_dir, "run.json"), record.header)
    if figures and record.snapshots:
        amdio.render_figures(record.snapshots, cfg.world_model, os.path.join(out_dir, "figures"), cfg.reward)
    return record


def _summary(name, record):
    last = record.snapshots[-1]["metrics"]
    base = record.header["baseline_nll"]
    occ = " ".join(f"{v:.3f}" for v in last["occupancy"])
    return (f"{name}: iteration {record.snapshots[-1]['iteration']}  nll/baseline "
            f"{last['nll'] / base:.3f}  mean reward {last['mean_reward']:.3f}  "
            f"cos(d_dm, d_ca) {last['cos_dm_ca']:.3f}  occupancy [{occ}]")


def cmd_train(args):
    cfg = amdio.load_config(args.config)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    record = run_one(cfg, args.out, figures=not args.no_figures)
    print(_summary(cfg.operator.method, record))
    return 0


def cmd_landscape(args):
    cfg = amdio.load_config(args.config)
    paths = amdio.render_landscape(cfg.world_model, cfg.reward, args.out)
    for p in paths:
        print(p)
    return 0


def cmd_compare(args):
    cfgs = [amdio.load_config(p) for p in args.configs]
    if args.seed is not None:
        cfgs = [c.replace(seed=args.seed) for c in cfgs]
    worlds_seen = {repr(c.world) for c in cfgs}
    if len(worlds_seen) > 1:
        log.warning("compare: configs use different worlds; overlay uses the first")
    _makedirs(args.out)
    runs = []
    for path, cfg in zip(args.configs, cfgs):
        name = os.path.splitext(os.path.basename(path))[0]
        if any(name == n for n, _ in runs):
            name = f"{name}_{len(runs)}"
        record = run_one(cfg, os.path.join(args.out, name), figures=not args.no_figures)
        runs.append((name, record))
        print(_summary(name, record))
    from .io import figures as fig

    world = cfgs[0].world_model
    series = [(n, r.snapshots) for n, r in runs if r.snapshots]
    fig._write(os.path.join(args.out, "overlay.svg"),
               fig.overlay_svg([(n, s[-1]) for n, s in series], world))
    fig._write(os.path.join(args.out, "curves.svg"), fig.curves_svg(series))
    return 0


def cmd_check(args):
    results = checks.run_all(args.suite or None)
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return 1 if failed else 0


def build_parser():
    p = argparse.ArgumentParser(prog="amdlab", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train one config and write snapshots plus figures")
    t.add_argument("config")
    t.add_argument("--out", required=True)
    t.add_argument("--seed", type=int)
    t.add_argument("--no-figures", action="store_true")
    t.set_defaults(func=cmd_train)

    land = sub.add_parser("landscape", help="teacher-energy and reward heatmaps, no training")
    land.add_argument("config")
    land.add_argument("--out", required=True)
    land.set_defaults(func=cmd_landscape)

    c = sub.add_parser("compare", help="train several configs and overlay their results")
    c.add_argument("configs", nargs="+")
    c.add_argument("--out", required=True)
    c.add_argument("--seed", type=int)
    c.add_argument("--no-figures", action="store_true")
    c.set_defaults(func=cmd_compare)

    k = sub.add_parser("check", help="run the exact-math self-test suites")
    k.add_argument("--suite", action="append", choices=sorted(checks.SUITES))
    k.set_defaults(func=cmd_check)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except AmdLabError as exc:
        print(f"amdlab: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"amdlab: error: {exc}", file=sys.stderr)
        return SinkError.exit_code


if __name__ == "__main__":
    sys.exit(main())

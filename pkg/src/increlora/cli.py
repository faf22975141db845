"""Command-line entry point.

Exit codes: 0 ok, 1 verification failed, 2 bad configuration, 3 runtime error.
Logging verbosity comes from ``INCRELORA_LOG`` (error, info or debug).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import gradcheck
from .config import ConfigError, load
from .experiments import ABLATION_WEIGHTS, ablate, compare, read_jsonl, replay, train_to_dir
from .trainer import TrainingDiverged

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3
LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}

log = logging.getLogger("increlora")


def _setup_logging() -> None:
    name = os.environ.get("INCRELORA_LOG", "error").lower()
    if name not in LOG_LEVELS:
        raise ConfigError([f"INCRELORA_LOG must be one of {sorted(LOG_LEVELS)}, got {name!r}"])
    logging.basicConfig(level=LOG_LEVELS[name], format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _load(path, seed=None):
    cfg = load(path)
    return cfg.replace(seed=seed) if seed is not None else cfg


def cmd_train(args) -> int:
    cfg = _load(args.config, args.seed)
    out = Path(args.out)
    try:
        result = train_to_dir(cfg, out)
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        print(f"last events: {json.dumps(exc.events[-3:])}", file=sys.stderr)
        return EXIT_RUNTIME
    ranks = result.deployed_ranks()
    print(f"final eval {result.final_eval:.6g}  best {result.best_eval:.6g}  deployed ranks {ranks}")
    print(f"artifacts in {out}")
    return EXIT_OK


def cmd_check_grad(args) -> int:
    seeds = range(args.seed, args.seed + args.n_seeds)
    report = gradcheck.run_checks(seeds)
    degenerate = gradcheck.degenerate_check()
    print(f"{'class':<8} {'max rel error':>14}  status")
    for cls in gradcheck.CLASSES:
        err = max(report.errors[cls], degenerate.errors[cls])
        print(f"{cls:<8} {err:>14.3e}  {'ok' if err < gradcheck.TOLERANCE else 'FAIL'}")
    if report.passed and degenerate.passed:
        return EXIT_OK
    print("worst offenders:", file=sys.stderr)
    for rep in (report, degenerate):
        for cls, (err, label) in sorted(rep.worst.items(), key=lambda kv: -kv[1][0]):
            if err >= gradcheck.TOLERANCE:
                print(f"  {cls}: {err:.3e} at {label}", file=sys.stderr)
    return EXIT_VERIFY


def cmd_replay(args) -> int:
    cfg = load(args.config)
    res = replay(read_jsonl(args.events), cfg)
    if res.ok:
        print(f"replay ok: {len(res.regenerated)} events identical")
        return EXIT_OK
    print(f"replay diverged at {res.divergence}", file=sys.stderr)
    return EXIT_VERIFY


def cmd_compare(args) -> int:
    cfg_a, cfg_b = load(args.config_a), load(args.config_b)
    res = compare(cfg_a, cfg_b, range(args.seeds), jobs=args.jobs)
    metric = res["metric"]
    print(f"{'run':<4} {'mode':<11} {'median ' + metric:>14} {'IQR':>11}")
    for key in ("a", "b"):
        r = res[key]
        print(f"{key.upper():<4} {r['mode']:<11} {r['median']:>14.6g} {r['iqr']:>11.3g}")
    for ra, rb in zip(res["a"]["runs"], res["b"]["runs"]):
        print(f"  seed {ra['seed']}: A {ra['eval']:.6g} {ra['ranks']}  B {rb['eval']:.6g} {rb['ranks']}")
    print(f"A at least as good as B in {res['wins_a']}/{len(res['seeds'])} seeds")
    if args.out:
        Path(args.out).write_text(json.dumps(res, indent=2) + "\n")
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = load(args.config)
    rows = ablate(cfg, range(args.seeds), args.weights, jobs=args.jobs)
    print(f"{'gamma':>7} {'median eval':>12} {'median gram residual':>21}")
    for r in rows:
        print(f"{r['regu_weight']:>7g} {r['eval']['median']:>12.6g} {r['gram']['median']:>21.4g}")
    if args.out:
        Path(args.out).write_text(json.dumps(rows, indent=2) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="increlora", description="Incremental rank allocation for low-rank adapters.")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train one run and archive its artifacts")
    t.add_argument("config")
    t.add_argument("--seed", type=int, default=None, help="override the config seed")
    t.add_argument("--out", required=True, help="output directory")
    t.set_defaults(func=cmd_train)

    g = sub.add_parser("check-grad", help="finite-difference check of all hand-written gradients")
    g.add_argument("--seed", type=int, default=0, help="first seed")
    g.add_argument("--n-seeds", type=int, default=10)
    g.set_defaults(func=cmd_check_grad)

    r = sub.add_parser("replay", help="re-simulate the allocator from a logged event stream")
    r.add_argument("events")
    r.add_argument("config")
    r.set_defaults(func=cmd_replay)

    c = sub.add_parser("compare", help="run two configs over several seeds")
    c.add_argument("config_a")
    c.add_argument("config_b")
    c.add_argument("--seeds", type=int, default=5)
    c.add_argument("--jobs", type=int, default=1)
    c.add_argument("--out", default=None, help="write the full comparison as JSON")
    c.set_defaults(func=cmd_compare)

    a = sub.add_parser("ablate", help="sweep the orthogonality weight")
    a.add_argument("config")
    a.add_argument("--seeds", type=int, default=3)
    a.add_argument("--weights", type=float, nargs="+", default=list(ABLATION_WEIGHTS))
    a.add_argument("--jobs", type=int, default=1)
    a.add_argument("--out", default=None)
    a.set_defaults(func=cmd_ablate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _setup_logging()
        return args.func(args)
    except ConfigError as exc:
        print("invalid configuration:", file=sys.stderr)
        for e in exc.errors:
            print(f"  {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, RuntimeError, FloatingPointError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

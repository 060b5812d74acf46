"""Command line: ``graphon-sgd run|validate|render``.

Exit codes: 0 success (all assertions pass), 1 an assertion failed,
2 bad config or arguments, 3 the experiment raised.
"""
from __future__ import annotations

import argparse
import json
import os
import shutil
import sys
import tempfile
import time

from .experiments import ConfigError, load_config, run_experiment, write_result

OUT_ENV = "GRAPHON_SGD_OUT"


def _out_dir(cfg, path, override):
    root = override or os.environ.get(OUT_ENV) or os.path.join(os.getcwd(), "runs")
    name = cfg.output or os.path.splitext(os.path.basename(path))[0]
    return os.path.abspath(os.path.join(root, name))


def cmd_run(args) -> int:
    try:
        cfg = load_config(args.config, args.seed)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    if args.threads is not None:
        cfg.threads = args.threads
    final = _out_dir(cfg, args.config, args.out)
    parent = os.path.dirname(final)
    os.makedirs(parent, exist_ok=True)
    tmp = tempfile.mkdtemp(prefix=".partial-", dir=parent)
    start = time.perf_counter()
    try:
        res = run_experiment(cfg)
        write_result(res, tmp)
        with open(os.path.join(tmp, "timing.json"), "w") as fh:
            json.dump({"wall_time_s": time.perf_counter() - start}, fh, indent=2)
            fh.write("\n")
    except ConfigError as e:
        shutil.rmtree(tmp, ignore_errors=True)
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # surface with context, leave nothing behind
        shutil.rmtree(tmp, ignore_errors=True)
        print(f"experiment '{cfg.name}' failed: {type(e).__name__}: {e}", file=sys.stderr)
        return 3
    if os.path.exists(final):
        shutil.rmtree(final)
    os.replace(tmp, final)
    for c in res.summary["assertions"]:
        print(f"{'PASS' if c['pass'] else 'FAIL'}  {c['name']}: {c['value']} (threshold {c['threshold']})")
    print(f"artifacts in {final}")
    return 0 if res.passed else 1


def cmd_validate(args) -> int:
    try:
        cfg = load_config(args.config, args.seed)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    print(f"ok: experiment '{cfg.name}', seed {cfg.seed}, config hash {cfg.digest[:12]}")
    return 0


def cmd_render(args) -> int:
    from .mckean import load_flow
    from .render import render_heatmap
    try:
        flow = load_flow(args.flow_dir)
    except (OSError, ValueError, KeyError) as e:
        print(f"cannot load flow: {e}", file=sys.stderr)
        return 2
    out = args.out or os.path.join(args.flow_dir, "svg")
    files = render_heatmap(flow, out)
    print(f"wrote {len(files)} files to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="graphon-sgd", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.add_argument("--seed", type=int, help="override the config seed")
    r.add_argument("--out", help=f"output root (default ${OUT_ENV} or ./runs)")
    r.add_argument("--threads", type=int, help="override the config thread count")
    r.set_defaults(fn=cmd_run)
    v = sub.add_parser("validate", help="check a config without running it")
    v.add_argument("config")
    v.add_argument("--seed", type=int)
    v.set_defaults(fn=cmd_validate)
    d = sub.add_parser("render", help="render a saved flow directory to SVG heatmaps")
    d.add_argument("flow_dir")
    d.add_argument("--out")
    d.set_defaults(fn=cmd_render)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())

"""Shared helpers for the experiment scripts."""

import argparse
import sys
import time
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def parser(description, default_config):
    p = argparse.ArgumentParser(description=description)
    p.add_argument("--config", default=str(ROOT / "configs" / default_config))
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--threads", type=int)
    return p


def load(args, experiment):
    from isac_slp.harness import load_config

    spec = load_config(args.config).with_(experiment=experiment)
    if args.seed is not None:
        spec = spec.with_(seed=args.seed)
    if args.out:
        spec = spec.with_(output_path=args.out)
    return spec


def show(table, metrics):
    print(f"{'scheme':<10}{'x':>10}  " + "".join(f"{m:>16}" for m in metrics))
    keys = sorted({(r.scheme, r.sweep_value) for r in table})
    for scheme, x in keys:
        cells = []
        for m in metrics:
            try:
                r = table.get(scheme, x, m)
                cells.append(f"{r.value:>10.4f}±{r.stderr:<5.3f}")
            except KeyError:
                cells.append(f"{'-':>16}")
        print(f"{scheme:<10}{x:>10g}  " + "".join(cells))


def timed(fn, *args, **kwargs):
    t = time.perf_counter()
    out = fn(*args, **kwargs)
    print(f"[{time.perf_counter() - t:.1f} s]", file=sys.stderr)
    return out

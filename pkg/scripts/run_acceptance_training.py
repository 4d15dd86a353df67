"""Train every run the desk-scale acceptance criteria need, reusing finished runs.

Usage: python3 scripts/run_acceptance_training.py [--only NAME] [--cache DIR]
"""
import argparse
import time
from pathlib import Path

from adlif_lab.experiments import acceptance_schedule, cached_run, default_cache_root, with_seed
from adlif_lab.trainer.config import load_config

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--only", default=None, help="restrict to one config name")
    ap.add_argument("--cache", default=None)
    args = ap.parse_args()
    cache = Path(args.cache) if args.cache else default_cache_root()
    for name, seed in acceptance_schedule():
        if args.only and name != args.only:
            continue
        cfg = with_seed(load_config(CONFIGS / f"{name}.json"), seed)
        t0 = time.perf_counter()
        summary, out = cached_run(cfg, cache, progress=lambda r: print(f"  {name} s{seed} {r}", flush=True))
        print(
            f"{name} seed={seed} test={summary['test_at_best']:.4f} diverged={summary['diverged']} "
            f"({time.perf_counter() - t0:.0f}s) -> {out}",
            flush=True,
        )


if __name__ == "__main__":
    main()

"""Time a dataset run on the shipped sample references.

    python3 scripts/benchmark_dataset.py --scenes 100 --workers 4
"""
import argparse
import tempfile
import time

from flakesim.materials import data_dir
from flakesim.pipeline import plan_dataset, run_dataset
from flakesim.synthesis import SynthesisConfig


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--scenes", type=int, default=100)
    ap.add_argument("--workers", type=int, default=4)
    ap.add_argument("--flakes", type=int, default=30)
    args = ap.parse_args()
    base = SynthesisConfig.from_json(data_dir() / "configs" / "default.json").to_dict()
    with tempfile.TemporaryDirectory() as out:
        cfg = SynthesisConfig.from_dict({**base, "n_images": args.scenes, "n_flakes": args.flakes,
                                         "reference_dir": str(data_dir() / "references"), "output_dir": out})
        t0 = time.perf_counter()
        man = run_dataset(plan_dataset(cfg), workers=args.workers)
        dt = time.perf_counter() - t0
    print(f"{args.scenes} scenes, {man['total_flakes']} flakes ({man['total_skipped']} skipped), "
          f"{args.workers} workers: {dt:.1f} s ({dt / max(args.scenes, 1):.3f} s/scene)")


if __name__ == "__main__":
    main()

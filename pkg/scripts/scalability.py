"""Single-threaded epoch time as the number of check-ins grows.

Users are scaled while POIs and days stay fixed, so per-user history length
(and hence candidate-sampling cost per draw) is unchanged.

    python3 scripts/scalability.py --factors 1 2 4
"""

import argparse

from geoseer.checkins import Dataset, filter_dataset
from geoseer.experiment import epoch_seconds
from geoseer.model import HyperParams, Variant
from geoseer.synth import SynthConfig, generate


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--factors", type=int, nargs="+", default=[1, 2, 4])
    ap.add_argument("--users", type=int, default=200)
    ap.add_argument("--variant", default="gt-seer")
    args = ap.parse_args()

    hyper = HyperParams(variant=Variant.parse(args.variant))
    base = None
    print("users,checkins,epoch_s,time_ratio,checkin_ratio")
    for f in args.factors:
        corpus = generate(SynthConfig(users=args.users * f))
        ds = Dataset.from_checkins(filter_dataset(corpus.checkins, 5, 10))
        t = epoch_seconds(ds, hyper)
        base = base or (t, len(ds.checkins))
        print(f"{args.users * f},{len(ds.checkins)},{t:.4f},{t / base[0]:.3f},{len(ds.checkins) / base[1]:.3f}")


if __name__ == "__main__":
    main()

"""Bubble-quotient ladders for the Sobolev constant at two cutoff radii."""
import argparse

from fraclap.ground_state import sobolev_ladder


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=1)
    ap.add_argument("--m", type=float, default=0.4)
    ap.add_argument("--deltas", type=float, nargs="+", default=[0.25, 0.4])
    args = ap.parse_args(argv)
    values = []
    for delta in args.deltas:
        est = sobolev_ladder(args.n, args.m, delta=delta)
        values.append(est.value)
        print(f"delta={delta:g}: S_m ~ {est.value:.6f} +- {est.uncertainty:.1e}")
        for t, q in zip(est.ratios, est.quotients):
            print(f"    eps/delta={t:.3e}  quotient {q:.6f}")
    if len(values) > 1:
        spread = (max(values) - min(values)) / min(values)
        print(f"relative spread across ladders: {spread:.3%}")


if __name__ == "__main__":
    main()

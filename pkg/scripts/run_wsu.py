"""Coarse-versus-reference relative Rao entropy on nested 1D grids."""
import argparse

from pnpsteric.config import load_preset, parse_config
from pnpsteric.experiments import wsu


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", help="configuration file; defaults to the wsu-1d preset")
    ap.add_argument("--refinements", type=int, default=3)
    ap.add_argument("--out", default="out/wsu-1d")
    args = ap.parse_args()
    cfg = parse_config(args.config) if args.config else load_preset("wsu-1d")
    rep = wsu(cfg, args.refinements, out_dir=args.out)
    print(f"reference nx = {rep['reference']['nx']}, final time {rep['final_time']:g}")
    for row in rep["levels"]:
        print(f"nx = {row['nx']:4d}  dt = {row['dt']:.3e}  e = {row['e']:.6e}")
    if rep["ratio_last_first"] is not None:
        print(f"last/first = {rep['ratio_last_first']:.3e}")


if __name__ == "__main__":
    main()

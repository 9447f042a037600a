"""Relative-entropy decay of the pure-Neumann two-species benchmark."""
import argparse
import json

from pnpsteric.config import load_preset, parse_config
from pnpsteric.experiments import decay


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", help="configuration file; defaults to the decay-1d preset")
    ap.add_argument("--out", default="out/decay-1d")
    args = ap.parse_args()
    cfg = parse_config(args.config) if args.config else load_preset("decay-1d")
    print(json.dumps(decay(cfg, out_dir=args.out), indent=2))


if __name__ == "__main__":
    main()

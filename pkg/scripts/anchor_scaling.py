#!/usr/bin/env python3
"""Held-out EER of the two-stage detector as the number of training anchor classes grows."""

import argparse
import json
import time

from kwscascade import experiments as E, pipeline
from kwscascade.phonemes import load_inventory


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--anchors", type=int, nargs="+", default=[10, 50, 200])
    ap.add_argument("--examples", type=int, default=12000)
    args = ap.parse_args()

    inv = load_inventory()
    enc = pipeline.StubEncoder(inv.size, 144, seed=1234)
    rows = []
    for n in args.anchors:
        t0 = time.perf_counter()
        res, _ = E.discrimination(n, inv, enc, n_examples=args.examples)
        rows.append({"anchors": n, "m1_eer": res.m1_eer, "m1_auc": res.m1_auc, "m0_eer": res.m0_eer,
                     "seconds": round(time.perf_counter() - t0, 1)})
        print(json.dumps(rows[-1]), flush=True)
    eers = [r["m1_eer"] for r in rows]
    print("non-increasing (0.01 tolerance):", all(b <= a + 0.01 for a, b in zip(eers, eers[1:])))


if __name__ == "__main__":
    main()

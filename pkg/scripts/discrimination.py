#!/usr/bin/env python3
"""Train the matcher on synthetic anchors and compare M0 against M1 on held-out confusable pairs."""

import argparse
import json
import time

from kwscascade import experiments as E, matcher, pipeline
from kwscascade.phonemes import load_inventory


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--anchors", type=int, default=200)
    ap.add_argument("--examples", type=int, default=12000, help="training pairs, independent of the anchor count")
    ap.add_argument("--epochs", type=int, default=10)
    ap.add_argument("--lr", type=float, default=0.05)
    ap.add_argument("--batch", type=int, default=16)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--weights", help="save the trained weights here (MWTS1)")
    args = ap.parse_args()

    inv = load_inventory()
    enc = pipeline.StubEncoder(inv.size, 144, seed=1234)
    hyper = matcher.TrainHyper(lr=args.lr, epochs=args.epochs, batch=args.batch)
    t0 = time.perf_counter()
    res, w = E.discrimination(args.anchors, inv, enc, hyper=hyper, n_examples=args.examples, train_seed=args.seed,
                              log=lambda ep, loss: print(f"epoch {ep} loss {loss:.4f}", flush=True))
    if args.weights:
        matcher.save_weights(w, args.weights)
    out = {k: v for k, v in vars(res).items() if k != "losses"}
    out["seconds"] = round(time.perf_counter() - t0, 1)
    print(json.dumps(out, indent=2))


if __name__ == "__main__":
    main()

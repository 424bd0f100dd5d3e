"""Command-line entry point: ``kwscascade <command> ...``.

Exit codes: 0 success, 2 usage or data error, 3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import ctc, experiments, matcher, metrics, pipeline
from .errors import KwsError, MissingWeights
from .phonemes import (
    DEFAULT_FUZZY,
    DEFAULT_INVENTORY,
    DEFAULT_LEXICON,
    FuzzyMap,
    PhonemeSeq,
    load_fuzzy_map,
    load_inventory,
    load_lexicon,
    tokenize,
)
from .pgram import SynthSpec, read_pgrm, synthesize, write_pgrm

EXIT_OK, EXIT_DATA, EXIT_INTERNAL = 0, 2, 3
CONFIG_KEYS = ("inventory", "lexicon", "fuzzy", "weights")


def fmt(x) -> str:
    return f"{x:.6g}"


# -- shared resources ----------------------------------------------------------


def read_config(path) -> dict:
    """``key = value`` lines (no header); blank lines and ``#`` comments ignored."""
    out = {}
    base = Path(path).parent
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or key not in CONFIG_KEYS:
            raise KwsError(f"{path}:{lineno}: expected one of {', '.join(CONFIG_KEYS)} = <path>")
        out[key] = str(base / value) if not Path(value).is_absolute() else value
    return out


class Resources:
    def __init__(self, args):
        cfg = read_config(args.config) if getattr(args, "config", None) else {}
        pick = lambda key, default: getattr(args, key, None) or cfg.get(key) or default
        self.inv = load_inventory(pick("inventory", DEFAULT_INVENTORY))
        self._lexicon_path = pick("lexicon", DEFAULT_LEXICON)
        self._lex = None
        self.fuzzy = FuzzyMap.identity() if getattr(args, "no_fuzzy", False) else load_fuzzy_map(pick("fuzzy", DEFAULT_FUZZY), self.inv)
        self.weights_path = pick("weights", None)

    @property
    def lex(self):
        if self._lex is None:
            self._lex = load_lexicon(self._lexicon_path, self.inv)
        return self._lex

    def keyword(self, text=None, phonemes=None) -> PhonemeSeq:
        if phonemes:
            return PhonemeSeq.from_symbols(phonemes.split(), self.inv, source_text=text or phonemes)
        return tokenize(text or "", self.lex, self.inv)

    def spec(self, text=None, phonemes=None) -> pipeline.KeywordSpec:
        seq = self.keyword(text, phonemes)
        kw_id = pipeline.keyword_id(text) if text else None
        return pipeline.enroll_phonemes(seq, self.inv, self.fuzzy, kw_id)

    def weights(self, required: bool):
        if not self.weights_path:
            if required:
                raise MissingWeights("this mode needs --weights")
            return None
        return matcher.load_weights(self.weights_path)


def search_config(args) -> ctc.SearchConfig:
    return ctc.SearchConfig(threshold=args.s1_threshold, patience=args.patience, min_gap=args.min_gap)


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# -- commands ------------------------------------------------------------------


def cmd_tokenize(args) -> int:
    res = Resources(args)
    seq = tokenize(args.text, res.lex, res.inv)
    print(" ".join(seq.symbols(res.inv)))
    print(" ".join(str(i) for i in seq.tokens))
    return EXIT_OK


def cmd_synth(args) -> int:
    res = Resources(args)
    kw = None if args.background else res.keyword(args.keyword, args.phonemes)
    need = 0 if kw is None else len(kw) * args.fpp
    insert = args.insert_at if args.insert_at is not None else max(0, (args.frames - need) // 2)
    spec = SynthSpec(kw, args.frames, args.fpp, insert, args.peak, args.seed)
    pg, truth = synthesize(spec, res.inv)
    out = Path(args.out)
    write_pgrm(pg, out)
    info = {"frames": args.frames, "peak_prob": args.peak, "seed": args.seed, "frame_shift_s": pg.frame_shift_s}
    if truth is not None:
        info.update(start_frame=truth.start_frame, end_frame=truth.end_frame, phonemes=kw.symbols(res.inv))
    write_json(out.with_suffix(".truth.json"), info)
    if args.features:
        np.save(out.with_suffix(".npy"), pipeline.StubEncoder(res.inv.size, args.d_enc)(pg.frames))
    span = f"{truth.start_frame} {truth.end_frame}" if truth else "none"
    print(f"wrote {out} frames={args.frames} truth={span}")
    return EXIT_OK


def cmd_search(args) -> int:
    res = Resources(args)
    pg = read_pgrm(args.pgrm, res.inv)
    spec = res.spec(args.keyword, args.phonemes)
    for hit in ctc.search(pg, spec.automaton, search_config(args)):
        print(json.dumps({"keyword": spec.id, "start_frame": hit.start_frame, "end_frame": hit.end_frame, "s1": hit.s1}))
    return EXIT_OK


def _record_spec(res, rec):
    if rec.get("anchor_phonemes"):
        ph = rec["anchor_phonemes"]
        return res.spec(rec.get("anchor_text"), ph if isinstance(ph, str) else " ".join(ph))
    return res.spec(rec.get("anchor_text"))


def cmd_run(args) -> int:
    res = Resources(args)
    mode = args.mode.upper()
    weights = res.weights(required=mode != "M0")
    records = pipeline.read_manifest(args.manifest)
    cfg = pipeline.PipelineConfig(mode, args.s1_threshold, args.s2_threshold, search_config(args), args.padding)

    def load_features(rec):
        if mode != "M1":
            return None
        if not rec.get("features_path"):
            raise pipeline.MissingFeatures("M1 needs features_path")
        return np.load(rec["features_path"])

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows, dets = pipeline.score_dump(
        records,
        lambda rec: [_record_spec(res, rec)],
        weights,
        cfg,
        out / "scores.csv",
        lambda rec: read_pgrm(rec["pgrm_path"], res.inv),
        load_features,
    )
    with open(out / "detections.jsonl", "w") as f:
        for ex_id in sorted(dets):
            for d in dets[ex_id]:
                f.write(json.dumps({"id": ex_id, **d.to_json()}, sort_keys=True) + "\n")
    col = 2 if mode == "M0" else 3
    scores = metrics.ScoreSet([r[col] for r in rows if r[1] == 1], [r[col] for r in rows if r[1] == 0])
    report = {"mode": mode, "n_records": len(rows), "n_detections": sum(len(v) for v in dets.values())}
    if scores.pos and scores.neg:
        report.update(auc=metrics.auc(scores), eer=metrics.eer(scores))
    write_json(out / "metrics.json", report)
    summary = " ".join(f"{k}={fmt(v) if isinstance(v, float) else v}" for k, v in report.items())
    print(summary)
    return EXIT_OK


def _load_dataset(path, inv) -> list[matcher.MatchExample]:
    """Records carry ``anchor`` (indices) or ``anchor_phonemes`` (symbols), ``label`` and ``features_path``."""
    root = Path(path)
    manifest = root / "examples.jsonl" if root.is_dir() else root
    out = []
    for rec in pipeline.read_manifest(manifest):
        feats = np.load(rec["features_path"])
        if "anchor" in rec:
            anchor = tuple(int(i) for i in rec["anchor"])
        else:
            anchor = PhonemeSeq.from_symbols(rec["anchor_phonemes"].split(), inv).tokens
        label = int(rec["label"])
        phon = tuple(int(x) for x in rec.get("labels_phon", [label] * len(anchor)))
        out.append(matcher.MatchExample(feats, anchor, label, phon))
    return out


def _matcher_config(args, n_symbols, d_enc) -> matcher.MatcherConfig:
    return matcher.MatcherConfig(n_symbols, args.d_model, d_enc, args.layers, args.heads, args.d_gru, args.seed)


def cmd_make_dataset(args) -> int:
    res = Resources(args)
    setup = experiments.SynthSetup()
    rng = np.random.default_rng(args.seed)
    anchors = experiments.random_anchors(args.anchors, res.inv, setup, rng)
    reps = [anchors[i % len(anchors)] for i in range(max(1, args.examples // 2))]
    ps = experiments.make_pairs(reps, res.inv, setup, rng, easy_rate=setup.easy_negative_rate)
    enc = pipeline.StubEncoder(res.inv.size, args.d_enc)
    examples = experiments.training_examples(ps, enc, setup)
    out = Path(args.out)
    (out / "features").mkdir(parents=True, exist_ok=True)
    with open(out / "examples.jsonl", "w") as f:
        for i, ex in enumerate(examples):
            rel = f"features/{i:06d}.npy"
            np.save(out / rel, ex.audio_features)
            rec = {
                "id": f"{i:06d}",
                "anchor": list(ex.anchor),
                "label": ex.label_utt,
                "labels_phon": list(ex.labels_phon),
                "features_path": rel,
            }
            f.write(json.dumps(rec) + "\n")
    print(f"wrote {len(examples)} examples over {len(anchors)} anchors to {out}")
    return EXIT_OK


def cmd_train_matcher(args) -> int:
    inv = Resources(args).inv
    data = _load_dataset(args.data, inv)
    if not data:
        raise matcher.EmptyDataset("no training examples")
    cfg = _matcher_config(args, inv.size, data[0].audio_features.shape[1])
    hyper = matcher.TrainHyper(args.lr, args.momentum, args.epochs, args.batch, args.seed, args.clip_norm)
    print("objective: utterance BCE + phoneme BCE (stage-1 CTC loss not trained here; stage 1 is frozen)")
    w, hist = matcher.train(data, cfg, hyper, log=lambda e, l: print(f"epoch {e + 1} loss {fmt(l)}", flush=True))
    matcher.save_weights(w, args.out)
    if args.log:
        Path(args.log).write_text("epoch,loss\n" + "".join(f"{i + 1},{l!r}\n" for i, l in enumerate(hist)))
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_grad_check(args) -> int:
    cfg = matcher.MatcherConfig(args.symbols, args.d_model, args.d_enc, args.layers, args.heads, args.d_gru, args.seed)
    w = matcher.init_weights(cfg).astype(np.float64)
    rng = np.random.default_rng(args.seed)
    anchor = tuple(int(x) for x in rng.integers(1, cfg.n_symbols, size=args.anchor_len))
    ex = matcher.MatchExample(rng.standard_normal((args.frames, cfg.d_enc)), anchor, 0, tuple(int(x) for x in rng.integers(0, 2, size=len(anchor))))
    report = matcher.gradient_check(ex, w, h=args.h)
    for name, err in report.items():
        print(f"{name} {fmt(err)}")
    worst = max(report.values())
    print(f"max_rel_error {fmt(worst)}")
    return EXIT_OK if worst <= args.tolerance else EXIT_INTERNAL


def cmd_metrics(args) -> int:
    rows = pipeline.read_score_csv(args.scores)
    col = {"s1": 2, "s2": 3}[args.column]
    vals = [(r[1], r[col]) for r in rows]
    if any(v is None for _, v in vals):
        raise KwsError(f"column {args.column} is empty in {args.scores}")
    s = metrics.ScoreSet([v for l, v in vals if l == 1], [v for l, v in vals if l == 0])
    out = {"auc": metrics.auc(s), "eer": metrics.eer(s)}
    if args.negative_hours:
        fa = tuple(v for l, v in vals if l == 0 and v > 0)
        se = metrics.StreamEval(s.pos, fa, args.negative_hours)
        out["recall_at_far"] = {fmt(r): metrics.recall_at_far(se, r)[0] for r in args.fa_rate}
    if args.out:
        write_json(args.out, out)
    print(f"auc {fmt(out['auc'])} eer {fmt(100 * out['eer'])}%")
    for r, v in out.get("recall_at_far", {}).items():
        print(f"recall@{r}FA/h {fmt(v)}")
    return EXIT_OK


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kwscascade", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value file with inventory/lexicon/fuzzy/weights paths")
    common.add_argument("--inventory")
    common.add_argument("--lexicon")
    common.add_argument("--fuzzy")
    common.add_argument("--no-fuzzy", action="store_true", help="disable fuzzy phoneme merging")
    common.add_argument("--seed", type=int, default=0)

    search = argparse.ArgumentParser(add_help=False)
    search.add_argument("--s1-threshold", type=float, default=0.5)
    search.add_argument("--patience", type=int, default=5)
    search.add_argument("--min-gap", type=int, default=None)

    kw = argparse.ArgumentParser(add_help=False)
    g = kw.add_mutually_exclusive_group()
    g.add_argument("--keyword", help="keyword text (lexicon lookup)")
    g.add_argument("--phonemes", help="keyword as space-separated phoneme symbols")

    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--d-model", type=int, default=64)
    model.add_argument("--d-gru", type=int, default=64)
    model.add_argument("--layers", type=int, default=2)
    model.add_argument("--heads", type=int, default=2)

    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("tokenize", parents=[common], help="print the phoneme sequence of a text")
    s.add_argument("text")
    s.set_defaults(func=cmd_tokenize)

    s = sub.add_parser("synth", parents=[common, kw], help="synthesize a posteriorgram with a planted keyword")
    s.add_argument("--background", action="store_true", help="plant nothing")
    s.add_argument("--frames", type=int, required=True)
    s.add_argument("--fpp", type=int, default=4)
    s.add_argument("--insert-at", type=int, default=None, help="default: centered")
    s.add_argument("--peak", type=float, default=0.95)
    s.add_argument("--features", action="store_true", help="also write stage-1 features as .npy")
    s.add_argument("--d-enc", type=int, default=144)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("search", parents=[common, kw, search], help="stage-1 search over one posteriorgram")
    s.add_argument("pgrm")
    s.set_defaults(func=cmd_search)

    s = sub.add_parser("run", parents=[common, search], help="two-stage pipeline over a manifest")
    s.add_argument("manifest")
    s.add_argument("--mode", choices=("m0", "m1", "m2"), default="m0")
    s.add_argument("--weights")
    s.add_argument("--s2-threshold", type=float, default=0.5)
    s.add_argument("--padding", type=int, default=2)
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("make-dataset", parents=[common], help="synthetic matcher training pairs")
    s.add_argument("--anchors", type=int, default=200)
    s.add_argument("--examples", type=int, default=2000)
    s.add_argument("--d-enc", type=int, default=144)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_make_dataset)

    s = sub.add_parser("train-matcher", parents=[common, model], help="train the stage-2 matcher")
    s.add_argument("--data", required=True, help="dataset directory (examples.jsonl) or manifest")
    s.add_argument("--lr", type=float, default=0.05)
    s.add_argument("--momentum", type=float, default=0.9)
    s.add_argument("--epochs", type=int, default=30)
    s.add_argument("--batch", type=int, default=16)
    s.add_argument("--clip-norm", type=float, default=1.0)
    s.add_argument("--log", help="per-epoch loss CSV")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train_matcher)

    s = sub.add_parser("grad-check", parents=[common], help="finite-difference check of the matcher gradients")
    s.add_argument("--symbols", type=int, default=9)
    s.add_argument("--d-model", type=int, default=8)
    s.add_argument("--d-gru", type=int, default=8)
    s.add_argument("--d-enc", type=int, default=6)
    s.add_argument("--layers", type=int, default=2)
    s.add_argument("--heads", type=int, default=2)
    s.add_argument("--frames", type=int, default=5)
    s.add_argument("--anchor-len", type=int, default=3)
    s.add_argument("--h", type=float, default=1e-4)
    s.add_argument("--tolerance", type=float, default=1e-4)
    s.set_defaults(func=cmd_grad_check)

    s = sub.add_parser("metrics", help="AUC / EER / recall@FAR from a score CSV")
    s.add_argument("scores")
    s.add_argument("--column", choices=("s1", "s2"), default="s1")
    s.add_argument("--negative-hours", type=float, default=None)
    s.add_argument("--fa-rate", type=float, nargs="+", default=[0.5, 1.0])
    s.add_argument("--out")
    s.set_defaults(func=cmd_metrics)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (KwsError, OSError, ValueError) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_DATA
    except Exception as e:  # noqa: BLE001 - anything else is a bug
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())

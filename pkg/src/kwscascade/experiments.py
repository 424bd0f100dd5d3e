"""Desk-scale synthetic experiments for the two-stage detector.

Anchors are random phoneme strings. A positive pair plants the anchor itself;
a confusable negative plants the anchor with one phoneme substituted. The
matcher is trained on ground-truth crops of stage-1 features and evaluated
through the full pipeline on held-out anchors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ctc, matcher, metrics, pipeline
from .phonemes import BLANK, PhonemeInventory, PhonemeSeq
from .pgram import SynthSpec, synthesize


@dataclass(frozen=True)
class SynthSetup:
    min_len: int = 3
    max_len: int = 6
    fpp_range: tuple = (3, 5)
    peak_range: tuple = (0.3, 0.9)
    lead_range: tuple = (4, 12)  # blank frames before and after the keyword
    padding: int = 2
    easy_negative_rate: float = 0.25  # share of training negatives using an unrelated anchor
    exclude: tuple = ("SIL",)


@dataclass
class PairSet:
    anchors: list
    pgs: list
    truths: list
    labels: list
    planted: list = field(default_factory=list)


def phoneme_pool(inv: PhonemeInventory, setup: SynthSetup) -> np.ndarray:
    return np.array([i for i, s in enumerate(inv.symbols) if s != BLANK and s not in setup.exclude])


def random_anchors(n: int, inv: PhonemeInventory, setup: SynthSetup, rng) -> list[PhonemeSeq]:
    pool = phoneme_pool(inv, setup)
    seen, out = set(), []
    while len(out) < n:
        L = int(rng.integers(setup.min_len, setup.max_len + 1))
        toks = tuple(int(t) for t in rng.choice(pool, size=L))
        # the synthesizer plants repeats back to back, which CTC reads as one phoneme
        if toks in seen or any(a == b for a, b in zip(toks, toks[1:])):
            continue
        seen.add(toks)
        out.append(PhonemeSeq(toks, " ".join(inv.symbols[t] for t in toks)))
    return out


def substitute(anchor: PhonemeSeq, inv: PhonemeInventory, setup: SynthSetup, rng) -> PhonemeSeq:
    """Anchor with one phoneme swapped for one that differs from it and its neighbours."""
    pool = phoneme_pool(inv, setup)
    toks = list(anchor.tokens)
    i = int(rng.integers(len(toks)))
    avoid = set(toks[max(0, i - 1) : i + 2])
    choices = pool[~np.isin(pool, list(avoid))]
    toks[i] = int(rng.choice(choices))
    return PhonemeSeq(tuple(toks))


def phoneme_labels(anchor: PhonemeSeq, planted: PhonemeSeq) -> tuple:
    """1 where the anchor phoneme equals the planted phoneme at the same position, else 0."""
    a, p = anchor.tokens, planted.tokens
    return tuple(int(i < len(p) and a[i] == p[i]) for i in range(len(a)))


def plant(keyword: PhonemeSeq, inv: PhonemeInventory, setup: SynthSetup, rng):
    fpp = int(rng.integers(setup.fpp_range[0], setup.fpp_range[1] + 1))
    lead = int(rng.integers(setup.lead_range[0], setup.lead_range[1] + 1))
    tail = int(rng.integers(setup.lead_range[0], setup.lead_range[1] + 1))
    peak = float(rng.uniform(*setup.peak_range))
    total = lead + len(keyword) * fpp + tail
    spec = SynthSpec(keyword, total, fpp, lead, peak, int(rng.integers(2**31)))
    return synthesize(spec, inv)


def make_pairs(anchors, inv, setup: SynthSetup, rng, per_anchor: int = 1, easy_rate: float = 0.0) -> PairSet:
    """For each anchor: ``per_anchor`` positives and as many negatives."""
    ps = PairSet([], [], [], [])
    for a in anchors:
        for _ in range(per_anchor):
            for label in (1, 0):
                if label:
                    kw = a
                elif easy_rate and rng.uniform() < easy_rate:
                    kw = random_anchors(1, inv, setup, rng)[0]
                else:
                    kw = substitute(a, inv, setup, rng)
                pg, truth = plant(kw, inv, setup, rng)
                ps.anchors.append(a)
                ps.pgs.append(pg)
                ps.truths.append(truth)
                ps.labels.append(label)
                ps.planted.append(kw)
    return ps


def training_examples(ps: PairSet, encoder, setup: SynthSetup) -> list[matcher.MatchExample]:
    out = []
    for a, pg, truth, label, kw in zip(ps.anchors, ps.pgs, ps.truths, ps.labels, ps.planted):
        feats = encoder(pg.frames)
        lo = max(0, truth.start_frame - setup.padding)
        hi = min(pg.n_frames - 1, truth.end_frame + setup.padding)
        labels_phon = tuple([1] * len(a)) if label else phoneme_labels(a, kw)
        out.append(matcher.MatchExample(feats[lo : hi + 1], a.tokens, label, labels_phon))
    return out


def pair_scores(ps: PairSet, inv, weights, cfg: pipeline.PipelineConfig, encoder=None, fuzzy=None):
    """Per-pair (label, s1, s2) through the full pipeline; misses score 0."""
    out = []
    for a, pg, label in zip(ps.anchors, ps.pgs, ps.labels):
        spec = pipeline.enroll_phonemes(a, inv, fuzzy)
        feats = encoder(pg.frames) if encoder is not None and cfg.mode == "M1" else None
        dets = pipeline.run(pg, feats, [spec], weights, cfg)
        s1, s2 = pipeline.best_scores(dets)
        out.append((label, s1, s2))
    return out


def score_set(scores, column: int) -> metrics.ScoreSet:
    pos = [r[column] or 0.0 for r in scores if r[0] == 1]
    neg = [r[column] or 0.0 for r in scores if r[0] == 0]
    return metrics.ScoreSet(pos, neg)


@dataclass
class DiscriminationResult:
    matcher_auc: float
    m1_auc: float
    m1_eer: float
    m0_auc: float
    m0_eer: float
    losses: list


def train_matcher(n_anchors: int, inv, setup: SynthSetup, mcfg: matcher.MatcherConfig, hyper: matcher.TrainHyper,
                  encoder, seed: int, n_examples: int | None = None, log=None):
    """Train on ``n_anchors`` classes; ``n_examples`` fixes the pair count regardless of class count."""
    rng = np.random.default_rng(seed)
    anchors = random_anchors(n_anchors, inv, setup, rng)
    if n_examples is not None:
        reps = [anchors[i % n_anchors] for i in range(n_examples // 2)]
        ps = make_pairs(reps, inv, setup, rng, easy_rate=setup.easy_negative_rate)
    else:
        ps = make_pairs(anchors, inv, setup, rng, easy_rate=setup.easy_negative_rate)
    data = training_examples(ps, encoder, setup)
    return matcher.train(data, mcfg, hyper, log=log)


def heldout_pairs(n_anchors: int, inv, setup: SynthSetup, seed: int) -> PairSet:
    rng = np.random.default_rng(seed)
    return make_pairs(random_anchors(n_anchors, inv, setup, rng), inv, setup, rng)


def matcher_auc(ps: PairSet, weights, encoder, setup: SynthSetup) -> float:
    """AUC of p_utt on ground-truth crops (matcher alone, no stage 1)."""
    exs = training_examples(ps, encoder, setup)
    scores = [matcher.forward(e.audio_features, e.anchor, weights).p_utt for e in exs]
    pos = [s for s, e in zip(scores, exs) if e.label_utt == 1]
    neg = [s for s, e in zip(scores, exs) if e.label_utt == 0]
    return metrics.auc(metrics.ScoreSet(pos, neg))


def evaluate(ps: PairSet, inv, weights, encoder, setup: SynthSetup, s1_threshold: float = 0.05) -> DiscriminationResult:
    search = ctc.SearchConfig()
    m0 = pair_scores(ps, inv, None, pipeline.PipelineConfig("M0", s1_threshold, 0.0, search, setup.padding))
    m1 = pair_scores(ps, inv, weights, pipeline.PipelineConfig("M1", s1_threshold, 0.0, search, setup.padding), encoder)
    s0, s1 = score_set(m0, 1), score_set(m1, 2)
    return DiscriminationResult(
        matcher_auc(ps, weights, encoder, setup),
        metrics.auc(s1),
        metrics.eer(s1),
        metrics.auc(s0),
        metrics.eer(s0),
        [],
    )


# -- drivers shared by scripts/ and the acceptance suite ---------------------


@dataclass
class PlantResult:
    peak: float
    n_streams: int
    recalled: int  # streams with a hit overlapping the planted span
    exact: int  # streams whose only hit is the planted span with s1 == 1.0
    false_alarms: int  # hits outside the planted span, on positive and negative streams


def plant_and_recover(inv, peak: float, n_streams: int = 200, threshold: float = 0.5, seed: int = 0,
                      setup: SynthSetup = SynthSetup()) -> PlantResult:
    """Plant one random keyword per stream, then search for it; pair each with a background-only stream."""
    rng = np.random.default_rng(seed)
    cfg = ctc.SearchConfig(threshold=threshold)
    recalled = exact = fa = 0
    for i in range(n_streams):
        kw = random_anchors(1, inv, setup, rng)[0]
        fpp = int(rng.integers(setup.fpp_range[0], setup.fpp_range[1] + 1))
        lead, tail = (int(x) for x in rng.integers(5, 30, size=2))
        total = lead + len(kw) * fpp + tail
        auto = ctc.build_automaton(kw, None, inv.size, inv.blank_index)
        pg, truth = synthesize(SynthSpec(kw, total, fpp, lead, peak, 2 * i), inv)
        hits = ctc.search(pg, auto, cfg)
        overlap = [h.start_frame <= truth.end_frame and h.end_frame >= truth.start_frame for h in hits]
        recalled += any(overlap)
        fa += overlap.count(False)
        exact += [(h.start_frame, h.end_frame, h.s1) for h in hits] == [(truth.start_frame, truth.end_frame, 1.0)]
        bg, _ = synthesize(SynthSpec(None, total, fpp, 0, peak, 2 * i + 1), inv)
        fa += len(ctc.search(bg, auto, cfg))
    return PlantResult(peak, n_streams, recalled, exact, fa)


def fuzzy_trials(inv, fuzzy, a: str = "AY1", b: str = "EY1", n: int = 100, seed: int = 0,
                 setup: SynthSetup = SynthSetup()) -> list[tuple[float, float]]:
    """(unmerged s1, merged s1) per case: the keyword is spelled with ``a``, the stream carries ``b``."""
    rng = np.random.default_rng(seed)
    ia, ib = inv.index(a), inv.index(b)
    cfg = ctc.SearchConfig(threshold=0.0)
    out = []
    while len(out) < n:
        kw = random_anchors(1, inv, setup, rng)[0]
        toks = list(kw.tokens)
        i = int(rng.integers(len(toks)))
        toks[i] = ia
        if ib in toks or any(x == y for x, y in zip(toks, toks[1:])):
            continue
        spoken = PhonemeSeq(tuple(ib if j == i else t for j, t in enumerate(toks)))
        fpp = int(rng.integers(setup.fpp_range[0], setup.fpp_range[1] + 1))
        peak = float(rng.uniform(0.6, 1.0))
        pg, _ = synthesize(SynthSpec(spoken, len(toks) * fpp + 20, fpp, 10, peak, len(out)), inv)
        best = []
        for fz in (None, fuzzy):
            auto = ctc.build_automaton(PhonemeSeq(tuple(toks)), fz, inv.size, inv.blank_index)
            best.append(max((h.s1 for h in ctc.search(pg, auto, cfg)), default=0.0))
        out.append(tuple(best))
    return out


def discrimination(n_anchors: int, inv, encoder, setup: SynthSetup = SynthSetup(),
                   mcfg: matcher.MatcherConfig | None = None, hyper: matcher.TrainHyper | None = None,
                   n_examples: int = 12000, train_seed: int = 1, heldout_anchors: int = 200,
                   heldout_seed: int = 99, log=None):
    """Train on ``n_anchors`` classes, evaluate M0 and M1 on held-out anchors. Returns (result, weights)."""
    mcfg = mcfg or matcher.MatcherConfig(n_symbols=inv.size, d_enc=encoder.d_enc)
    hyper = hyper or matcher.TrainHyper(lr=0.05, epochs=10, batch=16)
    w, hist = train_matcher(n_anchors, inv, setup, mcfg, hyper, encoder, train_seed, n_examples, log)
    res = evaluate(heldout_pairs(heldout_anchors, inv, setup, heldout_seed), inv, w, encoder, setup)
    res.losses = list(hist)
    return res, w

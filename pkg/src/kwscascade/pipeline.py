"""Two-stage orchestration: enrollment, stage-1 search, candidate features, stage-2 verification."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Protocol

import numpy as np

from . import ctc, matcher
from .errors import DimensionMismatch, KwsError, MissingFeatures, MissingWeights, RecordError, SegmentOutOfRange
from .phonemes import FuzzyMap, Lexicon, PhonemeInventory, PhonemeSeq, tokenize
from .pgram import Posteriorgram

MODES = ("M0", "M1", "M2")


class EncoderInterface(Protocol):
    d_enc: int

    def __call__(self, raw: np.ndarray) -> np.ndarray:
        """Map a T x d_in block of raw frames to T'' x d_enc features."""


@dataclass(frozen=True, eq=False)
class StubEncoder:
    """Fixed random projection of centered log-posteriors.

    Stands in for a trained acoustic encoder: the stage-1 instance produces
    the stream features cropped in M1, a second instance (different seed)
    re-encodes candidate spans in M2.
    """

    d_in: int
    d_enc: int = 144
    seed: int = 1234
    floor: float = 1e-6

    def __post_init__(self):
        rng = np.random.default_rng(self.seed)
        proj = rng.standard_normal((self.d_in, self.d_enc))
        object.__setattr__(self, "_proj", proj)

    def __call__(self, raw: np.ndarray) -> np.ndarray:
        raw = np.asarray(raw, dtype=np.float64)
        if raw.ndim != 2 or raw.shape[1] != self.d_in:
            raise DimensionMismatch(f"encoder expects T x {self.d_in}, got {raw.shape}")
        logp = np.log(raw + self.floor)
        return (logp - logp.mean(axis=1, keepdims=True)) @ self._proj


@dataclass(frozen=True, eq=False)
class KeywordSpec:
    id: str
    text: str
    seq: PhonemeSeq
    automaton: ctc.KeywordAutomaton


def keyword_id(text: str) -> str:
    return "_".join(text.lower().split())


def enroll(text: str, lex: Lexicon, inv: PhonemeInventory, fuzzy: FuzzyMap | None = None) -> KeywordSpec:
    seq = tokenize(text, lex, inv)
    return KeywordSpec(keyword_id(text), text, seq, ctc.build_automaton(seq, fuzzy, inv.size, inv.blank_index))


def enroll_phonemes(seq: PhonemeSeq, inv: PhonemeInventory, fuzzy: FuzzyMap | None = None, kw_id: str | None = None) -> KeywordSpec:
    """Enroll a keyword given directly as phonemes (no lexicon lookup)."""
    text = " ".join(seq.symbols(inv))
    kw_id = kw_id or keyword_id(seq.source_text or text)
    return KeywordSpec(kw_id, seq.source_text or text, seq, ctc.build_automaton(seq, fuzzy, inv.size, inv.blank_index))


@dataclass(frozen=True)
class PipelineConfig:
    mode: str = "M0"
    s1_threshold: float = 0.5
    s2_threshold: float = 0.5
    search: ctc.SearchConfig = field(default_factory=ctc.SearchConfig)
    padding: int = 2
    encoder: EncoderInterface | None = None  # M2 re-encoder; built lazily when None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not (0.0 <= self.s1_threshold <= 1.0 and 0.0 <= self.s2_threshold <= 1.0):
            raise ValueError("thresholds must lie in [0, 1]")
        if self.padding < 0:
            raise ValueError("padding must be >= 0")

    def search_config(self) -> ctc.SearchConfig:
        return replace(self.search, threshold=self.s1_threshold)


@dataclass(frozen=True)
class Detection:
    keyword_id: str
    t_start_s: float
    t_end_s: float
    s1: float
    s2: float | None
    final: float
    mode: str
    start_frame: int = 0
    end_frame: int = 0

    def to_json(self) -> dict:
        return {
            "keyword": self.keyword_id,
            "t_start_s": self.t_start_s,
            "t_end_s": self.t_end_s,
            "s1": self.s1,
            "s2": self.s2,
            "final": self.final,
            "mode": self.mode,
        }


def padded_span(n_frames: int, seg, padding: int) -> tuple[int, int]:
    if not (0 <= seg.start_frame <= seg.end_frame < n_frames):
        raise SegmentOutOfRange(f"segment ({seg.start_frame}, {seg.end_frame}) outside [0, {n_frames})")
    return max(0, seg.start_frame - padding), min(n_frames - 1, seg.end_frame + padding)


def crop_features(features: np.ndarray, seg, padding: int = 2) -> np.ndarray:
    lo, hi = padded_span(len(features), seg, padding)
    return np.array(features[lo : hi + 1], copy=True)


def _default_m2_encoder(n_symbols: int, d_enc: int) -> StubEncoder:
    return StubEncoder(n_symbols, d_enc, seed=4321)


def run(pg: Posteriorgram, features, specs, weights: matcher.MatcherWeights | None, cfg: PipelineConfig) -> list[Detection]:
    if cfg.mode in ("M1", "M2") and weights is None:
        raise MissingWeights(f"mode {cfg.mode} needs matcher weights")
    if cfg.mode == "M1":
        if features is None:
            raise MissingFeatures("mode M1 needs stage-1 features")
        features = np.asarray(features)
        if features.shape[0] != pg.n_frames:
            raise DimensionMismatch(f"features have {features.shape[0]} rows, posteriorgram has {pg.n_frames} frames")
    encoder = cfg.encoder
    if cfg.mode == "M2" and encoder is None:
        encoder = _default_m2_encoder(pg.n_symbols, weights.config.d_enc)

    shift = pg.frame_shift_s
    search_cfg = cfg.search_config()
    out = []
    for spec in specs:
        for seg in ctc.search(pg, spec.automaton, search_cfg):
            s2 = None
            if cfg.mode == "M0":
                final = seg.s1
            else:
                if cfg.mode == "M1":
                    cand = crop_features(features, seg, cfg.padding)
                else:
                    lo, hi = padded_span(pg.n_frames, seg, cfg.padding)
                    cand = encoder(pg.frames[lo : hi + 1])
                s2 = matcher.forward(cand, spec.seq, weights).p_utt
                if s2 < cfg.s2_threshold:
                    continue
                final = s2
            out.append(
                Detection(
                    spec.id,
                    seg.start_frame * shift,
                    (seg.end_frame + 1) * shift,
                    seg.s1,
                    s2,
                    final,
                    cfg.mode,
                    seg.start_frame,
                    seg.end_frame,
                )
            )
    out.sort(key=lambda d: (d.t_start_s, d.keyword_id))
    return out


def best_scores(detections) -> tuple[float, float | None]:
    """Pair score convention: the best detection's (s1, s2); (0, 0) when nothing fired."""
    if not detections:
        return 0.0, 0.0
    best = max(detections, key=lambda d: d.final)
    return best.s1, best.s2


def write_score_csv(rows, path) -> None:
    """Rows of (id, label, s1, s2); ``s2`` None is written as an empty field (stage-1 only)."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["id", "label", "s1", "s2"])
        for ex_id, label, s1, s2 in rows:
            w.writerow([ex_id, int(label), repr(float(s1)), "" if s2 is None else repr(float(s2))])


def read_score_csv(path):
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        return [
            (r["id"], int(r["label"]), float(r["s1"]), None if r["s2"] == "" else float(r["s2"]))
            for r in reader
        ]


def read_manifest(path) -> list[dict]:
    records = []
    base = Path(path).parent
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            for key in ("pgrm_path", "features_path"):
                if rec.get(key) and not Path(rec[key]).is_absolute():
                    rec[key] = str(base / rec[key])
            rec.setdefault("id", f"line{lineno}")
            records.append(rec)
    return records


def score_dump(records, specs_for, weights, cfg: PipelineConfig, path, load_pg, load_features=None):
    """Evaluate every manifest record and write the per-example score CSV.

    ``specs_for(record)`` returns the keyword specs for a record,
    ``load_pg(record)`` its posteriorgram, ``load_features(record)`` its
    stage-1 features (or None). Returns the rows and the detections per record.
    """
    rows, detections = [], {}
    for rec in sorted(records, key=lambda r: str(r["id"])):
        try:
            if rec.get("label") not in (0, 1):
                raise ValueError("label must be 0 or 1")
            pg = load_pg(rec)
            feats = load_features(rec) if load_features is not None else None
            dets = run(pg, feats, specs_for(rec), weights, cfg)
        except KwsError as e:
            raise type(e)(f"record {rec['id']}: {e}") from e
        except (OSError, ValueError, KeyError) as e:
            raise RecordError(f"record {rec['id']}: {type(e).__name__}: {e}") from e
        s1, s2 = best_scores(dets)
        if cfg.mode == "M0":
            s2 = None
        rows.append((rec["id"], int(rec["label"]), s1, s2))
        detections[rec["id"]] = dets
    write_score_csv(rows, path)
    return rows, detections

"""Stage-1 keyword search over CTC posteriorgrams.

The search is frame-synchronous Viterbi token passing over the usual 2L+1
state CTC automaton (blank, x1, blank, x2, ..., xL, blank). A fresh token is
started at every frame, so each live token carries its own start frame and
the candidate score at frame t is the best length-normalized path
probability over all start frames:

    s1(t) = max_start exp(logP(start..t) / (t - start + 1))

Non-blank emissions use the summed probability of the phoneme's fuzzy set.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, EmptyKeyword
from .phonemes import FuzzyMap, PhonemeSeq

NEG_INF = -np.inf


def aggregate_fuzzy(frame, fuzzy_set) -> float:
    """Summed probability of every phoneme in ``fuzzy_set``, clamped to 1."""
    idx = sorted(fuzzy_set)
    return min(1.0, float(np.asarray(frame, dtype=np.float64)[idx].sum()))


def collapse(labels, blank: int = 0) -> list[int]:
    """CTC collapse: merge repeats, then drop blanks."""
    out, prev = [], None
    for lab in labels:
        if lab != prev and lab != blank:
            out.append(int(lab))
        prev = lab
    return out


@dataclass(frozen=True, eq=False)
class KeywordAutomaton:
    labels: tuple[int, ...]
    fuzzy_sets: tuple[frozenset, ...]  # one per state; blank states hold {blank}
    n_symbols: int
    blank: int = 0
    skip: np.ndarray = field(init=False, repr=False)  # skip[s]: s reachable from s-2
    membership: np.ndarray = field(init=False, repr=False)  # V x S 0/1

    def __post_init__(self):
        S = len(self.labels)
        skip = np.zeros(S, dtype=bool)
        for s in range(2, S):
            skip[s] = self.labels[s] != self.blank and self.labels[s] != self.labels[s - 2]
        member = np.zeros((self.n_symbols, S))
        for s, fs in enumerate(self.fuzzy_sets):
            member[sorted(fs), s] = 1.0
        skip.setflags(write=False)
        member.setflags(write=False)
        object.__setattr__(self, "skip", skip)
        object.__setattr__(self, "membership", member)

    @property
    def n_states(self) -> int:
        return len(self.labels)

    @property
    def keyword_length(self) -> int:
        return len(self.labels) // 2

    @property
    def keyword(self) -> list[int]:
        return list(self.labels[1::2])

    def log_emissions(self, frames: np.ndarray) -> np.ndarray:
        """Per-state log emission for one frame (V,) or a block of frames (T, V)."""
        frames = np.asarray(frames, dtype=np.float64)
        if frames.shape[-1] != self.n_symbols:
            raise DimensionMismatch(f"frame has {frames.shape[-1]} symbols, automaton expects {self.n_symbols}")
        probs = np.minimum(frames @ self.membership, 1.0)
        with np.errstate(divide="ignore"):
            return np.log(probs)


def build_automaton(seq: PhonemeSeq, fuzzy: FuzzyMap | None, n_symbols: int, blank: int = 0) -> KeywordAutomaton:
    tokens = list(seq.tokens) if isinstance(seq, PhonemeSeq) else list(seq)
    if not tokens:
        raise EmptyKeyword("keyword has no phonemes")
    fuzzy = fuzzy or FuzzyMap.identity()
    labels, sets = [blank], [frozenset((blank,))]
    for tok in tokens:
        fs = fuzzy.fuzzy_set(tok)
        if blank in fs:
            raise ValueError("blank may not appear in a fuzzy set")
        labels += [tok, blank]
        sets += [fs, frozenset((blank,))]
    return KeywordAutomaton(tuple(labels), tuple(sets), n_symbols, blank)


# -- exact oracles ---------------------------------------------------------


def ctc_forward(frames, seq) -> float:
    """log sum over all CTC alignments of ``seq`` (standard alpha recursion, no fuzzy sets)."""
    frames = _frames_of(frames)
    T, V = frames.shape
    auto = build_automaton(seq, None, V)
    S = auto.n_states
    with np.errstate(divide="ignore"):
        logp = np.log(frames[:, list(auto.labels)])
    alpha = np.full(S, NEG_INF)
    alpha[:2] = logp[0, :2]
    for t in range(1, T):
        prev = alpha
        alpha = prev.copy()
        alpha[1:] = np.logaddexp(alpha[1:], prev[:-1])
        alpha[2:] = np.where(auto.skip[2:], np.logaddexp(alpha[2:], prev[:-2]), alpha[2:])
        alpha = alpha + logp[t]
    return float(np.logaddexp(alpha[-2], alpha[-1]))


def viterbi_align(frames, seq, fuzzy: FuzzyMap | None = None, automaton: KeywordAutomaton | None = None):
    """Best single CTC path confined exactly to ``frames``.

    Returns ``(log_prob, states)`` where ``states`` is the automaton state per
    frame; ``(-inf, ())`` when no path fits.
    """
    frames = _frames_of(frames)
    T, V = frames.shape
    auto = automaton or build_automaton(seq, fuzzy, V)
    S = auto.n_states
    em = auto.log_emissions(frames)
    back = np.zeros((T, S), dtype=np.int64)
    alpha = np.full(S, NEG_INF)
    alpha[:2] = em[0, :2]
    for t in range(1, T):
        # candidate order: stay, from s-1, from s-2; argmax keeps the first on ties
        cand = np.full((3, S), NEG_INF)
        cand[0] = alpha
        cand[1, 1:] = alpha[:-1]
        cand[2, 2:] = np.where(auto.skip[2:], alpha[:-2], NEG_INF)
        choice = np.argmax(cand, axis=0)
        back[t] = np.arange(S) - choice
        alpha = cand[choice, np.arange(S)] + em[t]
    last = S - 2 if alpha[S - 2] >= alpha[S - 1] else S - 1
    best = float(alpha[last])
    if best == NEG_INF:
        return NEG_INF, ()
    states = [last]
    for t in range(T - 1, 0, -1):
        states.append(int(back[t, states[-1]]))
    return best, tuple(reversed(states))


def _frames_of(x) -> np.ndarray:
    frames = getattr(x, "frames", x)
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[0] < 1:
        raise DimensionMismatch(f"expected a non-empty T x V matrix, got shape {frames.shape}")
    return frames


# -- streaming search -------------------------------------------------------


@dataclass(frozen=True)
class SearchConfig:
    threshold: float = 0.5
    patience: int = 5
    min_gap: int | None = None  # None: duration of the hit just emitted
    max_frames_per_phoneme: int | None = 8  # caps span at L * this; None: unbounded

    def __post_init__(self):
        if not 0.0 <= self.threshold or self.patience < 1:
            raise ValueError("threshold must be >= 0 and patience >= 1")
        if self.min_gap is not None and self.min_gap < 0:
            raise ValueError("min_gap must be >= 0")
        if self.max_frames_per_phoneme is not None and self.max_frames_per_phoneme < 1:
            raise ValueError("max_frames_per_phoneme must be >= 1")

    def gap_for(self, hit: "CandidateSegment") -> int:
        """Frames after ``hit.end_frame`` in which no new path may start.

        The default is L times the hit's own frames-per-phoneme, i.e. its duration.
        """
        return hit.end_frame - hit.start_frame + 1 if self.min_gap is None else self.min_gap

    def max_span_for(self, auto: KeywordAutomaton) -> int | None:
        if self.max_frames_per_phoneme is None:
            return None
        return auto.keyword_length * self.max_frames_per_phoneme


@dataclass(frozen=True)
class CandidateSegment:
    start_frame: int  # first frame aligned to a keyword phoneme
    end_frame: int  # last frame aligned to a keyword phoneme
    s1: float
    alignment: tuple[int, ...]  # automaton state per frame of the scored path
    path_start: int  # first frame of the scored path (may include leading blanks)
    log_prob: float = 0.0

    @property
    def path_end(self) -> int:
        return self.path_start + len(self.alignment) - 1


@dataclass(frozen=True)
class _Peak:
    s1: float
    path_start: int
    path_end: int
    log_prob: float
    entry: int  # frame the path entered the first keyword phoneme
    in_phoneme: bool  # path ends inside the last keyword phoneme (not trailing blank)


@dataclass
class SearchState:
    starts: np.ndarray  # start frame per live token
    scores: np.ndarray  # live tokens x states, best log-score
    entries: np.ndarray  # live tokens x states, keyword-entry backpointer of that best path
    frame_count: int = 0
    last_emit_frame: int = -1
    block_until: int = -1  # no token may start at or before this frame
    pending: _Peak | None = None
    buffer: list = field(default_factory=list)  # raw frames kept for alignment
    buffer_start: int = 0

    @classmethod
    def new(cls, automaton: KeywordAutomaton) -> "SearchState":
        S = automaton.n_states
        return cls(np.zeros(0, dtype=np.int64), np.zeros((0, S)), np.zeros((0, S), dtype=np.int64))


def _advance_tracked(scores, entries, skip, t):
    """Best predecessor per state; equal scores prefer the earlier keyword entry."""
    best, best_e = scores.copy(), entries.copy()
    prev, prev_e = np.full_like(scores, NEG_INF), np.zeros_like(entries)
    prev[:, 1:], prev_e[:, 1:] = scores[:, :-1], entries[:, :-1]
    prev_e[:, 1] = t  # blank -> first phoneme enters the keyword now
    skip2, skip2_e = np.full_like(scores, NEG_INF), np.zeros_like(entries)
    skip2[:, 2:] = np.where(skip[2:], scores[:, :-2], NEG_INF)
    skip2_e[:, 2:] = entries[:, :-2]
    for cand, cand_e in ((prev, prev_e), (skip2, skip2_e)):
        better = (cand > best) | ((cand == best) & (cand_e < best_e))
        best = np.where(better, cand, best)
        best_e = np.where(better, cand_e, best_e)
    return best, best_e


def _make_hit(state: SearchState, auto: KeywordAutomaton) -> CandidateSegment:
    peak = state.pending
    lo = peak.path_start - state.buffer_start
    block = np.asarray(state.buffer[lo : lo + peak.path_end - peak.path_start + 1])
    _, states = viterbi_align(block, None, automaton=auto)
    phon = [i for i, s in enumerate(states) if s % 2 == 1]
    start = peak.path_start
    return CandidateSegment(start + phon[0], start + phon[-1], peak.s1, states, start, peak.log_prob)


def _emit(state: SearchState, auto: KeywordAutomaton, config: SearchConfig) -> CandidateSegment:
    hit = _make_hit(state, auto)
    state.pending = None
    state.last_emit_frame = state.frame_count - 1
    state.block_until = hit.end_frame + config.gap_for(hit)
    keep = state.starts > state.block_until
    state.starts, state.scores, state.entries = state.starts[keep], state.scores[keep], state.entries[keep]
    _trim_buffer(state)
    return hit


def _trim_buffer(state: SearchState) -> None:
    keep_from = state.frame_count
    if state.starts.size:
        keep_from = int(state.starts[0])
    if state.pending is not None:
        keep_from = min(keep_from, state.pending.path_start)
    drop = keep_from - state.buffer_start
    if drop > 0:
        del state.buffer[:drop]
        state.buffer_start = keep_from


def _best_candidate(state: SearchState, t: int):
    """Best length-normalized final-region path at frame t, or None."""
    sc, en = state.scores, state.entries
    last, trail = sc[:, -2], sc[:, -1]
    use_last = (last > trail) | ((last == trail) & (en[:, -2] <= en[:, -1]))
    final = np.where(use_last, last, trail)
    entry = np.where(use_last, en[:, -2], en[:, -1])
    norm = final / (t - state.starts + 1)
    if not np.isfinite(norm).any():
        return None
    # highest score, then earliest keyword entry, then earliest start
    best = np.lexsort((state.starts, entry, -norm))[0]
    return _Peak(
        float(np.exp(norm[best])),
        int(state.starts[best]),
        t,
        float(final[best]),
        int(entry[best]),
        bool(use_last[best]),
    )


def _improves(cand: _Peak, peak: _Peak | None) -> bool:
    if peak is None or cand.s1 > peak.s1:
        return True
    # on an exact tie, extend the peak while the path still sits in the last phoneme
    return cand.s1 == peak.s1 and cand.in_phoneme and cand.entry <= peak.entry


def step(state: SearchState, frame, automaton: KeywordAutomaton, config: SearchConfig):
    """Consume one posteriorgram row; return a CandidateSegment when a peak is confirmed."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.shape != (automaton.n_symbols,):
        raise DimensionMismatch(f"frame has shape {frame.shape}, expected ({automaton.n_symbols},)")
    t = state.frame_count
    em = automaton.log_emissions(frame)
    max_span = config.max_span_for(automaton)

    starts, scores, entries = state.starts, state.scores, state.entries
    if starts.size:
        scores, entries = _advance_tracked(scores, entries, automaton.skip, t)
        scores = scores + em
        alive = np.isfinite(scores).any(axis=1)
        if max_span is not None:
            alive &= t - starts + 1 <= max_span
        starts, scores, entries = starts[alive], scores[alive], entries[alive]
    if t > state.block_until:
        fresh = np.full((1, automaton.n_states), NEG_INF)
        fresh[0, :2] = em[:2]
        starts = np.append(starts, t)
        scores = np.vstack([scores, fresh])
        entries = np.vstack([entries, np.full((1, automaton.n_states), t, dtype=np.int64)])
    state.starts, state.scores, state.entries = starts, scores, entries
    state.buffer.append(frame)
    state.frame_count = t + 1

    if starts.size:
        cand = _best_candidate(state, t)
        if cand is not None and cand.s1 > 0.0 and cand.s1 >= config.threshold and _improves(cand, state.pending):
            state.pending = cand

    hit = None
    if state.pending is not None and t - state.pending.path_end >= config.patience:
        hit = _emit(state, automaton, config)
    _trim_buffer(state)
    return hit


def flush(state: SearchState, automaton: KeywordAutomaton, config: SearchConfig):
    """End of stream: emit any peak still waiting for confirmation."""
    if state.pending is None:
        return None
    return _emit(state, automaton, config)


def search(pg, automaton: KeywordAutomaton, config: SearchConfig | None = None) -> list[CandidateSegment]:
    config = config or SearchConfig()
    frames = _frames_of(pg)
    if frames.shape[1] != automaton.n_symbols:
        raise DimensionMismatch(f"posteriorgram has V={frames.shape[1]}, automaton expects {automaton.n_symbols}")
    state = SearchState.new(automaton)
    hits = []
    for row in frames:
        hit = step(state, row, automaton, config)
        if hit is not None:
            hits.append(hit)
    hit = flush(state, automaton, config)
    if hit is not None:
        hits.append(hit)
    return sorted(hits, key=lambda h: h.start_frame)

"""Posteriorgram container, PGRM1/CSV serialization and a synthetic stream generator."""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    BadMagic,
    DimensionMismatch,
    HeaderMismatch,
    ParseError,
    RowNotNormalized,
    SpecOverflow,
    TruncatedFile,
)
from .phonemes import PhonemeInventory, PhonemeSeq

MAGIC = b"PGRM1\0"
ROW_TOL = 1e-4
DEFAULT_FRAME_SHIFT = 0.01


def validate_frames(frames: np.ndarray, n_symbols: int | None = None) -> None:
    if frames.ndim != 2 or frames.shape[0] < 1 or frames.shape[1] < 2:
        raise DimensionMismatch(f"posteriorgram must be T x V with T >= 1, got {frames.shape}")
    if n_symbols is not None and frames.shape[1] != n_symbols:
        raise DimensionMismatch(f"expected V={n_symbols}, got {frames.shape[1]}")
    if not np.all(np.isfinite(frames)) or frames.min() < 0.0 or frames.max() > 1.0:
        raise RowNotNormalized("entries must lie in [0, 1]")
    sums = frames.sum(axis=1, dtype=np.float64)
    bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_TOL)
    if bad.size:
        raise RowNotNormalized(f"row {bad[0]} sums to {sums[bad[0]]:.6g}")


@dataclass(frozen=True, eq=False)
class Posteriorgram:
    frames: np.ndarray  # T x V
    frame_shift_s: float = DEFAULT_FRAME_SHIFT

    def __post_init__(self):
        validate_frames(self.frames)
        self.frames.setflags(write=False)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def n_symbols(self) -> int:
        return self.frames.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_frames * self.frame_shift_s


def write_pgrm(pg: Posteriorgram, path) -> None:
    T, V = pg.frames.shape
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<IIf", T, V, pg.frame_shift_s))
        f.write(np.ascontiguousarray(pg.frames, dtype="<f4").tobytes())


def read_pgrm(path, inv: PhonemeInventory | None = None) -> Posteriorgram:
    data = Path(path).read_bytes()
    if len(data) < len(MAGIC) or data[: len(MAGIC)] != MAGIC:
        raise BadMagic(f"{path}: not a PGRM1 file")
    head = len(MAGIC) + 12
    if len(data) < head:
        raise TruncatedFile(f"{path}: header truncated")
    T, V, shift = struct.unpack_from("<IIf", data, len(MAGIC))
    need = head + 4 * T * V
    if len(data) < need:
        raise TruncatedFile(f"{path}: expected {need} bytes, got {len(data)}")
    if len(data) > need:
        raise DimensionMismatch(f"{path}: {len(data) - need} trailing bytes")
    if inv is not None and V != inv.size:
        raise DimensionMismatch(f"{path}: V={V} but inventory has {inv.size} symbols")
    frames = np.frombuffer(data, dtype="<f4", count=T * V, offset=head).reshape(T, V).copy()
    # shortest decimal that maps to the same f32, so 0.01 reads back as 0.01
    shift = float(np.format_float_positional(np.float32(shift), unique=True))
    return Posteriorgram(frames, shift)


def write_csv(pg: Posteriorgram, inv: PhonemeInventory, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(inv.symbols)
        for row in pg.frames:
            w.writerow([f"{x:.9g}" for x in row])


def read_csv(path, inv: PhonemeInventory, frame_shift_s: float = DEFAULT_FRAME_SHIFT) -> Posteriorgram:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows or [h.strip() for h in rows[0]] != list(inv.symbols):
        raise HeaderMismatch(f"{path}: header does not match inventory order")
    values = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != inv.size:
            raise DimensionMismatch(f"{path}:{lineno}: {len(row)} fields, expected {inv.size}")
        try:
            values.append([float(x) for x in row])
        except ValueError as e:
            raise ParseError(f"{path}:{lineno}: {e}") from None
    if not values:
        raise DimensionMismatch(f"{path}: no frames")
    return Posteriorgram(np.asarray(values, dtype=np.float64), frame_shift_s)


@dataclass(frozen=True)
class SynthSpec:
    keyword: PhonemeSeq | None  # None: background only
    total_frames: int
    frames_per_phoneme: int = 4
    insert_at: int = 0
    peak_prob: float = 0.95
    seed: int = 0


@dataclass(frozen=True)
class GroundTruth:
    start_frame: int
    end_frame: int
    keyword: PhonemeSeq


def synthesize(spec: SynthSpec, inv: PhonemeInventory, frame_shift_s: float = DEFAULT_FRAME_SHIFT):
    """Blank background with the keyword planted at ``insert_at``.

    Returns ``(posteriorgram, ground_truth)``; ground truth is None for a
    background-only spec.

    Each frame puts ``peak_prob`` on its target symbol and spreads the rest
    uniformly, then applies multiplicative jitter of width 0.2 * (1 - peak_prob).
    """
    V, fpp = inv.size, spec.frames_per_phoneme
    L = 0 if spec.keyword is None else len(spec.keyword)
    p = float(spec.peak_prob)
    if not (1.0 / V < p <= 1.0):
        raise ValueError(f"peak_prob must lie in (1/V, 1], got {p}")
    if fpp < 1 or spec.insert_at < 0:
        raise ValueError("frames_per_phoneme >= 1 and insert_at >= 0 required")
    end = spec.insert_at + L * fpp
    if end > spec.total_frames:
        raise SpecOverflow(f"keyword needs frames [{spec.insert_at}, {end}) but stream has {spec.total_frames}")

    targets = np.full(spec.total_frames, inv.blank_index, dtype=np.int64)
    if L:
        targets[spec.insert_at:end] = np.repeat(spec.keyword.tokens, fpp)
    frames = np.full((spec.total_frames, V), (1.0 - p) / (V - 1))
    frames[np.arange(spec.total_frames), targets] = p

    eps = 0.2 * (1.0 - p)
    if eps > 0:
        rng = np.random.default_rng(spec.seed)
        frames *= rng.uniform(1.0 - eps, 1.0 + eps, size=frames.shape)
        frames /= frames.sum(axis=1, keepdims=True)
    truth = GroundTruth(spec.insert_at, end - 1, spec.keyword) if L else None
    return Posteriorgram(frames, frame_shift_s), truth

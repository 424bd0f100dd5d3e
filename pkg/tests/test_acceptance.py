"""Acceptance criteria, one test each.

Every test prints a single ``PASS``/``FAIL`` line with its measured numbers
(visible in the terminal even under output capture), then asserts.
The two training criteria share one 200-anchor run.
"""

from __future__ import annotations

import math
import time
from fractions import Fraction

import numpy as np
import pytest

from _oracles import eer_sweep, enumerate_ctc, recall_sweep, search_oracle_errors
from kwscascade import ctc, experiments as E, matcher as M, pipeline
from kwscascade.metrics import ScoreSet, StreamEval, auc, eer, recall_at_far, roc_area, roc_points
from kwscascade.pgram import Posteriorgram, read_pgrm, write_pgrm


def verdict(capsys, name: str, ok: bool, detail: str) -> None:
    with capsys.disabled():
        print(f"\n{'PASS' if ok else 'FAIL'} {name}: {detail}")


# -- CTC oracle ----------------------------------------------------------------


def test_ctc_oracle_equivalence(capsys):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    search_err, fwd_err, bad, n_fwd, n_hits = 0.0, 0.0, [], 0, 0
    for case in range(500):
        V = (4, 8, 71)[case % 3]
        T = int(rng.integers(1, 13))
        L = int(rng.integers(1, 5))
        frames = rng.dirichlet(np.full(V, 0.3), size=T)
        seq = tuple(int(x) for x in rng.integers(1, V, size=L))
        auto = ctc.build_automaton(seq, None, V)
        cfg = ctc.SearchConfig(threshold=float(rng.choice([0.0, 0.05, 0.2])), patience=int(rng.integers(1, 6)))
        n, err, viol = search_oracle_errors(frames, auto, cfg)
        n_hits += n
        search_err = max(search_err, err)
        bad += viol
        if T <= 8:
            want, got = enumerate_ctc(frames, seq), ctc.ctc_forward(frames, seq)
            n_fwd += 1
            if want == -math.inf or got == -math.inf:
                if want != got:
                    bad.append(("forward", case))
            else:
                fwd_err = max(fwd_err, abs(got - want))
    dt = time.perf_counter() - t0
    ok = search_err <= 1e-6 and fwd_err <= 1e-9 and not bad and dt < 60
    verdict(capsys, "ctc-oracle", ok,
            f"500 cases, {n_hits} hits, max s1 err {search_err:.2e}, {n_fwd} forward checks max err {fwd_err:.2e}, "
            f"{len(bad)} violations, {dt:.1f}s")
    assert ok


# -- streaming equivalence -------------------------------------------------------


def test_streaming_equivalence(capsys, inv):
    rng = np.random.default_rng(7)
    t0 = time.perf_counter()
    mismatches, n_hits = 0, 0
    for i in range(100):
        kw = E.random_anchors(1, inv, E.SynthSetup(), rng)[0]
        auto = ctc.build_automaton(kw, None, inv.size)
        cfg = ctc.SearchConfig(threshold=float(rng.uniform(0.0, 0.6)), patience=int(rng.integers(1, 8)))
        # background noise with a few noisy plants
        frames = rng.dirichlet(np.full(inv.size, 0.2), size=int(rng.integers(20, 150)))
        for _ in range(int(rng.integers(0, 3))):
            at = int(rng.integers(0, len(frames) - 4 * len(kw) + 1)) if len(frames) >= 4 * len(kw) else None
            if at is not None:
                for j, tok in enumerate(np.repeat(kw.tokens, 4)):
                    frames[at + j] = 0.3 * frames[at + j]
                    frames[at + j, tok] += 0.7
        state, streamed = ctc.SearchState.new(auto), []
        for row in frames:
            hit = ctc.step(state, row, auto, cfg)
            if hit is not None:
                streamed.append(hit)
        tail = ctc.flush(state, auto, cfg)
        if tail is not None:
            streamed.append(tail)
        batch = ctc.search(frames, auto, cfg)
        n_hits += len(batch)
        same = len(streamed) == len(batch) and all(
            (a.start_frame, a.end_frame, a.path_start) == (b.start_frame, b.end_frame, b.path_start)
            and abs(a.s1 - b.s1) <= 1e-12
            for a, b in zip(streamed, batch)
        )
        mismatches += not same
    dt = time.perf_counter() - t0
    ok = mismatches == 0 and dt < 10
    verdict(capsys, "streaming-equivalence", ok, f"100 streams, {n_hits} hits, {mismatches} mismatches, {dt:.1f}s")
    assert ok


# -- plant and recover -------------------------------------------------------------


def test_plant_and_recover(capsys, inv):
    t0 = time.perf_counter()
    res = {p: E.plant_and_recover(inv, p, n_streams=200, threshold=0.5, seed=0) for p in (1.0, 0.95, 0.9)}
    dt = time.perf_counter() - t0
    r1, r95 = res[1.0], res[0.95]
    ok = r1.exact == 200 and r95.recalled == 200 and r95.false_alarms == 0 and dt < 30
    detail = ", ".join(f"peak {p}: recall {r.recalled}/200 exact {r.exact} fa {r.false_alarms}" for p, r in res.items())
    verdict(capsys, "plant-and-recover", ok, f"{detail}, {dt:.1f}s")
    assert ok


# -- fuzzy aggregation -----------------------------------------------------------


def test_fuzzy_aggregation(capsys, inv, fuzzy):
    trials = E.fuzzy_trials(inv, fuzzy, "AY1", "EY1", n=100, seed=0)
    never_worse = all(m >= u for u, m in trials)
    strict = sum(m > u for u, m in trials)
    ok = len(trials) == 100 and never_worse and strict >= 95
    verdict(capsys, "fuzzy-aggregation", ok, f"merged >= unmerged on all: {never_worse}, strictly better on {strict}/100")
    assert ok


# -- gradient check -----------------------------------------------------------------


def test_matcher_gradient_check(capsys):
    cfg = M.MatcherConfig(n_symbols=9, d_model=8, d_enc=6, n_attn_layers=2, n_heads=2, d_gru=8, seed=11)
    rng = np.random.default_rng(3)
    ex = M.MatchExample(rng.standard_normal((6, cfg.d_enc)), (1, 4, 7), 0, (1, 0, 1))
    t0 = time.perf_counter()
    report = M.gradient_check(ex, M.init_weights(cfg), h=1e-4)
    dt = time.perf_counter() - t0
    worst = max(report, key=report.get)
    ok = set(report) == set(M.init_weights(cfg).names()) and report[worst] <= 1e-4 and dt < 30
    verdict(capsys, "gradient-check", ok, f"{len(report)} tensors, max rel err {report[worst]:.2e} ({worst}), {dt:.1f}s")
    assert ok


# -- discrimination and anchor scaling ------------------------------------------------

_RUNS: dict = {}


def trained(n_anchors: int, inv):
    if n_anchors not in _RUNS:
        enc = pipeline.StubEncoder(inv.size, 144, seed=1234)
        t0 = time.perf_counter()
        res, _ = E.discrimination(n_anchors, inv, enc)
        _RUNS[n_anchors] = (res, time.perf_counter() - t0)
    return _RUNS[n_anchors]


def test_desk_scale_discrimination(capsys, inv):
    res, dt = trained(200, inv)
    ok = res.matcher_auc >= 0.95 and res.m1_eer < res.m0_eer and dt < 300
    verdict(capsys, "discrimination", ok,
            f"matcher pair-AUC {res.matcher_auc:.4f} (M1 pipeline {res.m1_auc:.4f}), "
            f"EER M1 {res.m1_eer:.4f} vs M0 {res.m0_eer:.4f}, {dt:.0f}s")
    assert ok


def test_anchor_scaling(capsys, inv):
    runs = [trained(n, inv) for n in (10, 50, 200)]
    eers = [r.m1_eer for r, _ in runs]
    total = sum(dt for _, dt in runs)
    ok = all(b <= a + 0.01 for a, b in zip(eers, eers[1:])) and total < 600
    verdict(capsys, "anchor-scaling", ok,
            "EER " + " -> ".join(f"{n}:{e:.4f}" for n, e in zip((10, 50, 200), eers)) + f", {total:.0f}s")
    assert ok


# -- metrics oracles -----------------------------------------------------------------


def test_metrics_oracles(capsys):
    rng = np.random.default_rng(11)
    auc_err, eer_bad, rec_bad, n_small = 0.0, 0, 0, 0
    for i in range(1000):
        P, N = (int(x) for x in rng.integers(1, 16, size=2))
        if i % 2:
            pos, neg = list(rng.integers(0, 8, P) / 8), list(rng.integers(0, 8, N) / 8)  # heavy ties
        else:
            pos, neg = list(rng.uniform(size=P)), list(rng.uniform(size=N))
        s = ScoreSet(pos, neg)
        auc_err = max(auc_err, abs(auc(s) - roc_area(roc_points(s))))
        if P + N <= 20:
            n_small += 1
            eer_bad += Fraction(eer(s)) != eer_sweep(pos, neg) and eer(s) != float(eer_sweep(pos, neg))
            rate, hours = float(rng.choice([0.0, 0.5, 1.0, 2.0, 3.5])), float(rng.choice([0.5, 1.0, 2.0]))
            got = recall_at_far(StreamEval(tuple(pos), tuple(neg), hours), rate)
            want = recall_sweep(pos, neg, rate, hours)
            rec_bad += got[1] != want[1] or (Fraction(got[0]) != want[0] and got[0] != float(want[0]))
    worked = ScoreSet([0.9, 0.8, 0.4], [0.7, 0.3, 0.2])
    exact = auc(worked) == 8 / 9 and eer(worked) == 1 / 3
    ok = auc_err <= 1e-12 and eer_bad == 0 and rec_bad == 0 and exact
    verdict(capsys, "metrics-oracles", ok,
            f"AUC vs trapezoid max err {auc_err:.1e} on 1000 sets, EER/recall mismatches {eer_bad}/{rec_bad} "
            f"on {n_small} small sets, worked examples {'exact' if exact else 'WRONG'}")
    assert ok


# -- format round trips --------------------------------------------------------------------


def test_format_round_trips(capsys, tmp_path):
    rng = np.random.default_rng(5)
    pg_bad = mw_bad = 0
    for i in range(100):
        T, V = int(rng.integers(1, 60)), int(rng.integers(2, 80))
        pg = Posteriorgram(rng.dirichlet(np.ones(V), size=T).astype(np.float32), float(rng.uniform(0.001, 0.05)))
        write_pgrm(pg, tmp_path / "x.pgrm")
        back = read_pgrm(tmp_path / "x.pgrm")
        pg_bad += not (back.frames.tobytes() == np.asarray(pg.frames, np.float32).tobytes()
                       and np.float32(back.frame_shift_s) == np.float32(pg.frame_shift_s))

        cfg = M.MatcherConfig(
            n_symbols=int(rng.integers(2, 80)), d_model=int(rng.integers(1, 5)) * 4, d_enc=int(rng.integers(1, 20)),
            n_attn_layers=int(rng.integers(1, 4)), n_heads=1, d_gru=int(rng.integers(1, 12)), seed=i,
        )
        w = M.init_weights(cfg)
        for t in w.tensors.values():
            t[...] = rng.standard_normal(t.shape)
        M.save_weights(w, tmp_path / "w.mwts")
        back = M.load_weights(tmp_path / "w.mwts", cfg)
        mw_bad += list(back.names()) != list(w.names()) or any(
            back[k].dtype != w[k].dtype or back[k].tobytes() != w[k].tobytes() for k in w.names()
        )
    ok = pg_bad == 0 and mw_bad == 0
    verdict(capsys, "format-round-trips", ok, f"PGRM1 {100 - pg_bad}/100 bit-exact, MWTS1 {100 - mw_bad}/100 bit-exact")
    assert ok

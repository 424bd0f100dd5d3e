import json

import numpy as np
import pytest

from kwscascade import ctc, matcher, pipeline
from kwscascade.errors import (
    DimensionMismatch,
    MissingFeatures,
    MissingWeights,
    OovWord,
    SegmentOutOfRange,
)
from kwscascade.pgram import Posteriorgram, SynthSpec, synthesize
from kwscascade.pipeline import PipelineConfig


def seg(a, b):
    return ctc.CandidateSegment(a, b, 1.0, (), a)


@pytest.fixture(scope="module")
def hey_snips(inv, lex, fuzzy):
    return pipeline.enroll("hey snips", lex, inv, fuzzy)


@pytest.fixture(scope="module")
def planted(inv, hey_snips):
    return synthesize(SynthSpec(hey_snips.seq, 60, 4, 10, 1.0, 0), inv)


@pytest.fixture(scope="module")
def weights(inv):
    return matcher.init_weights(matcher.MatcherConfig(n_symbols=inv.size, d_model=16, d_enc=24, d_gru=16))


def zero_heads(w):
    w = w.copy()
    for k in ("phoneme_head.w", "phoneme_head.b", "utterance_head.w", "utterance_head.b"):
        w.tensors[k][...] = 0
    return w


def test_enroll_hey_snips(hey_snips):
    assert hey_snips.id == "hey_snips"
    assert len(hey_snips.seq) == 7 and hey_snips.automaton.n_states == 15


def test_enroll_deterministic(inv, lex, fuzzy, hey_snips):
    again = pipeline.enroll("hey snips", lex, inv, fuzzy)
    assert again.seq.tokens == hey_snips.seq.tokens and again.automaton.labels == hey_snips.automaton.labels


def test_enroll_oov(inv, lex):
    with pytest.raises(OovWord):
        pipeline.enroll("zzqx", lex, inv)


def test_crop_examples():
    f = np.arange(10)[:, None] * np.ones((1, 3))
    assert pipeline.crop_features(f, seg(3, 5), 0)[:, 0].tolist() == [3, 4, 5]
    assert pipeline.crop_features(f, seg(0, 2), 2)[:, 0].tolist() == [0, 1, 2, 3, 4]
    with pytest.raises(SegmentOutOfRange):
        pipeline.crop_features(f, seg(8, 12), 2)


def test_crop_is_a_copy():
    f = np.zeros((5, 2))
    c = pipeline.crop_features(f, seg(1, 2), 0)
    c[...] = 1
    assert f.sum() == 0


def test_config_validation():
    with pytest.raises(ValueError):
        PipelineConfig(mode="M3")
    with pytest.raises(ValueError):
        PipelineConfig(s1_threshold=1.5)
    with pytest.raises(ValueError):
        PipelineConfig(padding=-1)


def test_m0_noiseless(planted, hey_snips):
    pg, truth = planted
    (det,) = pipeline.run(pg, None, [hey_snips], None, PipelineConfig("M0", 0.5))
    assert det.final == 1.0 and det.s2 is None and det.mode == "M0"
    assert det.t_start_s == truth.start_frame * pg.frame_shift_s
    assert det.t_end_s == (truth.end_frame + 1) * pg.frame_shift_s


def test_m1_zero_heads_gate(planted, hey_snips, weights, inv):
    pg, _ = planted
    feats = pipeline.StubEncoder(inv.size, 24)(pg.frames)
    w = zero_heads(weights)
    assert pipeline.run(pg, feats, [hey_snips], w, PipelineConfig("M1", 0.5, 0.6)) == []
    (det,) = pipeline.run(pg, feats, [hey_snips], w, PipelineConfig("M1", 0.5, 0.5))
    assert det.s2 == 0.5 and det.final == 0.5


def test_m2_uses_encoder(planted, hey_snips, weights, inv):
    pg, _ = planted
    seen = []

    class Probe:
        d_enc = 24

        def __call__(self, raw):
            seen.append(raw.shape)
            return np.zeros((raw.shape[0], 24))

    (det,) = pipeline.run(pg, None, [hey_snips], weights, PipelineConfig("M2", 0.5, 0.0, encoder=Probe()))
    assert seen and seen[0][1] == inv.size
    assert det.mode == "M2" and 0 <= det.s2 <= 1


def test_missing_inputs(planted, hey_snips, weights):
    pg, _ = planted
    with pytest.raises(MissingWeights):
        pipeline.run(pg, None, [hey_snips], None, PipelineConfig("M1"))
    with pytest.raises(MissingFeatures):
        pipeline.run(pg, None, [hey_snips], weights, PipelineConfig("M1"))
    with pytest.raises(DimensionMismatch):
        pipeline.run(pg, np.zeros((3, 24)), [hey_snips], weights, PipelineConfig("M1"))


def random_stream(inv, seed, T=120):
    rng = np.random.default_rng(seed)
    return Posteriorgram(rng.dirichlet(np.full(inv.size, 0.05), size=T))


def spans(dets):
    return {(d.keyword_id, d.t_start_s, d.t_end_s) for d in dets}


@pytest.mark.parametrize("seed", range(4))
def test_gating_and_mode_consistency(inv, lex, weights, seed):
    specs = [pipeline.enroll(t, lex, inv) for t in ("hi", "a")]
    pg = random_stream(inv, seed)
    feats = pipeline.StubEncoder(inv.size, 24)(pg.frames)
    m0_low = pipeline.run(pg, None, specs, None, PipelineConfig("M0", 0.0))
    m0_high = pipeline.run(pg, None, specs, None, PipelineConfig("M0", 0.5))
    assert len(m0_low) >= len(m0_high)
    m1_all = pipeline.run(pg, feats, specs, weights, PipelineConfig("M1", 0.0, 0.0))
    m1_gated = pipeline.run(pg, feats, specs, weights, PipelineConfig("M1", 0.0, 0.5))
    assert spans(m1_gated) <= spans(m1_all) <= spans(m0_low)
    assert len(m1_all) == len(m0_low)


def test_multi_keyword_independence(inv, lex):
    pg = random_stream(inv, 7)
    hi, a = pipeline.enroll("hi", lex, inv), pipeline.enroll("a", lex, inv)
    alone = pipeline.run(pg, None, [hi], None, PipelineConfig("M0", 0.0))
    both = pipeline.run(pg, None, [hi, a], None, PipelineConfig("M0", 0.0))
    assert [d for d in both if d.keyword_id == "hi"] == alone


def test_output_sorted(inv, lex):
    pg = random_stream(inv, 3, 200)
    specs = [pipeline.enroll(t, lex, inv) for t in ("hi", "a")]
    dets = pipeline.run(pg, None, specs, None, PipelineConfig("M0", 0.0))
    keys = [(d.t_start_s, d.keyword_id) for d in dets]
    assert keys == sorted(keys)
    assert all(0 <= d.t_start_s <= d.t_end_s <= pg.n_frames * pg.frame_shift_s for d in dets)


def test_detection_json_fields(planted, hey_snips):
    pg, _ = planted
    (det,) = pipeline.run(pg, None, [hey_snips], None, PipelineConfig("M0", 0.5))
    assert set(det.to_json()) == {"keyword", "t_start_s", "t_end_s", "s1", "s2", "final", "mode"}
    json.dumps(det.to_json())


def test_best_scores_miss():
    assert pipeline.best_scores([]) == (0.0, 0.0)


def test_score_dump(tmp_path, inv, lex, hey_snips):
    recs, pgs = [], {}
    for i, label in enumerate([1, 1, 0, 0]):
        kw = hey_snips.seq if label else None
        pg, _ = synthesize(SynthSpec(kw, 60, 4, 10, 0.95, i), inv)
        pgs[f"ex{i}"] = pg
        recs.append({"id": f"ex{i}", "label": label})
    cfg = PipelineConfig("M0", 0.5)
    out = tmp_path / "scores.csv"
    rows, _ = pipeline.score_dump(recs, lambda r: [hey_snips], None, cfg, out, lambda r: pgs[r["id"]])
    lines = out.read_text().splitlines()
    assert lines[0] == "id,label,s1,s2" and len(lines) == 5
    assert rows[2][2] == 0.0 and rows[0][2] > 0.5
    first = out.read_bytes()
    pipeline.score_dump(recs, lambda r: [hey_snips], None, cfg, out, lambda r: pgs[r["id"]])
    assert out.read_bytes() == first
    assert pipeline.read_score_csv(out) == rows


def test_score_dump_miss_in_m1(tmp_path, inv, hey_snips, weights):
    pg, _ = synthesize(SynthSpec(None, 40, 4, 0, 0.95, 0), inv)
    enc = pipeline.StubEncoder(inv.size, 24)
    rows, _ = pipeline.score_dump(
        [{"id": "n", "label": 0}], lambda r: [hey_snips], weights, PipelineConfig("M1", 0.5, 0.5),
        tmp_path / "s.csv", lambda r: pg, lambda r: enc(pg.frames),
    )
    assert rows == [("n", 0, 0.0, 0.0)]


def test_manifest_relative_paths(tmp_path):
    (tmp_path / "m.jsonl").write_text('{"id": "a", "anchor_text": "hi", "pgrm_path": "x.pgrm", "label": 1}\n\n')
    (rec,) = pipeline.read_manifest(tmp_path / "m.jsonl")
    assert rec["pgrm_path"] == str(tmp_path / "x.pgrm")


def test_stub_encoder_deterministic(inv):
    x = np.random.default_rng(0).dirichlet(np.ones(inv.size), size=5)
    a, b = pipeline.StubEncoder(inv.size), pipeline.StubEncoder(inv.size)
    assert np.array_equal(a(x), b(x)) and a(x).shape == (5, 144)
    with pytest.raises(DimensionMismatch):
        a(x[:, :3])

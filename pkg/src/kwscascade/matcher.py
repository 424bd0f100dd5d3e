"""Stage-2 phoneme matcher: phoneme queries cross-attend to candidate audio features.

Pure numpy with hand-written backward passes. Forward pipeline:

    audio  = features @ W_proj + b_proj                          (T' x d)
    x      = embedding[anchor]                                   (L x d)
    repeat n_attn_layers:
        m  = LN(audio)
        x  = x + MHA(q=LN(x), k=m, v=m + sinusoid(T'))           pre-norm cross attention
        x  = x + FFN(LN(x))                                      relu, 4d hidden
    p_phon = sigmoid(x @ w_phon + b_phon)                        (L,)
    h      = GRU(x_1 .. x_L)
    p_utt  = sigmoid(h_L @ w_utt + b_utt)

Positions enter through the values only: attention weights depend on frame
content alone (identical frames attend uniformly), while the attended output
still reflects frame order.

Weights live in float32 at rest; all arithmetic runs in float64.
"""

from __future__ import annotations

import math
import struct
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadConfig,
    BadMagic,
    DegenerateLabels,
    DimensionMismatch,
    EmptyDataset,
    NonFiniteInput,
    ShapeMismatch,
    TruncatedFile,
)

LN_EPS = 1e-5
PROB_CLAMP = 1e-7
MAGIC = b"MWTS1\0"
GRAD_FLOOR = 1e-6


@dataclass(frozen=True)
class MatcherConfig:
    n_symbols: int = 71
    d_model: int = 64
    d_enc: int = 144
    n_attn_layers: int = 2
    n_heads: int = 2
    d_gru: int = 64
    seed: int = 0

    def validate(self) -> None:
        dims = (self.n_symbols, self.d_model, self.d_enc, self.n_attn_layers, self.n_heads, self.d_gru)
        if min(dims) < 1:
            raise BadConfig(f"all dimensions must be >= 1: {self}")
        if self.d_model % self.n_heads:
            raise BadConfig(f"d_model={self.d_model} not divisible by n_heads={self.n_heads}")

    def shapes(self) -> "OrderedDict[str, tuple[int, ...]]":
        d, g = self.d_model, self.d_gru
        out = OrderedDict()
        out["phoneme_embedding"] = (self.n_symbols, d)
        out["audio_projection.w"] = (self.d_enc, d)
        out["audio_projection.b"] = (d,)
        for i in range(self.n_attn_layers):
            p = f"layer{i}."
            for ln in ("ln_query", "ln_memory", "ln_ff"):
                out[p + ln + ".gain"] = (d,)
                out[p + ln + ".offset"] = (d,)
            for m in ("query", "key", "value", "output"):
                out[p + m + ".w"] = (d, d)
                out[p + m + ".b"] = (d,)
            out[p + "ff1.w"] = (d, 4 * d)
            out[p + "ff1.b"] = (4 * d,)
            out[p + "ff2.w"] = (4 * d, d)
            out[p + "ff2.b"] = (d,)
        out["gru.w_input"] = (d, 3 * g)  # gates ordered update, reset, candidate
        out["gru.b_input"] = (3 * g,)
        out["gru.w_hidden"] = (g, 3 * g)
        out["gru.b_hidden"] = (3 * g,)
        out["phoneme_head.w"] = (d, 1)
        out["phoneme_head.b"] = (1,)
        out["utterance_head.w"] = (g, 1)
        out["utterance_head.b"] = (1,)
        return out


@dataclass(eq=False)
class MatcherWeights:
    config: MatcherConfig
    tensors: "OrderedDict[str, np.ndarray]" = field(default_factory=OrderedDict)

    def __getitem__(self, name):
        return self.tensors[name]

    def names(self):
        return list(self.tensors)

    def copy(self, dtype=None) -> "MatcherWeights":
        return MatcherWeights(
            self.config,
            OrderedDict((k, np.array(v, dtype=dtype or v.dtype)) for k, v in self.tensors.items()),
        )

    def astype(self, dtype) -> "MatcherWeights":
        return self.copy(dtype)

    def check(self) -> None:
        shapes = self.config.shapes()
        if list(shapes) != list(self.tensors):
            raise ShapeMismatch("tensor names do not match the configuration")
        for name, shape in shapes.items():
            if self.tensors[name].shape != shape:
                raise ShapeMismatch(f"{name}: expected {shape}, got {self.tensors[name].shape}")
            if not np.all(np.isfinite(self.tensors[name])):
                raise NonFiniteInput(f"{name} has non-finite values")


def init_weights(config: MatcherConfig) -> MatcherWeights:
    config.validate()
    rng = np.random.default_rng(config.seed)
    tensors = OrderedDict()
    for name, shape in config.shapes().items():
        if name.endswith(".gain"):
            value = np.ones(shape)
        elif len(shape) == 1:
            value = np.zeros(shape)
        else:
            a = np.sqrt(6.0 / (shape[0] + shape[1]))
            value = rng.uniform(-a, a, size=shape)
        tensors[name] = value.astype(np.float32)
    return MatcherWeights(config, tensors)


# -- primitives ------------------------------------------------------------


def sinusoid_positions(n: int, d: int) -> np.ndarray:
    pos = np.arange(n)[:, None]
    i = np.arange(d)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / d)
    return np.where(i % 2 == 0, np.sin(angle), np.cos(angle))


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softmax_rows(s):
    e = np.exp(s - s.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _ln_forward(x, gain, offset):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + LN_EPS)
    xhat = xc * inv
    return xhat * gain + offset, (xhat, inv, gain)


def _ln_backward(dy, cache):
    xhat, inv, gain = cache
    dgain = _flat(dy * xhat).sum(axis=0)
    doffset = _flat(dy).sum(axis=0)
    dxhat = dy * gain
    dx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True) - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
    return dx, dgain, doffset


def _bce(p, y):
    pc = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return -(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc))


def _dbce_dlogit(p, y):
    # derivative of BCE(clamp(sigmoid(z))) w.r.t. z; zero where the clamp is active
    inside = (p > PROB_CLAMP) & (p < 1.0 - PROB_CLAMP)
    return np.where(inside, p - y, 0.0)


# -- forward / loss / backward ----------------------------------------------


@dataclass(frozen=True)
class MatchResult:
    p_phon: np.ndarray  # (L,)
    p_utt: float
    attention_maps: list  # per layer: (n_heads, L, T') row-stochastic


@dataclass(frozen=True)
class MatchExample:
    audio_features: np.ndarray  # T' x d_enc
    anchor: tuple  # phoneme indices
    label_utt: int
    labels_phon: tuple


def _anchor_tokens(anchor):
    return np.asarray(getattr(anchor, "tokens", anchor), dtype=np.int64)


def _flat(a):
    return a.reshape(-1, a.shape[-1])


def _check_inputs(F, idx, cfg):
    if F.ndim != 3 or F.shape[1] < 1 or F.shape[2] != cfg.d_enc:
        raise DimensionMismatch(f"features must be T' x {cfg.d_enc}, got {F.shape[1:]}")
    if idx.ndim != 2 or idx.shape[1] < 1 or idx.min() < 0 or idx.max() >= cfg.n_symbols:
        raise DimensionMismatch("anchor indices out of range")
    if not np.all(np.isfinite(F)):
        raise NonFiniteInput("features contain non-finite values")


def _forward_batch(F, idx, w: MatcherWeights):
    """Forward over B examples sharing one (T', L) shape: F is B x T' x d_enc, idx B x L."""
    cfg = w.config
    _check_inputs(F, idx, cfg)
    W = {k: np.asarray(v, dtype=np.float64) for k, v in w.tensors.items()}
    B, T = F.shape[:2]
    L, d, H = idx.shape[1], cfg.d_model, cfg.n_heads
    dh = d // H
    scale = 1.0 / np.sqrt(dh)

    cache = {"F": F, "idx": idx, "W": W}
    audio = F @ W["audio_projection.w"] + W["audio_projection.b"]
    pe = sinusoid_positions(T, d)
    x = W["phoneme_embedding"][idx]
    layers, maps = [], []
    for i in range(cfg.n_attn_layers):
        p = f"layer{i}."
        c = {}
        qn, c["ln_q"] = _ln_forward(x, W[p + "ln_query.gain"], W[p + "ln_query.offset"])
        mn, c["ln_m"] = _ln_forward(audio, W[p + "ln_memory.gain"], W[p + "ln_memory.offset"])
        q = qn @ W[p + "query.w"] + W[p + "query.b"]
        k = mn @ W[p + "key.w"] + W[p + "key.b"]
        mv = mn + pe
        v = mv @ W[p + "value.w"] + W[p + "value.b"]
        qh = q.reshape(B, L, H, dh).transpose(0, 2, 1, 3)
        kh = k.reshape(B, T, H, dh).transpose(0, 2, 1, 3)
        vh = v.reshape(B, T, H, dh).transpose(0, 2, 1, 3)
        P = softmax_rows(qh @ kh.swapaxes(-1, -2) * scale)  # B x H x L x T
        o = (P @ vh).transpose(0, 2, 1, 3).reshape(B, L, d)
        h = x + o @ W[p + "output.w"] + W[p + "output.b"]
        hn, c["ln_f"] = _ln_forward(h, W[p + "ln_ff.gain"], W[p + "ln_ff.offset"])
        u = hn @ W[p + "ff1.w"] + W[p + "ff1.b"]
        r = np.maximum(u, 0.0)
        x_next = h + r @ W[p + "ff2.w"] + W[p + "ff2.b"]
        c.update(qn=qn, mn=mn, mv=mv, qh=qh, kh=kh, vh=vh, P=P, o=o, hn=hn, u=u, r=r)
        layers.append(c)
        maps.append(P)
        x = x_next

    logit_phon = (x @ W["phoneme_head.w"])[..., 0] + W["phoneme_head.b"][0]
    g = cfg.d_gru
    gx_all = x @ W["gru.w_input"] + W["gru.b_input"]  # B x L x 3g
    hs = [np.zeros((B, g))]
    gru = []
    for t in range(L):
        hp = hs[-1]
        gx = gx_all[:, t]
        gh = hp @ W["gru.w_hidden"] + W["gru.b_hidden"]
        z = sigmoid(gx[:, :g] + gh[:, :g])
        rg = sigmoid(gx[:, g : 2 * g] + gh[:, g : 2 * g])
        n = np.tanh(gx[:, 2 * g :] + rg * gh[:, 2 * g :])
        hs.append((1.0 - z) * n + z * hp)
        gru.append((z, rg, n, gh))
    logit_utt = hs[-1] @ W["utterance_head.w"][:, 0] + W["utterance_head.b"][0]

    cache.update(audio=audio, layers=layers, x=x, hs=hs, gru=gru)
    return sigmoid(logit_phon), sigmoid(logit_utt), maps, cache


def _forward(features, anchor, w: MatcherWeights):
    F = np.asarray(features, dtype=np.float64)
    idx = _anchor_tokens(anchor)
    if F.ndim != 2 or idx.ndim != 1:
        raise DimensionMismatch(f"expected T' x d_enc features and a 1-D anchor, got {F.shape} and {idx.shape}")
    p_phon, p_utt, maps, cache = _forward_batch(F[None], idx[None], w)
    return MatchResult(p_phon[0], float(p_utt[0]), [P[0] for P in maps]), cache


def forward(features, anchor, w: MatcherWeights) -> MatchResult:
    return _forward(features, anchor, w)[0]


def loss(result: MatchResult, example: MatchExample):
    """Joint matching loss ``(total, utterance_bce, mean_phoneme_bce)``."""
    y_phon = np.asarray(example.labels_phon, dtype=np.float64)
    if y_phon.shape != result.p_phon.shape:
        raise DimensionMismatch(f"{y_phon.size} phoneme labels for {result.p_phon.size} anchor phonemes")
    l_utt = float(_bce(result.p_utt, float(example.label_utt)))
    l_phon = float(_bce(result.p_phon, y_phon).mean())
    return l_utt + l_phon, l_utt, l_phon


def backward(example: MatchExample, w: MatcherWeights):
    """Exact gradients of ``loss`` for one example; returns ``(grads, loss_tuple)``."""
    grads, (total, l_utt, l_phon) = backward_batch([example], w)
    return grads, (float(total[0]), float(l_utt[0]), float(l_phon[0]))


def backward_batch(examples, w: MatcherWeights):
    """Summed gradients of the per-example losses over same-shape examples.

    Returns ``(grads, (total, l_utt, l_phon))`` with one loss entry per example.
    """
    cfg = w.config
    F = np.stack([np.asarray(e.audio_features, dtype=np.float64) for e in examples])
    idx = np.stack([_anchor_tokens(e.anchor) for e in examples])
    y_phon = np.asarray([e.labels_phon for e in examples], dtype=np.float64)
    y_utt = np.asarray([e.label_utt for e in examples], dtype=np.float64)
    if y_phon.shape != idx.shape:
        raise DimensionMismatch(f"phoneme labels {y_phon.shape} do not match anchors {idx.shape}")
    p_phon, p_utt, _, cache = _forward_batch(F, idx, w)
    l_utt = _bce(p_utt, y_utt)
    l_phon = _bce(p_phon, y_phon).mean(axis=1)

    W, x, hs = cache["W"], cache["x"], cache["hs"]
    B, T = F.shape[:2]
    L, d, H, g = idx.shape[1], cfg.d_model, cfg.n_heads, cfg.d_gru
    dh = d // H
    scale = 1.0 / np.sqrt(dh)
    grads = OrderedDict((k, np.zeros_like(v)) for k, v in W.items())

    dlp = _dbce_dlogit(p_phon, y_phon) / L  # B x L
    dlu = _dbce_dlogit(p_utt, y_utt)  # B

    grads["phoneme_head.w"][:, 0] = _flat(x).T @ dlp.reshape(-1)
    grads["phoneme_head.b"][0] = dlp.sum()
    dx = dlp[..., None] * W["phoneme_head.w"][:, 0]

    grads["utterance_head.w"][:, 0] = hs[-1].T @ dlu
    grads["utterance_head.b"][0] = dlu.sum()
    dh_next = dlu[:, None] * W["utterance_head.w"][:, 0]
    dgx_all = np.empty((B, L, 3 * g))
    for t in reversed(range(L)):
        z, rg, n, gh = cache["gru"][t]
        hp = hs[t]
        dn = dh_next * (1.0 - z)
        dz = dh_next * (hp - n)
        dhp = dh_next * z
        dan = dn * (1.0 - n * n)
        dr = dan * gh[:, 2 * g :]
        daz = dz * z * (1.0 - z)
        dar = dr * rg * (1.0 - rg)
        dgx_all[:, t] = np.concatenate([daz, dar, dan], axis=1)
        dgh = np.concatenate([daz, dar, dan * rg], axis=1)
        grads["gru.w_hidden"] += hp.T @ dgh
        grads["gru.b_hidden"] += dgh.sum(axis=0)
        dh_next = dhp + dgh @ W["gru.w_hidden"].T
    grads["gru.w_input"] += _flat(x).T @ _flat(dgx_all)
    grads["gru.b_input"] += _flat(dgx_all).sum(axis=0)
    dx += dgx_all @ W["gru.w_input"].T

    daudio = np.zeros((B, T, d))
    for i in reversed(range(cfg.n_attn_layers)):
        p = f"layer{i}."
        c = cache["layers"][i]
        # x_next = h + relu(LN(h) W1 + b1) W2 + b2
        grads[p + "ff2.w"] += _flat(c["r"]).T @ _flat(dx)
        grads[p + "ff2.b"] += _flat(dx).sum(axis=0)
        du = (dx @ W[p + "ff2.w"].T) * (c["u"] > 0)
        grads[p + "ff1.w"] += _flat(c["hn"]).T @ _flat(du)
        grads[p + "ff1.b"] += _flat(du).sum(axis=0)
        dhn = du @ W[p + "ff1.w"].T
        dh_ln, dgain, doff = _ln_backward(dhn, c["ln_f"])
        grads[p + "ln_ff.gain"] += dgain
        grads[p + "ln_ff.offset"] += doff
        dh_ = dx + dh_ln
        # h = x + attn(x) W_o + b_o
        grads[p + "output.w"] += _flat(c["o"]).T @ _flat(dh_)
        grads[p + "output.b"] += _flat(dh_).sum(axis=0)
        do = (dh_ @ W[p + "output.w"].T).reshape(B, L, H, dh).transpose(0, 2, 1, 3)
        P, qh, kh, vh = c["P"], c["qh"], c["kh"], c["vh"]
        dP = do @ vh.swapaxes(-1, -2)
        dvh = P.swapaxes(-1, -2) @ do
        dS = P * (dP - (dP * P).sum(axis=-1, keepdims=True)) * scale
        dqh = dS @ kh
        dkh = dS.swapaxes(-1, -2) @ qh
        dq = dqh.transpose(0, 2, 1, 3).reshape(B, L, d)
        dk = dkh.transpose(0, 2, 1, 3).reshape(B, T, d)
        dv = dvh.transpose(0, 2, 1, 3).reshape(B, T, d)
        mn = _flat(c["mn"])
        grads[p + "query.w"] += _flat(c["qn"]).T @ _flat(dq)
        grads[p + "query.b"] += _flat(dq).sum(axis=0)
        grads[p + "key.w"] += mn.T @ _flat(dk)
        grads[p + "key.b"] += _flat(dk).sum(axis=0)
        grads[p + "value.w"] += _flat(c["mv"]).T @ _flat(dv)
        grads[p + "value.b"] += _flat(dv).sum(axis=0)
        dqn = dq @ W[p + "query.w"].T
        dmn = dk @ W[p + "key.w"].T + dv @ W[p + "value.w"].T
        dx_ln, dgain, doff = _ln_backward(dqn, c["ln_q"])
        grads[p + "ln_query.gain"] += dgain
        grads[p + "ln_query.offset"] += doff
        dm_ln, dgain, doff = _ln_backward(dmn, c["ln_m"])
        grads[p + "ln_memory.gain"] += dgain
        grads[p + "ln_memory.offset"] += doff
        daudio += dm_ln
        dx = dh_ + dx_ln

    np.add.at(grads["phoneme_embedding"], idx.reshape(-1), _flat(dx))
    grads["audio_projection.w"] += _flat(F).T @ _flat(daudio)
    grads["audio_projection.b"] += _flat(daudio).sum(axis=0)
    return grads, (l_utt + l_phon, l_utt, l_phon)


# -- gradient check ---------------------------------------------------------


def gradient_check(example: MatchExample, w: MatcherWeights, h: float = 1e-4, max_entries: int | None = None, seed: int = 0):
    """Per-tensor relative error of analytic vs central-difference gradients.

    Relative error of a tensor is max|analytic - numeric| / max(max|analytic|,
    max|numeric|, 1e-6); the floor keeps tensors whose true gradient is zero
    (key biases: softmax ignores a per-row shift) from dividing noise by noise.
    ``max_entries`` subsamples large tensors.
    """
    w64 = w.astype(np.float64)
    analytic, _ = backward(example, w64)
    rng = np.random.default_rng(seed)
    report = OrderedDict()
    for name, tensor in w64.tensors.items():
        flat = tensor.reshape(-1)
        positions = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            positions = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
        numeric = np.empty(positions.size)
        for j, pos in enumerate(positions):
            old = flat[pos]
            flat[pos] = old + h
            up = loss(forward(example.audio_features, example.anchor, w64), example)[0]
            flat[pos] = old - h
            down = loss(forward(example.audio_features, example.anchor, w64), example)[0]
            flat[pos] = old
            numeric[j] = (up - down) / (2 * h)
        a = analytic[name].reshape(-1)[positions]
        denom = max(np.abs(a).max(), np.abs(numeric).max(), GRAD_FLOOR)
        report[name] = float(np.abs(a - numeric).max() / denom)
    return report


# -- training ---------------------------------------------------------------


@dataclass(frozen=True)
class TrainHyper:
    lr: float = 0.05
    momentum: float = 0.9
    epochs: int = 30
    batch: int = 16
    seed: int = 0
    clip_norm: float | None = 1.0  # global gradient-norm clip per batch; None disables
    weight_decay: float = 0.0  # L2 coefficient, applied after clipping


def _bucketed_batches(shapes, size, rng):
    """Shuffle, split into same-shape batches of at most ``size``, shuffle the batch order."""
    buckets = {}
    for j in rng.permutation(len(shapes)):
        buckets.setdefault(shapes[j], []).append(int(j))
    batches = [idx[i : i + size] for key in sorted(buckets) for idx in [buckets[key]] for i in range(0, len(idx), size)]
    return [batches[i] for i in rng.permutation(len(batches))]


def train(dataset, config: MatcherConfig, hyper: TrainHyper = TrainHyper(), init: MatcherWeights | None = None, log=None):
    """Mini-batch SGD with momentum on the joint loss.

    Batches group examples of equal (T', L) shape so each one runs as a
    single vectorized pass.

    Returns ``(weights, epoch_losses)`` where ``epoch_losses[e]`` is the mean
    loss over the examples seen in epoch ``e`` (measured before each update).
    """
    dataset = list(dataset)
    if not dataset:
        raise EmptyDataset("no training examples")
    labels = {int(ex.label_utt) for ex in dataset}
    if len(labels) < 2:
        raise DegenerateLabels(f"only label(s) {sorted(labels)} present")
    w = (init or init_weights(config)).astype(np.float64)
    velocity = OrderedDict((k, np.zeros_like(v)) for k, v in w.tensors.items())
    rng = np.random.default_rng(hyper.seed)
    shapes = [(np.shape(ex.audio_features)[0], len(_anchor_tokens(ex.anchor))) for ex in dataset]
    history = []
    for epoch in range(hyper.epochs):
        seen = []
        for batch in _bucketed_batches(shapes, hyper.batch, rng):
            acc, (losses, _, _) = backward_batch([dataset[j] for j in batch], w)
            seen.extend(losses.tolist())
            scale = 1.0 / len(batch)
            if hyper.clip_norm is not None:
                norm = scale * np.sqrt(sum(float((g * g).sum()) for g in acc.values()))
                if norm > hyper.clip_norm:
                    scale *= hyper.clip_norm / norm
            for k, v in w.tensors.items():
                step = scale * acc[k] + hyper.weight_decay * v if hyper.weight_decay else scale * acc[k]
                velocity[k] = hyper.momentum * velocity[k] - hyper.lr * step
                v += velocity[k]
        history.append(math.fsum(seen) / len(seen))  # order-independent, so lr = 0 repeats exactly
        if log is not None:
            log(epoch, history[-1])
    return w.astype(np.float32), history


# -- serialization ----------------------------------------------------------


def save_weights(w: MatcherWeights, path) -> None:
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(w.tensors)))
        for name, t in w.tensors.items():
            raw = name.encode("utf-8")
            f.write(struct.pack("<H", len(raw)))
            f.write(raw)
            f.write(struct.pack("<I", t.ndim))
            f.write(struct.pack(f"<{t.ndim}I", *t.shape))
            f.write(np.ascontiguousarray(t, dtype="<f4").tobytes())


def load_weights(path, config: MatcherConfig | None = None) -> MatcherWeights:
    """Read an MWTS1 file; shapes are checked against ``config`` when given."""
    with open(path, "rb") as f:
        data = f.read()
    if data[: len(MAGIC)] != MAGIC:
        raise BadMagic(f"{path}: not an MWTS1 file")
    pos = len(MAGIC)

    def take(n):
        nonlocal pos
        if pos + n > len(data):
            raise TruncatedFile(f"{path}: unexpected end of file at byte {pos}")
        chunk = data[pos : pos + n]
        pos += n
        return chunk

    (count,) = struct.unpack("<I", take(4))
    tensors = OrderedDict()
    for _ in range(count):
        (nlen,) = struct.unpack("<H", take(2))
        name = take(nlen).decode("utf-8")
        (rank,) = struct.unpack("<I", take(4))
        shape = struct.unpack(f"<{rank}I", take(4 * rank))
        n = int(np.prod(shape)) if rank else 1
        tensors[name] = np.frombuffer(take(4 * n), dtype="<f4").reshape(shape).astype(np.float32)
    if pos != len(data):
        raise ShapeMismatch(f"{path}: {len(data) - pos} trailing bytes")
    if config is None:
        config = infer_config(tensors)
    w = MatcherWeights(config, tensors)
    w.check()
    return w


def infer_config(tensors, n_heads: int = 2) -> MatcherConfig:
    """Rebuild a config from tensor shapes; the head count is not stored in the file."""
    try:
        V, d = tensors["phoneme_embedding"].shape
        d_enc = tensors["audio_projection.w"].shape[0]
        g = tensors["utterance_head.w"].shape[0]
    except KeyError as e:
        raise ShapeMismatch(f"missing tensor {e}") from None
    n_layers = len({k.split(".")[0] for k in tensors if k.startswith("layer")})
    return MatcherConfig(V, d, d_enc, n_layers, n_heads, g)

"""Compact speech transformer: conv subsampling front end, pre-norm encoder/decoder,
label-smoothed CE training loss, greedy and beam decoding."""

import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Conv2d, Embedding, LayerNorm, Linear, Module, Tensor, no_grad

PAD, UNK, SOS, EOS = 0, 1, 2, 3
SPECIAL_TOKENS = ("<pad>", "<unk>", "<sos>", "<eos>")


@dataclass
class AsrConfig:
    input_dim: int = 80
    d_model: int = 64
    heads: int = 4
    d_ff: int = 128
    enc_blocks: int = 2
    dec_blocks: int = 2
    vocab: int = 12
    max_len: int = 32
    conv_front: bool = True
    conv_channels: int = 8
    dropout: float = 0.1
    label_smoothing: float = 0.1
    positional: bool = True

    def __post_init__(self):
        if self.d_model % self.heads:
            raise ValueError(f"d_model={self.d_model} is not divisible by heads={self.heads}")
        if self.vocab < 4:
            raise ValueError("vocab must hold at least the four special tokens")


FULL_SCALE_ASR = AsrConfig(input_dim=320, d_model=512, heads=4, d_ff=1024, enc_blocks=6, dec_blocks=6,
                           vocab=4232, max_len=128)


@dataclass
class Hypothesis:
    ids: list
    log_prob: float

    @property
    def length(self):
        return len(self.ids) + 1  # scored tokens include the closing eos


def positional_encoding(T, d):
    """Sinusoidal table: sin on even columns, cos on odd columns."""
    pos = np.arange(T)[:, None]
    i = np.arange(0, d, 2)[None, :]
    angle = pos / np.power(10000.0, i / d)
    pe = np.zeros((T, d))
    pe[:, 0::2] = np.sin(angle)
    pe[:, 1::2] = np.cos(angle[:, : d // 2])
    return pe


def attention(q, k, v, mask=None):
    """softmax(q k^T / sqrt(d_k)) v over the last two axes.

    ``mask`` is boolean, broadcastable to ``(Tq, Tk)``; True marks keys that
    may be attended, False positions get -inf logits.
    """
    q, k, v = ad.as_tensor(q), ad.as_tensor(k), ad.as_tensor(v)
    if k.shape[-2] != v.shape[-2]:
        raise ValueError("keys and values differ in length")
    dk = q.shape[-1]
    scores = ad.matmul(q, ad.swapaxes(k, -1, -2)) * (1.0 / math.sqrt(dk))
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape[-2:] != scores.shape[-2:]:
            raise ValueError(f"mask shape {mask.shape} does not match scores {scores.shape}")
        scores = ad.masked_fill(scores, mask, -np.inf)
    return ad.matmul(ad.softmax(scores, axis=-1), v)


def causal_mask(n):
    return np.tril(np.ones((n, n), dtype=bool))


class MultiHeadAttention(Module):
    def __init__(self, d_model, heads, rng):
        super().__init__()
        if d_model % heads:
            raise ValueError(f"d_model={d_model} is not divisible by heads={heads}")
        self.heads = heads
        self.d_k = d_model // heads
        self.wq = Linear(d_model, d_model, rng, bias=False)
        self.wk = Linear(d_model, d_model, rng, bias=False)
        self.wv = Linear(d_model, d_model, rng, bias=False)
        self.wo = Linear(d_model, d_model, rng, bias=False)

    def _split(self, x):
        return x.reshape(x.shape[0], self.heads, self.d_k).transpose(1, 0, 2)

    def forward(self, xq, xkv, mask=None):
        q = self._split(self.wq(xq))
        k = self._split(self.wk(xkv))
        v = self._split(self.wv(xkv))
        heads = attention(q, k, v, mask)
        merged = heads.transpose(1, 0, 2).reshape(xq.shape[0], self.heads * self.d_k)
        return self.wo(merged)


class FeedForward(Module):
    """max(0, x W1 + b1) W2 + b2, position-wise."""

    def __init__(self, d_model, d_ff, rng):
        super().__init__()
        self.w1 = Linear(d_model, d_ff, rng)
        self.w2 = Linear(d_ff, d_model, rng)

    def forward(self, x):
        return self.w2(ad.relu(self.w1(x)))


class EncoderBlock(Module):
    def __init__(self, cfg, rng):
        super().__init__()
        self.ln1 = LayerNorm(cfg.d_model)
        self.attn = MultiHeadAttention(cfg.d_model, cfg.heads, rng)
        self.ln2 = LayerNorm(cfg.d_model)
        self.ffn = FeedForward(cfg.d_model, cfg.d_ff, rng)
        self.p = cfg.dropout
        self.rng = rng

    def forward(self, x):
        h = self.ln1(x)
        x = x + ad.dropout(self.attn(h, h), self.p, self.rng, self.training)
        return x + ad.dropout(self.ffn(self.ln2(x)), self.p, self.rng, self.training)


class DecoderBlock(Module):
    def __init__(self, cfg, rng):
        super().__init__()
        self.ln1 = LayerNorm(cfg.d_model)
        self.self_attn = MultiHeadAttention(cfg.d_model, cfg.heads, rng)
        self.ln2 = LayerNorm(cfg.d_model)
        self.cross_attn = MultiHeadAttention(cfg.d_model, cfg.heads, rng)
        self.ln3 = LayerNorm(cfg.d_model)
        self.ffn = FeedForward(cfg.d_model, cfg.d_ff, rng)
        self.p = cfg.dropout
        self.rng = rng

    def forward(self, y, memory, mask):
        h = self.ln1(y)
        y = y + ad.dropout(self.self_attn(h, h, mask), self.p, self.rng, self.training)
        y = y + ad.dropout(self.cross_attn(self.ln2(y), memory), self.p, self.rng, self.training)
        return y + ad.dropout(self.ffn(self.ln3(y)), self.p, self.rng, self.training)


def subsampled_length(T):
    """Frames left after two stride-2, pad-1, 3x3 convolutions."""
    return -(-(-(-T // 2)) // 2)


class ConvFront(Module):
    """Two 3x3 stride-2 conv+ReLU blocks over the (time, feature) plane, then a projection."""

    def __init__(self, input_dim, channels, d_model, rng):
        super().__init__()
        self.conv1 = Conv2d(1, channels, 3, rng, stride=2, padding=1)
        self.conv2 = Conv2d(channels, channels, 3, rng, stride=2, padding=1)
        self.proj = Linear(channels * subsampled_length(input_dim), d_model, rng)

    def forward(self, x):
        T, D = x.shape
        h = ad.relu(self.conv1(x.reshape(1, T, D)))
        h = ad.relu(self.conv2(h))
        c, t2, d2 = h.shape
        return self.proj(h.transpose(1, 0, 2).reshape(t2, c * d2))


class SpeechTransformer(Module):
    def __init__(self, cfg, rng):
        super().__init__()
        self.cfg = cfg
        self.rng = rng
        if cfg.conv_front:
            self.front = ConvFront(cfg.input_dim, cfg.conv_channels, cfg.d_model, rng)
        else:
            self.front = Linear(cfg.input_dim, cfg.d_model, rng)
        for k in range(cfg.enc_blocks):
            setattr(self, f"enc{k}", EncoderBlock(cfg, rng))
        self.enc_ln = LayerNorm(cfg.d_model)
        self.embed = Embedding(cfg.vocab, cfg.d_model, rng)
        for k in range(cfg.dec_blocks):
            setattr(self, f"dec{k}", DecoderBlock(cfg, rng))
        self.dec_ln = LayerNorm(cfg.d_model)
        self.out = Linear(cfg.d_model, cfg.vocab, rng)

    def _add_position(self, x):
        x = x * math.sqrt(self.cfg.d_model)
        if self.cfg.positional:
            x = x + Tensor(positional_encoding(x.shape[0], self.cfg.d_model))
        return ad.dropout(x, self.cfg.dropout, self.rng, self.training)

    def encode(self, features):
        x = ad.as_tensor(features)
        if x.ndim != 2 or x.shape[1] != self.cfg.input_dim:
            raise ValueError(f"expected T x {self.cfg.input_dim} features, got {x.shape}")
        if self.cfg.conv_front and x.shape[0] < 4:
            raise ValueError(f"need at least 4 frames for the conv front end, got {x.shape[0]}")
        h = self._add_position(self.front(x))
        for k in range(self.cfg.enc_blocks):
            h = getattr(self, f"enc{k}")(h)
        return self.enc_ln(h)

    def decode(self, memory, prefix):
        """Logits ``(len(prefix), vocab)`` for next-token prediction at each prefix position."""
        prefix = np.asarray(prefix, dtype=np.int64)
        y = self._add_position(self.embed(prefix))
        mask = causal_mask(len(prefix))
        for k in range(self.cfg.dec_blocks):
            y = getattr(self, f"dec{k}")(y, memory, mask)
        return self.out(self.dec_ln(y))

    def forward(self, features, target):
        return asr_loss(features, target, self)


def _check_target(target, cfg):
    ids = np.asarray(list(target), dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= cfg.vocab):
        raise ValueError("target contains an out-of-vocabulary id")
    if len(ids) + 1 > cfg.max_len:
        raise ValueError(f"target length {len(ids)} exceeds max_len {cfg.max_len}")
    return ids


def asr_loss(features, target, model, smoothing=None):
    """Teacher-forced CE of ``[target, eos]`` given ``[sos, target]``, averaged over positions."""
    cfg = model.cfg
    ids = _check_target(target, cfg)
    smoothing = cfg.label_smoothing if smoothing is None else smoothing
    memory = model.encode(features)
    logits = model.decode(memory, np.concatenate([[SOS], ids]))
    return ad.cross_entropy(logits, np.concatenate([ids, [EOS]]), smoothing)


def _decode_limit(model, memory, max_len):
    if max_len is not None:
        return max_len
    return max(1, min(model.cfg.max_len, memory.shape[0] + 1))


def _step_logprobs(model, memory, ids):
    logits = model.decode(memory, [SOS] + list(ids)).data[-1]
    m = logits.max()
    lp = logits - m - np.log(np.exp(logits - m).sum())
    lp[PAD] = -np.inf
    lp[SOS] = -np.inf
    return lp


def greedy_decode(features, model, max_len=None):
    """Argmax decoding (lowest id wins ties) until eos or ``max_len`` tokens."""
    with no_grad():
        memory = model.encode(features)
        limit = _decode_limit(model, memory, max_len)
        ids, score = [], 0.0
        for _ in range(limit):
            lp = _step_logprobs(model, memory, ids)
            v = int(np.argmax(lp))
            score += float(lp[v])
            if v == EOS:
                break
            ids.append(v)
    return Hypothesis(ids, score)


def _final_score(hyp_score, ids, length_norm):
    return hyp_score / len(ids) if length_norm else hyp_score


def beam_decode(features, model, beam=5, max_len=None, length_norm=True):
    """Beam search over prefixes; returns the best finished hypothesis.

    Candidates are ranked by cumulative log-probability with ties broken by
    token ids; the final pick uses the per-token (length-normalised) score
    when ``length_norm``. Prefixes still open when the length limit is hit
    are scored alongside the finished hypotheses.
    """
    if beam < 1:
        raise ValueError("beam must be >= 1")
    with no_grad():
        memory = model.encode(features)
        limit = _decode_limit(model, memory, max_len)
        alive = [((), 0.0)]
        finished = []
        truncated = True
        for _ in range(limit):
            cands = []
            for ids, score in alive:
                lp = _step_logprobs(model, memory, ids)
                for v in np.flatnonzero(np.isfinite(lp)):
                    cands.append((ids + (int(v),), score + float(lp[v])))
            cands.sort(key=lambda c: (-c[1], c[0]))
            alive = []
            for ids, score in cands[:beam]:
                (finished if ids[-1] == EOS else alive).append((ids, score))
            if not alive or len(finished) >= beam:
                truncated = False
                break
        # prefixes cut off by the length limit compete with finished ones
        pool = finished + (alive if truncated else [])
        best = min(pool, key=lambda c: (-_final_score(c[1], c[0], length_norm), c[0]))
    ids = [v for v in best[0] if v != EOS]
    return Hypothesis(ids, best[1])


class Vocabulary:
    """Token table; ids 0-3 are the special tokens."""

    def __init__(self, tokens):
        tokens = list(tokens)
        if tuple(tokens[:4]) != SPECIAL_TOKENS:
            tokens = list(SPECIAL_TOKENS) + [t for t in tokens if t not in SPECIAL_TOKENS]
        if len(set(tokens)) != len(tokens):
            raise ValueError("duplicate vocabulary entries")
        self.tokens = tokens
        self.index = {t: i for i, t in enumerate(tokens)}

    def __len__(self):
        return len(self.tokens)

    def encode(self, text, on_unknown=None):
        ids = []
        for ch in text:
            i = self.index.get(ch)
            if i is None:
                if on_unknown is not None:
                    on_unknown(ch)
                i = UNK
            ids.append(i)
        return ids

    def decode(self, ids):
        return "".join(self.tokens[i] for i in ids if i >= len(SPECIAL_TOKENS))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(self.tokens) + "\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            tokens = [line.rstrip("\n") for line in fh if line.rstrip("\n")]
        return cls(tokens)


def spec_augment_mask(T, D, time_mask, freq_mask, rng):
    """Boolean keep-mask with one time span (width <= time_mask) and one band (width <= freq_mask) dropped."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    keep = np.ones((T, D), dtype=bool)
    tw = int(rng.integers(0, max(0, min(time_mask, T - 1)) + 1))
    if tw:
        t0 = int(rng.integers(0, T - tw + 1))
        keep[t0:t0 + tw] = False
    fw = int(rng.integers(0, max(0, min(freq_mask, D - 1)) + 1))
    if fw:
        f0 = int(rng.integers(0, D - fw + 1))
        keep[:, f0:f0 + fw] = False
    return keep


def spec_augment(features, time_mask=15, freq_mask=27, seed=0, fill=0.0):
    """Time + frequency masking; masked cells take ``fill`` (the normalised mean, 0)."""
    x = ad.as_tensor(features) if isinstance(features, Tensor) else np.asarray(features, dtype=np.float64)
    T, D = x.shape
    keep = spec_augment_mask(T, D, time_mask, freq_mask, seed)
    if isinstance(x, Tensor):
        return ad.masked_fill(x, keep, fill)
    return np.where(keep, x, fill)

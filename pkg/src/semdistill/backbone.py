"""Tiny decoder-only causal transformer.

Pre-norm residual blocks, learned absolute positional embeddings, ReLU in
the feed-forward net.  Instantiated twice in the pipeline: once as the
cross-encoder judge, once as the student's sentence encoder.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, LengthError, ShapeError, VocabError
from .numerics import Tensor, concat, gather, layer_norm, linear, slice_cols


@dataclass
class ModelConfig:
    vocab_size: int = 512
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int = 256
    max_len: int = 64
    seed: int = 0

    def validate(self):
        if self.d_model % self.n_heads != 0:
            raise ConfigError(
                f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        for name in ("vocab_size", "d_model", "n_layers", "n_heads", "d_ff",
                     "max_len"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")


@dataclass
class Backbone:
    cfg: ModelConfig
    params: dict = field(default_factory=dict)


def glorot(rng, rows, cols):
    s = math.sqrt(6.0 / (rows + cols))
    return rng.uniform(-s, s, size=(rows, cols))


def _param(arr):
    return Tensor(arr, requires_grad=True)


def init_backbone(cfg: ModelConfig) -> Backbone:
    """Deterministic initialization: scaled-uniform weights, zero biases,
    unit layer-norm gains."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    d, ff, v = cfg.d_model, cfg.d_ff, cfg.vocab_size
    p = {}
    p["emb"] = _param(glorot(rng, v, d))
    p["pos"] = _param(glorot(rng, cfg.max_len, d))
    for i in range(cfg.n_layers):
        pre = f"l{i}."
        p[pre + "ln1_g"] = _param(np.ones(d))
        p[pre + "ln1_b"] = _param(np.zeros(d))
        for name in ("wq", "wk", "wv", "wo"):
            p[pre + name] = _param(glorot(rng, d, d))
        p[pre + "ln2_g"] = _param(np.ones(d))
        p[pre + "ln2_b"] = _param(np.zeros(d))
        p[pre + "w1"] = _param(glorot(rng, d, ff))
        p[pre + "b1"] = _param(np.zeros((1, ff)))
        p[pre + "w2"] = _param(glorot(rng, ff, d))
        p[pre + "b2"] = _param(np.zeros((1, d)))
    p["lm_head"] = _param(glorot(rng, v, d))
    return Backbone(cfg, p)


def causal_mask(length):
    """[L x L] additive mask: 0 on and below the diagonal, -1e9 above."""
    m = np.triu(np.full((length, length), -1e9), k=1)
    return Tensor(m)


def _attention(x, p, pre, cfg, mask):
    # bias-free projections: a key bias cancels exactly in softmax anyway
    d = cfg.d_model
    dh = d // cfg.n_heads
    q = x @ p[pre + "wq"]
    k = x @ p[pre + "wk"]
    v = x @ p[pre + "wv"]
    heads = []
    for h in range(cfg.n_heads):
        lo, hi = h * dh, (h + 1) * dh
        qs = slice_cols(q, lo, hi)
        ks = slice_cols(k, lo, hi)
        vs = slice_cols(v, lo, hi)
        scores = (qs @ ks.T) * (1.0 / math.sqrt(dh)) + mask
        heads.append(scores.softmax() @ vs)
    return concat(heads) @ p[pre + "wo"]


def _ffn(x, p, pre):
    return linear(linear(x, p[pre + "w1"], p[pre + "b1"]).relu(),
                  p[pre + "w2"], p[pre + "b2"])


def forward_hidden(bb: Backbone, tokens) -> Tensor:
    """Last-layer hidden states [L x d_model] for a token-id sequence."""
    cfg = bb.cfg
    ids = np.asarray(list(tokens), dtype=np.intp)
    if ids.size == 0:
        raise ShapeError("forward_hidden on an empty sequence")
    if ids.size > cfg.max_len:
        raise LengthError(f"sequence length {ids.size} > max_len {cfg.max_len}")
    if ids.min() < 0 or ids.max() >= cfg.vocab_size:
        raise VocabError(f"token id outside vocab of size {cfg.vocab_size}")
    p = bb.params
    x = gather(p["emb"], ids) + gather(p["pos"], np.arange(ids.size))
    mask = causal_mask(ids.size)
    for i in range(cfg.n_layers):
        pre = f"l{i}."
        x = x + _attention(layer_norm(x, p[pre + "ln1_g"], p[pre + "ln1_b"]),
                           p, pre, cfg, mask)
        x = x + _ffn(layer_norm(x, p[pre + "ln2_g"], p[pre + "ln2_b"]), p, pre)
    return x


def lm_logits(bb: Backbone, hidden: Tensor) -> Tensor:
    """Vocabulary logits [L x vocab] from hidden states (no bias)."""
    if hidden.data.ndim != 2 or hidden.data.shape[1] != bb.cfg.d_model:
        raise ShapeError("hidden states do not match d_model")
    return hidden @ bb.params["lm_head"].T

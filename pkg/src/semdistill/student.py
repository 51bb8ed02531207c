"""Bi-encoder student: attention-pooled sentence embeddings plus a
dual-branch interaction head that reproduces the judge's verdicts.

Pooling modes: ``pma`` (learnable anchor attends over token states, no
positional encoding inside the pooler), ``mean`` (plain row mean), ``eos``
(hidden state of an appended end token).  The interaction head concatenates
query and passage embeddings, routes them through the branch matching the
task, and a linear layer turns the pair feature into a scalar logit.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .backbone import (Backbone, ModelConfig, forward_hidden, glorot,
                       init_backbone)
from .checkpoint import load_checkpoint, save_checkpoint
from .data import EOS_ID
from .errors import ConfigError, FormatError, TaskError
from .numerics import (Tensor, concat, cosine, gather, layer_norm, linear,
                       slice_cols)

POOLING_MODES = ("pma", "mean", "eos")
ROUTINGS = ("by_task", "force_sym", "force_asym")


@dataclass
class StudentConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    pma_heads: int = 4
    d_h: int = 64
    pooling: str = "pma"
    routing: str = "by_task"

    def validate(self):
        self.model.validate()
        if self.model.d_model % self.pma_heads != 0:
            raise ConfigError(
                f"d_model {self.model.d_model} not divisible by "
                f"pma_heads {self.pma_heads}")
        if self.pooling not in POOLING_MODES:
            raise ConfigError(f"unknown pooling mode {self.pooling!r}")
        if self.routing not in ROUTINGS:
            raise ConfigError(f"unknown branch routing {self.routing!r}")
        if self.d_h < 1:
            raise ConfigError("d_h must be >= 1")


@dataclass
class Student:
    cfg: StudentConfig
    backbone: Backbone
    pma: dict
    iem: dict

    def all_params(self):
        merged = {f"bb.{k}": v for k, v in self.backbone.params.items()}
        merged.update({f"pma.{k}": v for k, v in self.pma.items()})
        merged.update({f"iem.{k}": v for k, v in self.iem.items()})
        return merged


def _param(arr):
    return Tensor(arr, requires_grad=True)


def clone_backbone(bb: Backbone) -> Backbone:
    out = Backbone(bb.cfg, {})
    for name, p in bb.params.items():
        out.params[name] = _param(p.data.copy())
    return out


def init_student(cfg: StudentConfig, backbone: Backbone = None) -> Student:
    """Fresh student; pass the finetuned judge's backbone to start the
    encoder from the same weights (it is copied, never shared)."""
    cfg.validate()
    d = cfg.model.d_model
    bb = clone_backbone(backbone) if backbone is not None else init_backbone(cfg.model)
    rng = np.random.default_rng([cfg.model.seed, 1])
    pma = {
        "q": _param(glorot(rng, 1, d)),
        "wq": _param(glorot(rng, d, d)),
        "wk": _param(glorot(rng, d, d)),
        "wv": _param(glorot(rng, d, d)),
        "wo": _param(glorot(rng, d, d)),
        "ln1_g": _param(np.ones(d)),
        "ln1_b": _param(np.zeros(d)),
        "w1": _param(glorot(rng, d, 4 * d)),
        "b1": _param(np.zeros((1, 4 * d))),
        "w2": _param(glorot(rng, 4 * d, d)),
        "b2": _param(np.zeros((1, d))),
        "ln2_g": _param(np.ones(d)),
        "ln2_b": _param(np.zeros(d)),
    }
    rng = np.random.default_rng([cfg.model.seed, 2])
    dh = cfg.d_h
    iem = {
        "f1_w": _param(glorot(rng, 2 * d, dh)),
        "f1_b": _param(np.zeros((1, dh))),
        "f2_sym_w": _param(glorot(rng, dh, dh)),
        "f2_sym_b": _param(np.zeros((1, dh))),
        "f2_asym_w": _param(glorot(rng, dh, dh)),
        "f2_asym_b": _param(np.zeros((1, dh))),
        "w_s": _param(glorot(rng, dh, 1)),
        "b_s": _param(np.zeros((1, 1))),
    }
    return Student(cfg, bb, pma, iem)


def pma_pool(student: Student, hidden: Tensor) -> Tensor:
    """Anchor-query attention pooling over token states [L x d] -> [1 x d].

    Order-free by construction: no mask, no positional encoding in here.
    """
    p = student.pma
    d = student.cfg.model.d_model
    heads = student.cfg.pma_heads
    dh = d // heads
    q = p["q"] @ p["wq"]
    k = hidden @ p["wk"]
    v = hidden @ p["wv"]
    outs = []
    for h in range(heads):
        lo, hi = h * dh, (h + 1) * dh
        qs = slice_cols(q, lo, hi)
        ks = slice_cols(k, lo, hi)
        vs = slice_cols(v, lo, hi)
        scores = (qs @ ks.T) * (1.0 / math.sqrt(dh))
        outs.append(scores.softmax() @ vs)
    attended = concat(outs) @ p["wo"]
    h1 = layer_norm(attended + p["q"], p["ln1_g"], p["ln1_b"])
    ffn = linear(linear(h1, p["w1"], p["b1"]).relu(), p["w2"], p["b2"])
    return layer_norm(h1 + ffn, p["ln2_g"], p["ln2_b"])


def embed(student: Student, tokens, pooling=None) -> Tensor:
    """Sentence embedding [1 x d] under the configured pooling mode."""
    mode = pooling or student.cfg.pooling
    if mode not in POOLING_MODES:
        raise ConfigError(f"unknown pooling mode {mode!r}")
    if mode == "eos":
        tokens = list(tokens) + [EOS_ID]
        hidden = forward_hidden(student.backbone, tokens)
        return gather(hidden, [hidden.data.shape[0] - 1])
    hidden = forward_hidden(student.backbone, tokens)
    if mode == "pma":
        return pma_pool(student, hidden)
    rows = hidden.data.shape[0]
    averager = Tensor(np.full((1, rows), 1.0 / rows))
    return averager @ hidden


def _branch(student, task):
    routing = student.cfg.routing
    if routing == "force_sym":
        return "sym"
    if routing == "force_asym":
        return "asym"
    if task not in ("sym", "asym"):
        raise TaskError(f"unknown task {task!r}")
    return task


def interact(student: Student, y_i: Tensor, y_j: Tensor, task) -> Tensor:
    """Pair feature f2_task(f1([y_i || y_j])); order-sensitive."""
    p = student.iem
    branch = _branch(student, task)
    joined = concat([y_i, y_j])
    h = linear(joined, p["f1_w"], p["f1_b"]).relu()
    w, b = p[f"f2_{branch}_w"], p[f"f2_{branch}_b"]
    return linear(h, w, b).relu()


def score(student: Student, y_i: Tensor, y_j: Tensor, task):
    """Scalar logit and probability for the pair (query first)."""
    feature = interact(student, y_i, y_j, task)
    z = linear(feature, student.iem["w_s"], student.iem["b_s"]).sum()
    s = float(1.0 / (1.0 + np.exp(-z.data)))
    return z, s


def score_cosine(y_i: Tensor, y_j: Tensor) -> Tensor:
    """Ablation head: plain cosine similarity of the two embeddings."""
    return cosine(y_i, y_j)


# -- persistence ----------------------------------------------------------------

def save_student(path, student: Student):
    cfg = student.cfg
    m = cfg.model
    config = {"kind": "student", "vocab_size": m.vocab_size,
              "d_model": m.d_model, "n_layers": m.n_layers,
              "n_heads": m.n_heads, "d_ff": m.d_ff, "max_len": m.max_len,
              "seed": m.seed, "pma_heads": cfg.pma_heads, "d_h": cfg.d_h,
              "pooling": cfg.pooling, "routing": cfg.routing}
    return save_checkpoint(path, config, student.all_params())


def load_student(path) -> Student:
    config, arrays, _ = load_checkpoint(path)
    if config.get("kind") != "student":
        raise FormatError(f"{path}: checkpoint is not a student")
    model = ModelConfig(vocab_size=int(config["vocab_size"]),
                        d_model=int(config["d_model"]),
                        n_layers=int(config["n_layers"]),
                        n_heads=int(config["n_heads"]),
                        d_ff=int(config["d_ff"]),
                        max_len=int(config["max_len"]),
                        seed=int(config["seed"]))
    cfg = StudentConfig(model=model, pma_heads=int(config["pma_heads"]),
                        d_h=int(config["d_h"]), pooling=config["pooling"],
                        routing=config["routing"])
    student = init_student(cfg)
    merged = student.all_params()
    if set(arrays) != set(merged):
        raise FormatError(f"{path}: parameter names do not match the config")
    for name, arr in arrays.items():
        merged[name].data = arr
    return student

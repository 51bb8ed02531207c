"""Cross-encoder judge: prompted pairs in, yes/no judgment out.

The judgment score is kept as the scalar log-odds zeta = z_yes - z_no;
softmax over the two-token slice equals sigmoid of that difference, so no
information is lost.  Judgments are cached to a binary file so distillation
never re-runs the teacher.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from .backbone import Backbone, ModelConfig, forward_hidden, init_backbone
from .checkpoint import fingerprint_params, load_checkpoint, save_checkpoint
from .data import BOS_ID, NO_ID, P_ASYM_ID, P_SYM_ID, SEP_ID, YES_ID
from .errors import (DataError, FormatError, LengthError, StaleCacheError,
                     TaskError)
from .numerics import backward, fresh_tape, gather, no_grad, stack
from .optim import AdamW

_TASK_MARKER = {"sym": P_SYM_ID, "asym": P_ASYM_ID}
_TASK_CODE = {"sym": 0, "asym": 1}
_CODE_TASK = {v: k for k, v in _TASK_CODE.items()}

CACHE_MAGIC = b"D2TC"
CACHE_VERSION = 1


@dataclass
class TeacherJudgment:
    zeta: float
    s: float
    feature: np.ndarray


def assemble_prompt(s_i, s_j, task, max_len):
    """[BOS] s_i [SEP] s_j [marker]; the passage is right-truncated on
    overflow.  Returns (tokens, truncated)."""
    if task not in _TASK_MARKER:
        raise TaskError(f"unknown task {task!r}")
    overhead = 3
    if len(s_i) + overhead > max_len:
        raise LengthError(
            f"query of {len(s_i)} tokens cannot fit in max_len {max_len}")
    budget = max_len - overhead - len(s_i)
    truncated = len(s_j) > budget
    s_j = list(s_j)[:budget]
    tokens = [BOS_ID] + list(s_i) + [SEP_ID] + s_j + [_TASK_MARKER[task]]
    return tokens, truncated


def zeta_node(bb: Backbone, tokens):
    """Differentiable log-odds z_yes - z_no at the final prompt position."""
    hidden = forward_hidden(bb, tokens)
    feat = gather(hidden, [len(tokens) - 1])
    w = gather(bb.params["lm_head"], [YES_ID]) - gather(bb.params["lm_head"], [NO_ID])
    return (feat * w).sum(), feat


def judge(bb: Backbone, s_i, s_j, task) -> TeacherJudgment:
    """Judge one prompted pair with the frozen teacher."""
    tokens, _ = assemble_prompt(s_i, s_j, task, bb.cfg.max_len)
    with no_grad():
        zeta_t, feat = zeta_node(bb, tokens)
    zeta = float(zeta_t.data)
    s = float(1.0 / (1.0 + np.exp(-zeta)))
    return TeacherJudgment(zeta=zeta, s=s, feature=feat.data[0].copy())


def balance_pairs(labeled_pairs, seed):
    """Subsample the larger label side to a 1:1 ratio, deterministically."""
    pos = [p for p in labeled_pairs if p[3] == 1]
    neg = [p for p in labeled_pairs if p[3] == 0]
    rng = np.random.default_rng(seed)
    if len(pos) > len(neg):
        keep = sorted(rng.choice(len(pos), size=len(neg), replace=False))
        pos = [pos[i] for i in keep]
    elif len(neg) > len(pos):
        keep = sorted(rng.choice(len(neg), size=len(pos), replace=False))
        neg = [neg[i] for i in keep]
    return pos + neg


def finetune_teacher(bb: Backbone, labeled_pairs, epochs, lr,
                     batch_size=32, seed=0, weight_decay=0.01):
    """Binary cross-entropy over prompted pairs with AdamW.

    ``labeled_pairs`` holds (s_i tokens, s_j tokens, task, label in {0,1});
    the builder first rebalances to 1:1.  Returns per-epoch mean losses.
    """
    if not labeled_pairs:
        raise DataError("empty finetuning dataset")
    pairs = balance_pairs(labeled_pairs, seed)
    opt = AdamW(bb.params, lr=lr, weight_decay=weight_decay)
    epoch_losses = []
    for epoch in range(epochs):
        rng = np.random.default_rng((seed, epoch))
        order = rng.permutation(len(pairs))
        losses = []
        for start in range(0, len(pairs), batch_size):
            batch = [pairs[i] for i in order[start:start + batch_size]]
            with fresh_tape():
                terms = []
                for s_i, s_j, task, label in batch:
                    tokens, _ = assemble_prompt(s_i, s_j, task, bb.cfg.max_len)
                    zeta, _ = zeta_node(bb, tokens)
                    if label == 1:
                        terms.append(-zeta.log_sigmoid())
                    else:
                        terms.append(-(-zeta).log_sigmoid())
                loss = stack(terms).mean()
                opt.zero_grad()
                backward(loss, bb.params.values())
            opt.step()
            losses.append(float(loss.data))
        epoch_losses.append(float(np.mean(losses)))
    return epoch_losses


# -- judgment cache ------------------------------------------------------------

@dataclass
class JudgmentCache:
    d_model: int
    fingerprint: int
    entries: dict = field(default_factory=dict)

    def put(self, query_id, cand_id, task, zeta, s, feature):
        # quantize to the file format's f32 at insert time so training sees
        # the same values whether or not the cache went through disk
        self.entries[(query_id, cand_id, task)] = (
            float(np.float32(zeta)), float(np.float32(s)),
            np.asarray(feature, dtype=np.float32))

    def get(self, query_id, cand_id, task):
        try:
            return self.entries[(query_id, cand_id, task)]
        except KeyError:
            raise StaleCacheError(
                f"judgment missing for pair ({query_id}, {cand_id}, {task}); "
                "rebuild the cache") from None

    def __len__(self):
        return len(self.entries)


def cache_judgments(bb: Backbone, pair_requests) -> JudgmentCache:
    """Judge every (query_id, query_tokens, cand_id, cand_tokens, task)
    request once; duplicates resolve from the growing cache."""
    cache = JudgmentCache(d_model=bb.cfg.d_model,
                          fingerprint=fingerprint_params(bb.params))
    for query_id, q_tokens, cand_id, c_tokens, task in pair_requests:
        key = (query_id, cand_id, task)
        if key in cache.entries:
            continue
        j = judge(bb, q_tokens, c_tokens, task)
        cache.put(query_id, cand_id, task, j.zeta, j.s, j.feature)
    return cache


def save_cache(path, cache: JudgmentCache):
    with open(path, "wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(struct.pack("<I", CACHE_VERSION))
        fh.write(struct.pack("<I", cache.d_model))
        fh.write(struct.pack("<Q", len(cache.entries)))
        for (qid, cid, task) in sorted(cache.entries):
            zeta, s, feature = cache.entries[(qid, cid, task)]
            fh.write(struct.pack("<QQB", qid, cid, _TASK_CODE[task]))
            fh.write(struct.pack("<ff", zeta, s))
            fh.write(np.ascontiguousarray(feature, dtype="<f4").tobytes())
        fh.write(struct.pack("<Q", cache.fingerprint))


def load_cache(path, expected_fingerprint=None) -> JudgmentCache:
    with open(path, "rb") as fh:
        blob = fh.read()
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(blob):
            raise FormatError(f"truncated cache file {path}")
        out = blob[pos:pos + n]
        pos += n
        return out

    if take(4) != CACHE_MAGIC:
        raise FormatError(f"{path}: bad magic, not a judgment cache")
    version = struct.unpack("<I", take(4))[0]
    if version != CACHE_VERSION:
        raise FormatError(f"{path}: unsupported cache version {version}")
    d_model = struct.unpack("<I", take(4))[0]
    count = struct.unpack("<Q", take(8))[0]
    entries = {}
    for _ in range(count):
        qid, cid, code = struct.unpack("<QQB", take(17))
        if code not in _CODE_TASK:
            raise FormatError(f"{path}: bad task code {code}")
        zeta, s = struct.unpack("<ff", take(8))
        feature = np.frombuffer(take(4 * d_model), dtype="<f4").copy()
        entries[(qid, cid, _CODE_TASK[code])] = (float(zeta), float(s), feature)
    fingerprint = struct.unpack("<Q", take(8))[0]
    if pos != len(blob):
        raise FormatError(f"{path}: trailing bytes after cache")
    if expected_fingerprint is not None and fingerprint != expected_fingerprint:
        raise StaleCacheError(
            f"{path}: cache fingerprint {fingerprint:#x} does not match "
            f"teacher weights {expected_fingerprint:#x}")
    return JudgmentCache(d_model=d_model, fingerprint=fingerprint,
                         entries=entries)


# -- persistence ----------------------------------------------------------------

def save_teacher(path, bb: Backbone):
    cfg = bb.cfg
    config = {"kind": "teacher", "vocab_size": cfg.vocab_size,
              "d_model": cfg.d_model, "n_layers": cfg.n_layers,
              "n_heads": cfg.n_heads, "d_ff": cfg.d_ff,
              "max_len": cfg.max_len, "seed": cfg.seed}
    return save_checkpoint(path, config, bb.params)


def load_teacher(path) -> Backbone:
    config, arrays, _ = load_checkpoint(path)
    if config.get("kind") != "teacher":
        raise FormatError(f"{path}: checkpoint is not a teacher")
    cfg = ModelConfig(vocab_size=int(config["vocab_size"]),
                      d_model=int(config["d_model"]),
                      n_layers=int(config["n_layers"]),
                      n_heads=int(config["n_heads"]),
                      d_ff=int(config["d_ff"]),
                      max_len=int(config["max_len"]),
                      seed=int(config["seed"]))
    bb = init_backbone(cfg)
    if set(arrays) != set(bb.params):
        raise FormatError(f"{path}: parameter names do not match the config")
    for name, arr in arrays.items():
        bb.params[name].data = arr
    return bb

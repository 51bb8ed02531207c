"""Tokenization, pair/corpus ingestion, and synthetic task generators."""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, ParseError

# Reserved token ids, fixed at build time.  YES/NO are the judgment target
# tokens; P_SYM/P_ASYM are the task-marker prompt tokens.
PAD_ID = 0
BOS_ID = 1
SEP_ID = 2
EOS_ID = 3
P_SYM_ID = 4
YES_ID = 5
NO_ID = 6
UNK_ID = 7
P_ASYM_ID = 8

RESERVED = ["[PAD]", "[BOS]", "[SEP]", "[EOS]", "[P_SYM]", "[YES]", "[NO]",
            "[UNK]", "[P_ASYM]"]
N_RESERVED = len(RESERVED)

TASKS = ("sym", "asym")


@dataclass
class Vocab:
    token_to_id: dict
    id_to_token: list

    def __len__(self):
        return len(self.id_to_token)


@dataclass
class PairRecord:
    query: str
    positives: list
    hard_negatives: list = field(default_factory=list)
    task: str = "sym"


@dataclass
class CorpusRecord:
    id: int
    text: str


def build_vocab(texts, max_size):
    """Frequency-then-lexicographic vocabulary over whitespace tokens.

    ``max_size`` caps the number of content entries; the reserved block is
    always present below them.  Out-of-vocabulary tokens map to [UNK].
    """
    if max_size < 8:
        raise DataError(f"vocab max_size {max_size} < 8")
    counts = {}
    seen_any = False
    for text in texts:
        seen_any = True
        for tok in text.split():
            counts[tok] = counts.get(tok, 0) + 1
    if not seen_any:
        raise DataError("empty corpus: cannot build a vocabulary")
    ranked = sorted(counts, key=lambda t: (-counts[t], t))[:max_size]
    id_to_token = list(RESERVED) + ranked
    token_to_id = {tok: i for i, tok in enumerate(id_to_token)}
    return Vocab(token_to_id, id_to_token)


def tokenize(vocab, text):
    """Whitespace split and map; unknown words become [UNK].  No implicit
    BOS/EOS: prompt assembly adds specials."""
    return [vocab.token_to_id.get(tok, UNK_ID) for tok in text.split()]


def detokenize(vocab, ids):
    return " ".join(vocab.id_to_token[i] for i in ids)


# -- synthetic task generators ----------------------------------------------

_CONTENT = [f"w{i:03d}" for i in range(200)]
Q_MARKER = "qq"


def multiset_jaccard(a_tokens, b_tokens):
    """Multiset Jaccard: sum of min counts over sum of max counts."""
    keys = set(a_tokens) | set(b_tokens)
    ca = {}
    cb = {}
    for t in a_tokens:
        ca[t] = ca.get(t, 0) + 1
    for t in b_tokens:
        cb[t] = cb.get(t, 0) + 1
    inter = sum(min(ca.get(k, 0), cb.get(k, 0)) for k in keys)
    union = sum(max(ca.get(k, 0), cb.get(k, 0)) for k in keys)
    return inter / union


def gen_symmetric(seed, n, n_hard=8):
    """Symmetric-search task: positives are token-swapped/duplicated copies
    of the base (multiset Jaccard >= 0.6 by construction), hard negatives
    keep floor(L/2) base tokens and fill from outside the base's token set
    (Jaccard <= 1/3 < 0.45)."""
    if n < 1:
        raise DataError("n must be >= 1")
    rng = np.random.default_rng(seed)
    records = []
    corpus = []

    def add_doc(text):
        corpus.append(CorpusRecord(id=len(corpus), text=text))

    for _ in range(n):
        length = int(rng.integers(8, 17))
        base = [_CONTENT[i] for i in rng.integers(0, len(_CONTENT), size=length)]
        pos = list(base)
        for _ in range(2):
            i, j = rng.integers(0, length, size=2)
            pos[i], pos[j] = pos[j], pos[i]
        dup = pos[int(rng.integers(0, length))]
        pos.insert(int(rng.integers(0, length + 1)), dup)
        base_set = set(base)
        outside = [w for w in _CONTENT if w not in base_set]
        hards = []
        keep = length // 2
        for _ in range(n_hard):
            kept_idx = rng.choice(length, size=keep, replace=False)
            kept = [base[i] for i in sorted(kept_idx)]
            fill = [outside[i] for i in
                    rng.integers(0, len(outside), size=length - keep)]
            neg = kept + fill
            rng.shuffle(neg)
            hards.append(" ".join(neg))
        records.append(PairRecord(query=" ".join(base),
                                  positives=[" ".join(pos)],
                                  hard_negatives=hards, task="sym"))
        add_doc(records[-1].positives[0])
        for h in hards:
            add_doc(h)
    return records, corpus


def gen_asymmetric(seed, n, n_hard=8):
    """Asymmetric-search task: passage = 3 key tokens + 10-20 body tokens,
    query = marker + key tokens; hard negatives replace exactly one key
    token with a token outside the key."""
    if n < 1:
        raise DataError("n must be >= 1")
    rng = np.random.default_rng(seed)
    records = []
    corpus = []

    def add_doc(text):
        corpus.append(CorpusRecord(id=len(corpus), text=text))

    def body():
        blen = int(rng.integers(10, 21))
        return [_CONTENT[i] for i in rng.integers(0, len(_CONTENT), size=blen)]

    for _ in range(n):
        key = [_CONTENT[i] for i in rng.choice(len(_CONTENT), size=3, replace=False)]
        passage = key + body()
        query = [Q_MARKER] + key
        outside = [w for w in _CONTENT if w not in key]
        hards = []
        for _ in range(n_hard):
            neg_key = list(key)
            neg_key[int(rng.integers(0, 3))] = outside[int(rng.integers(0, len(outside)))]
            hards.append(" ".join(neg_key + body()))
        records.append(PairRecord(query=" ".join(query),
                                  positives=[" ".join(passage)],
                                  hard_negatives=hards, task="asym"))
        add_doc(records[-1].positives[0])
        for h in hards:
            add_doc(h)
    return records, corpus


# -- file formats -------------------------------------------------------------

def save_pairs(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps({"query": rec.query,
                                 "positives": rec.positives,
                                 "hard_negatives": rec.hard_negatives,
                                 "task": rec.task}) + "\n")


def load_pairs(path):
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            for fieldname in ("query", "positives", "task"):
                if fieldname not in obj:
                    raise ParseError(f"{path}:{lineno}: missing field {fieldname!r}")
            if obj["task"] not in TASKS:
                raise ParseError(f"{path}:{lineno}: bad task tag {obj['task']!r}")
            if not obj["positives"]:
                raise ParseError(f"{path}:{lineno}: record needs >= 1 positive")
            records.append(PairRecord(query=obj["query"],
                                      positives=list(obj["positives"]),
                                      hard_negatives=list(obj.get("hard_negatives", [])),
                                      task=obj["task"]))
    return records


def save_corpus(path, corpus):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in corpus:
            fh.write(f"{rec.id}\t{rec.text}\n")


def load_corpus(path):
    corpus = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            ident, sep, text = line.partition("\t")
            if not sep:
                raise ParseError(f"{path}:{lineno}: expected <id>\\t<text>")
            try:
                doc_id = int(ident)
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: bad id {ident!r}") from exc
            if doc_id in seen:
                raise ParseError(f"{path}:{lineno}: duplicate id {doc_id}")
            seen.add(doc_id)
            corpus.append(CorpusRecord(id=doc_id, text=text))
    return corpus


def all_texts(records, corpus):
    """Every text the models may see: queries, positives, negatives, docs."""
    for rec in records:
        yield rec.query
        yield from rec.positives
        yield from rec.hard_negatives
    for doc in corpus:
        yield doc.text

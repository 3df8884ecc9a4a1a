"""Corpus ingestion, tokenization, vocabulary, splits and batching.

Two corpus sources are supported: line-delimited review dumps (JSON object
per line with a text field and a numeric rating) and a seeded synthetic
review generator small enough to train everything on a CPU in minutes.
The on-disk dataset format is one example per line: label, tab, space-joined
tokens. Synthetic corpora also write a ``.opinions`` sidecar with the
ground-truth opinion-word positions, which only evaluation may read.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace

import numpy as np

from .autodiff import Rng

PAD, UNK, BOS, EOS = 0, 1, 2, 3
SPECIALS = ("<pad>", "<unk>", "<bos>", "<eos>")

_TOKEN_RE = re.compile(r"[a-z0-9']+|[^a-z0-9\s]")


class DataError(ValueError):
    """Raised for unusable corpora or invalid pipeline arguments."""


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace and separate punctuation."""
    return _TOKEN_RE.findall(text.lower())


def detokenize(tokens) -> str:
    return " ".join(tokens)


@dataclass
class LabeledSentence:
    tokens: tuple[str, ...]
    label: int                       # 0 = negative, 1 = positive
    raw_text: str
    opinion_positions: tuple[int, ...] | None = None
    ids: np.ndarray | None = field(default=None, compare=False)

    def __len__(self):
        return len(self.tokens)


class Vocab:
    """Token <-> id map with fixed reserved ids 0..3 (PAD/UNK/BOS/EOS)."""

    def __init__(self, tokens):
        self.id_to_token = list(SPECIALS) + [t for t in tokens if t not in SPECIALS]
        self.token_to_id = {t: i for i, t in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise DataError("duplicate tokens in vocabulary")

    def __len__(self):
        return len(self.id_to_token)

    def __contains__(self, token):
        return token in self.token_to_id

    @classmethod
    def build(cls, sentences, min_freq: int = 2) -> "Vocab":
        counts: dict[str, int] = {}
        for s in sentences:
            for t in s.tokens:
                counts[t] = counts.get(t, 0) + 1
        kept = sorted((t for t, c in counts.items() if c >= min_freq),
                      key=lambda t: (-counts[t], t))
        return cls(kept)

    def encode(self, tokens) -> np.ndarray:
        unk = UNK
        return np.array([self.token_to_id.get(t, unk) for t in tokens], dtype=np.int64)

    def decode(self, ids) -> list[str]:
        return [self.id_to_token[int(i)] for i in ids]

    def hash(self) -> str:
        import hashlib
        return hashlib.sha256("\x00".join(self.id_to_token).encode()).hexdigest()

    def save(self, path):
        with open(path, "w", encoding="utf-8") as f:
            for t in self.id_to_token:
                f.write(t + "\n")

    @classmethod
    def load(cls, path) -> "Vocab":
        with open(path, encoding="utf-8") as f:
            toks = [line.rstrip("\n") for line in f if line.rstrip("\n")]
        if toks[:4] != list(SPECIALS):
            raise DataError(f"vocab file {path} missing reserved tokens")
        return cls(toks[4:])


# ---------------------------------------------------------------------------
# ingestion

@dataclass
class IngestStats:
    kept: int = 0
    skipped_unreadable: int = 0
    dropped_neutral: int = 0
    dropped_length: int = 0


def ingest_reviews(path, rating_field: str = "stars", text_field: str = "text",
                   max_len: int = 50) -> tuple[list[LabeledSentence], IngestStats]:
    """Read a line-delimited review dump and binarise ratings.

    Ratings >= 4 become positive, <= 2 negative; 3-star reviews are dropped.
    Reviews longer than max_len tokens (or empty) are dropped. Unreadable
    lines are skipped and counted.
    """
    stats = IngestStats()
    out: list[LabeledSentence] = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                rating = float(rec[rating_field])
                text = str(rec[text_field])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError):
                stats.skipped_unreadable += 1
                continue
            if rating >= 4:
                label = 1
            elif rating <= 2:
                label = 0
            else:
                stats.dropped_neutral += 1
                continue
            tokens = tokenize(text)
            if not 1 <= len(tokens) <= max_len:
                stats.dropped_length += 1
                continue
            out.append(LabeledSentence(tuple(tokens), label, text))
            stats.kept += 1
    if not out:
        raise DataError(f"no usable records in {path} "
                        f"({stats.skipped_unreadable} unreadable lines)")
    return out, stats


# ---------------------------------------------------------------------------
# splitting

@dataclass
class SplitDataset:
    train: list[LabeledSentence]
    dev: list[LabeledSentence]
    test: list[LabeledSentence]

    def splits(self):
        return {"train": self.train, "dev": self.dev, "test": self.test}

    def class_counts(self, split: str) -> dict[int, int]:
        counts = {0: 0, 1: 0}
        for s in getattr(self, split):
            counts[s.label] += 1
        return counts

    def encode(self, vocab: Vocab) -> "SplitDataset":
        for part in (self.train, self.dev, self.test):
            for i, s in enumerate(part):
                part[i] = replace(s, ids=vocab.encode(s.tokens))
        return self


def split_and_balance(data, ratios=(0.90, 0.05, 0.05), seed: int = 0) -> SplitDataset:
    """Stratified seeded split followed by per-split majority downsampling."""
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise DataError(f"split ratios must sum to 1, got {ratios}")
    by_class = {0: [s for s in data if s.label == 0],
                1: [s for s in data if s.label == 1]}
    for label, group in by_class.items():
        if len(group) < 10:
            raise DataError(f"need at least 10 examples per class, "
                            f"class {label} has {len(group)}")
    rng = Rng(seed).child("split")
    parts: dict[str, list[LabeledSentence]] = {"train": [], "dev": [], "test": []}
    for label in (0, 1):
        group = by_class[label]
        order = rng.child(f"class{label}").permutation(len(group))
        shuffled = [group[i] for i in order]
        n = len(group)
        n_train = int(n * ratios[0])
        n_dev = int(n * ratios[1])
        parts["train"].extend(shuffled[:n_train])
        parts["dev"].extend(shuffled[n_train:n_train + n_dev])
        parts["test"].extend(shuffled[n_train + n_dev:])
    for name, part in parts.items():
        counts = {0: sum(1 for s in part if s.label == 0),
                  1: sum(1 for s in part if s.label == 1)}
        if min(counts.values()) == 0:
            raise DataError(f"split '{name}' lost a class entirely: {counts}")
        keep = min(counts.values())
        seen = {0: 0, 1: 0}
        balanced = []
        for s in part:
            if seen[s.label] < keep:
                balanced.append(s)
                seen[s.label] += 1
        order = rng.child(f"mix-{name}").permutation(len(balanced))
        parts[name] = [balanced[i] for i in order]
    return SplitDataset(parts["train"], parts["dev"], parts["test"])


# ---------------------------------------------------------------------------
# synthetic corpus

@dataclass(frozen=True)
class SynthLexicon:
    positive: tuple[str, ...]
    negative: tuple[str, ...]
    fillers: tuple[str, ...]
    templates: tuple[str, ...]


POSITIVE_WORDS = (
    "great", "excellent", "wonderful", "fantastic", "delicious", "friendly",
    "amazing", "perfect", "lovely", "superb", "tasty", "charming", "helpful",
    "awesome", "brilliant", "pleasant", "outstanding", "fabulous", "terrific",
    "delightful",
)

NEGATIVE_WORDS = (
    "terrible", "awful", "horrible", "bland", "rude", "disgusting", "dirty",
    "mediocre", "disappointing", "dreadful", "stale", "nasty", "lousy",
    "gross", "overpriced", "noisy", "greasy", "tasteless", "unfriendly",
    "miserable",
)

FILLER_WORDS = (
    "food", "service", "place", "staff", "pizza", "coffee", "burger", "soup",
    "salad", "steak", "dessert", "bread", "menu", "price", "location",
    "atmosphere", "room", "table", "waiter", "chef", "bar", "patio", "brunch",
    "lunch", "dinner", "breakfast", "sandwich", "pasta", "sauce", "drink",
    "wine", "beer", "cake", "fish", "chicken", "rice", "tea", "juice",
    "bakery", "diner", "cafe", "kitchen", "decor", "seating", "parking",
    "music", "crowd", "portion", "flavor", "view",
)

# {op} slots take a same-polarity opinion word, {n} slots a filler noun
TEMPLATES = (
    "the {n} was {op} .",
    "the {n} was {op} and the {n} was {op} .",
    "we tried the {n} and it was {op} .",
    "i thought the {n} was {op} but the {n} seemed {op} too .",
    "the {n} was {op} , the {n} was {op} and the {n} was {op} .",
    "my {n} tasted {op} and the {n} looked {op} .",
    "this {n} is {op} !",
    "they said the {n} here is {op} and we agree .",
    "the {n} and the {n} were both {op} .",
    "{op} {n} , {op} {n} and a very {op} {n} .",
    "we visited for {n} and found the {n} quite {op} .",
    "the {n} was {op} so we ordered the {n} again .",
    "it was a {op} {n} with {op} {n} and {op} {n} .",
    "honestly the {n} at this {n} was {op} and the {n} was {op} .",
    "the {n} looked {op} , tasted {op} and felt {op} .",
)

DEFAULT_LEXICON = SynthLexicon(POSITIVE_WORDS, NEGATIVE_WORDS, FILLER_WORDS, TEMPLATES)


def synth_corpus(n: int, seed: int = 0,
                 lexicon: SynthLexicon = DEFAULT_LEXICON) -> list[LabeledSentence]:
    """Generate n template reviews, alternating labels for exact balance.

    Every opinion slot in a sentence is filled from the label's polarity
    set, so the label is decidable from the opinion words alone. The filled
    opinion positions are recorded on each sentence for evaluation.
    """
    if n <= 0:
        raise DataError(f"corpus size must be positive, got {n}")
    if set(lexicon.positive) & set(lexicon.negative):
        raise DataError("positive and negative opinion sets must be disjoint")
    rng = Rng(seed).child("synth")
    out = []
    for i in range(n):
        label = i % 2
        opinion_pool = lexicon.positive if label == 1 else lexicon.negative
        template = rng.choice(lexicon.templates).split()
        tokens = []
        positions = []
        for slot in template:
            if slot == "{op}":
                positions.append(len(tokens))
                tokens.append(rng.choice(opinion_pool))
            elif slot == "{n}":
                tokens.append(rng.choice(lexicon.fillers))
            else:
                tokens.append(slot)
        out.append(LabeledSentence(tuple(tokens), label, detokenize(tokens),
                                   opinion_positions=tuple(positions)))
    return out


# ---------------------------------------------------------------------------
# batching

@dataclass
class Batch:
    ids: np.ndarray        # (B, T) int64, right-padded with PAD
    valid: np.ndarray      # (B, T) bool
    labels: np.ndarray     # (B,) int64
    lengths: np.ndarray    # (B,) int64
    indices: np.ndarray    # (B,) positions in the source list
    sentences: list[LabeledSentence]

    def __len__(self):
        return self.ids.shape[0]


def collate(sentences, indices=None) -> Batch:
    if any(s.ids is None for s in sentences):
        raise DataError("sentences must be encoded before batching")
    lengths = np.array([len(s.ids) for s in sentences], dtype=np.int64)
    tmax = int(lengths.max())
    bsz = len(sentences)
    ids = np.full((bsz, tmax), PAD, dtype=np.int64)
    valid = np.zeros((bsz, tmax), dtype=bool)
    for i, s in enumerate(sentences):
        ids[i, :lengths[i]] = s.ids
        valid[i, :lengths[i]] = True
    labels = np.array([s.label for s in sentences], dtype=np.int64)
    if indices is None:
        indices = np.arange(bsz, dtype=np.int64)
    return Batch(ids, valid, labels, lengths, np.asarray(indices), list(sentences))


def make_batches(data, batch_size: int, rng: Rng | None = None, shuffle: bool = True):
    """Yield padded batches; a seeded rng reshuffles the data each call."""
    if batch_size < 2:
        raise DataError(f"batch_size must be >= 2, got {batch_size}")
    order = np.arange(len(data))
    if shuffle:
        if rng is None:
            raise DataError("shuffling requires an rng")
        order = rng.permutation(len(data))
    for start in range(0, len(data), batch_size):
        idx = order[start:start + batch_size]
        if len(idx) == 0:
            continue
        yield collate([data[i] for i in idx], indices=idx)


# ---------------------------------------------------------------------------
# on-disk dataset format

def save_dataset(path, sentences):
    """One example per line: label, tab, space-joined tokens (UTF-8).

    Opinion positions, when present, go to a line-aligned ``.opinions``
    sidecar so the main file keeps the plain two-column format.
    """
    with open(path, "w", encoding="utf-8") as f:
        for s in sentences:
            f.write(f"{s.label}\t{' '.join(s.tokens)}\n")
    if any(s.opinion_positions is not None for s in sentences):
        with open(str(path) + ".opinions", "w", encoding="utf-8") as f:
            for s in sentences:
                pos = s.opinion_positions or ()
                f.write(",".join(str(p) for p in pos) + "\n")


def load_dataset(path) -> list[LabeledSentence]:
    import os
    opinions = None
    sidecar = str(path) + ".opinions"
    if os.path.exists(sidecar):
        with open(sidecar, encoding="utf-8") as f:
            opinions = [tuple(int(p) for p in line.strip().split(",") if p)
                        for line in f]
    out = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f):
            line = line.rstrip("\n")
            if not line:
                continue
            try:
                label_s, text = line.split("\t", 1)
                label = int(label_s)
            except ValueError:
                raise DataError(f"{path}:{lineno + 1}: malformed dataset line")
            tokens = tuple(text.split(" "))
            pos = opinions[lineno] if opinions is not None else None
            out.append(LabeledSentence(tokens, label, text, opinion_positions=pos))
    if not out:
        raise DataError(f"dataset file {path} is empty")
    return out

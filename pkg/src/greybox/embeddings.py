"""Word-embedding stores: loading, counter-fitting and neighbour queries.

A store is a vocab-aligned (V, d) float64 matrix. Counter-fitting reshapes
a store with a polarity lexicon so synonyms move closer and antonyms move
apart while every row is pulled back toward its original position. Frozen
stores are never written by optimizers.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Rng, Tensor
from .data import BOS, EOS, PAD, UNK, Vocab

RESERVED_IDS = (PAD, UNK, BOS, EOS)


class EmbeddingError(ValueError):
    pass


@dataclass
class EmbeddingStore:
    matrix: np.ndarray               # (V, d)
    flavor: str = "random"           # random | pretrained | counter_fitted
    frozen: bool = False

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    @property
    def vocab_size(self) -> int:
        return self.matrix.shape[0]

    def freeze(self) -> "EmbeddingStore":
        self.frozen = True
        return self

    def tensor(self) -> Tensor:
        """Wrap the matrix as a graph leaf; frozen stores take no gradient."""
        return Tensor(self.matrix, requires_grad=not self.frozen)


def random_store(vocab: Vocab, dim: int = 64, seed: int = 0) -> EmbeddingStore:
    rng = Rng(seed).child("embed-init")
    matrix = rng.uniform(size=(len(vocab), dim), low=-0.1, high=0.1)
    matrix[PAD] = 0.0
    return EmbeddingStore(matrix, flavor="random")


def load_embeddings(path, vocab: Vocab, dim: int | None = None,
                    seed: int = 0) -> EmbeddingStore:
    """Read ``token v1 ... vd`` lines; absent words get seeded random rows."""
    vectors: dict[str, np.ndarray] = {}
    file_dim = None
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f):
            parts = line.rstrip("\n").split(" ")
            if len(parts) < 2:
                continue
            token, vals = parts[0], parts[1:]
            if file_dim is None:
                file_dim = len(vals)
            elif len(vals) != file_dim:
                raise EmbeddingError(
                    f"{path}:{lineno + 1}: dimension {len(vals)} != {file_dim}")
            if token in vocab:
                vectors[token] = np.array([float(v) for v in vals])
    if file_dim is None:
        warnings.warn(f"embedding file {path} is empty; all rows random")
    if dim is None:
        dim = file_dim if file_dim is not None else 64
    elif file_dim is not None and file_dim != dim:
        raise EmbeddingError(f"requested dim {dim} but file has {file_dim}")
    store = random_store(vocab, dim=dim, seed=seed)
    for token, vec in vectors.items():
        store.matrix[vocab.token_to_id[token]] = vec
    store.matrix[PAD] = 0.0
    store.flavor = "pretrained" if vectors else "random"
    return store


def save_embeddings(store: EmbeddingStore, vocab: Vocab, path):
    with open(path, "w", encoding="utf-8") as f:
        for i, token in enumerate(vocab.id_to_token):
            vals = " ".join(repr(float(v)) for v in store.matrix[i])
            f.write(f"{token} {vals}\n")


# ---------------------------------------------------------------------------
# polarity lexicon

class PolarityLexicon:
    """Symmetric synonym/antonym pairs over token ids."""

    def __init__(self, synonym_pairs=(), antonym_pairs=()):
        self.synonym_pairs = {self._canon(p) for p in synonym_pairs}
        self.antonym_pairs = {self._canon(p) for p in antonym_pairs}
        if self.synonym_pairs & self.antonym_pairs:
            raise EmbeddingError("synonym and antonym pair sets must be disjoint")
        self._ant_index: dict[int, set[int]] = {}
        for a, b in self.antonym_pairs:
            self._ant_index.setdefault(a, set()).add(b)
            self._ant_index.setdefault(b, set()).add(a)

    @staticmethod
    def _canon(pair):
        a, b = int(pair[0]), int(pair[1])
        if a == b:
            raise EmbeddingError(f"self-pair {a} not allowed")
        return (a, b) if a < b else (b, a)

    def __len__(self):
        return len(self.synonym_pairs) + len(self.antonym_pairs)

    def antonyms_of(self, token_id: int) -> set[int]:
        return self._ant_index.get(int(token_id), set())

    @classmethod
    def from_word_sets(cls, vocab: Vocab, positive, negative) -> "PolarityLexicon":
        """Same-polarity words pair as synonyms, cross-polarity as antonyms."""
        pos = [vocab.token_to_id[w] for w in positive if w in vocab]
        neg = [vocab.token_to_id[w] for w in negative if w in vocab]
        syn = [(a, b) for group in (pos, neg)
               for i, a in enumerate(group) for b in group[i + 1:]]
        ant = [(a, b) for a in pos for b in neg]
        return cls(syn, ant)

    def save(self, vocab: Vocab, path):
        with open(path, "w", encoding="utf-8") as f:
            for kind, pairs in (("syn", sorted(self.synonym_pairs)),
                                ("ant", sorted(self.antonym_pairs))):
                for a, b in pairs:
                    f.write(f"{kind} {vocab.id_to_token[a]} {vocab.id_to_token[b]}\n")

    @classmethod
    def load(cls, vocab: Vocab, path) -> "PolarityLexicon":
        syn, ant, skipped = [], [], 0
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f):
                parts = line.split()
                if not parts:
                    continue
                if len(parts) != 3 or parts[0] not in ("syn", "ant"):
                    raise EmbeddingError(f"{path}:{lineno + 1}: bad lexicon line")
                kind, wa, wb = parts
                if wa not in vocab or wb not in vocab:
                    skipped += 1
                    continue
                pair = (vocab.token_to_id[wa], vocab.token_to_id[wb])
                (syn if kind == "syn" else ant).append(pair)
        if skipped:
            warnings.warn(f"lexicon {path}: skipped {skipped} out-of-vocab pairs")
        return cls(syn, ant)


# ---------------------------------------------------------------------------
# counter-fitting

def counter_fit(store: EmbeddingStore, lexicon: PolarityLexicon,
                epochs: int = 60, lr: float = 0.05,
                preservation: float = 0.2) -> EmbeddingStore:
    """Gradient-descend a three-term penalty over the embedding matrix.

    Per epoch (full batch): hinge on antonym cosines max(0, cos),
    hinge on synonym cosines max(0, 1 - cos), and a quadratic pull
    ``preservation * ||row - original||^2`` on every row.
    """
    if store.frozen:
        raise EmbeddingError("cannot counter-fit a frozen store")
    if len(lexicon) == 0:
        warnings.warn("counter_fit: empty lexicon, returning store unchanged")
        return EmbeddingStore(store.matrix.copy(), flavor=store.flavor)
    original = store.matrix.copy()
    matrix = Tensor(store.matrix.copy(), requires_grad=True)
    syn = np.array(sorted(lexicon.synonym_pairs), dtype=np.int64).reshape(-1, 2)
    ant = np.array(sorted(lexicon.antonym_pairs), dtype=np.int64).reshape(-1, 2)
    for _ in range(epochs):
        matrix.grad = None
        terms = []
        if len(ant):
            cos = ad.rowwise_cosine(ad.take_rows(matrix, ant[:, 0]),
                                    ad.take_rows(matrix, ant[:, 1]))
            terms.append(ad.sum_(ad.relu(cos)))
        if len(syn):
            cos = ad.rowwise_cosine(ad.take_rows(matrix, syn[:, 0]),
                                    ad.take_rows(matrix, syn[:, 1]))
            terms.append(ad.sum_(ad.relu(ad.sub(Tensor(1.0), cos))))
        drift = ad.sub(matrix, Tensor(original))
        terms.append(ad.mul(ad.sum_(ad.mul(drift, drift)), Tensor(preservation)))
        total = terms[0]
        for t in terms[1:]:
            total = ad.add(total, t)
        ad.backward(total)
        matrix.data -= lr * matrix.grad
    fitted = matrix.data
    fitted[PAD] = 0.0
    return EmbeddingStore(fitted, flavor="counter_fitted")


def mean_pair_cosine(store: EmbeddingStore, pairs) -> float:
    pairs = np.array(sorted(pairs), dtype=np.int64).reshape(-1, 2)
    if len(pairs) == 0:
        return 0.0
    u = store.matrix[pairs[:, 0]]
    v = store.matrix[pairs[:, 1]]
    nu = np.linalg.norm(u, axis=1)
    nv = np.linalg.norm(v, axis=1)
    return float((np.sum(u * v, axis=1) / np.maximum(nu * nv, 1e-12)).mean())


# ---------------------------------------------------------------------------
# neighbour queries

def nearest_neighbors(store: EmbeddingStore, token_id: int, k: int,
                      exclude_antonyms: bool = False,
                      lexicon: PolarityLexicon | None = None) -> list[int]:
    """Top-k token ids by cosine to the query row, reserved ids excluded."""
    if k < 1:
        raise EmbeddingError(f"k must be >= 1, got {k}")
    if exclude_antonyms and lexicon is None:
        raise EmbeddingError("exclude_antonyms requires a lexicon")
    q = store.matrix[token_id]
    norms = np.linalg.norm(store.matrix, axis=1)
    qn = max(np.linalg.norm(q), 1e-12)
    cos = store.matrix @ q / (np.maximum(norms, 1e-12) * qn)
    banned = set(RESERVED_IDS) | {int(token_id)}
    if exclude_antonyms:
        banned |= lexicon.antonyms_of(token_id)
    order = np.lexsort((np.arange(len(cos)), -cos))
    out = [int(i) for i in order if int(i) not in banned]
    return out[:k]

"""Vocabulary, parallel-corpus handling, synthetic task generation, batching.

Tokenization is whitespace splitting throughout; corpora are expected
pre-tokenized, one sentence per line. Synthetic tasks exercise the two
alignment behaviors the model family targets: a permutation rule reorders
the source (distortion) and a fertility rule maps each source token to
0, 1 or 2 target copies.
"""

import collections
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError

PAD_ID, BOS_ID, EOS_ID, UNK_ID = 0, 1, 2, 3
RESERVED = ("<pad>", "<s>", "</s>", "<unk>")

PERMUTATION_RULES = ("identity", "reverse")
FERTILITY_RULES = ("identity", "doubling")


@dataclass
class Vocab:
    """Bidirectional token/id map with fixed reserved ids 0..3."""

    tokens: list            # id -> token, reserved entries first
    index: dict             # token -> id
    max_size: int
    coverage: float = 1.0   # fraction of training occurrences kept

    def __len__(self):
        return len(self.tokens)

    def id(self, token):
        return self.index.get(token, UNK_ID)

    def token(self, token_id):
        if not 0 <= token_id < len(self.tokens):
            raise InputError(f"token id {token_id} outside vocabulary of size {len(self.tokens)}")
        return self.tokens[token_id]


def build_vocab(sentences, max_size):
    """Keep the max_size-4 most frequent tokens, ties by first occurrence.

    Returns a Vocab whose ``coverage`` is the kept fraction of token
    occurrences.
    """
    counts = collections.Counter()
    first_seen = {}
    total = 0
    for sent in sentences:
        for tok in sent:
            counts[tok] += 1
            if tok not in first_seen:
                first_seen[tok] = total
            total += 1
    if total == 0:
        raise InputError("build_vocab: empty corpus")
    ranked = sorted(counts, key=lambda t: (-counts[t], first_seen[t]))
    kept = ranked[: max(0, max_size - len(RESERVED))]
    tokens = list(RESERVED) + kept
    index = {t: i for i, t in enumerate(tokens)}
    coverage = sum(counts[t] for t in kept) / total
    return Vocab(tokens=tokens, index=index, max_size=max_size, coverage=coverage)


def encode_sentence(tokens, vocab, add_markers=False):
    """Token ids with UNK for out-of-vocabulary words; optional BOS/EOS."""
    ids = [vocab.id(t) for t in tokens]
    if add_markers:
        return [BOS_ID] + ids + [EOS_ID]
    return ids


def decode_sentence(ids, vocab):
    """Inverse of encode_sentence; drops PAD/BOS/EOS, keeps the UNK surface
    form, and rejects ids outside the vocabulary."""
    out = []
    for i in ids:
        tok = vocab.token(i)  # raises InputError on unknown id
        if i in (PAD_ID, BOS_ID, EOS_ID):
            continue
        out.append(tok)
    return out


@dataclass
class SentencePair:
    src_ids: list
    tgt_ids: list
    src_tokens: list
    tgt_tokens: list

    def __post_init__(self):
        if not self.src_ids or not self.tgt_ids:
            raise InputError("SentencePair: neither side may be empty")


# ---------------------------------------------------------------------------
# synthetic tasks


@dataclass
class SynthTaskSpec:
    """Deterministic toy translation task.

    permutation reorders the source; fertility maps each (permuted) token to
    0, 1 or 2 copies by its index class. The target is a pure function of
    the source given the rules.
    """

    vocab_size: int = 20
    min_len: int = 3
    max_len: int = 10
    permutation: str = "identity"
    fertility: str = "identity"
    seed: int = 0

    def __post_init__(self):
        if self.max_len < self.min_len:
            raise InputError(
                f"SynthTaskSpec: max_len {self.max_len} < min_len {self.min_len}")
        if self.permutation not in PERMUTATION_RULES:
            raise InputError(f"unknown permutation rule {self.permutation!r}")
        if self.fertility not in FERTILITY_RULES:
            raise InputError(f"unknown fertility rule {self.fertility!r}")
        if self.vocab_size < 1:
            raise InputError("SynthTaskSpec: vocab_size must be positive")

    def surface(self, k):
        return f"w{k}"

    def fertility_of(self, token):
        """Copies produced by one source token: 1/2/0 by index mod 3."""
        if self.fertility == "identity":
            return 1
        k = int(token[1:])
        return (1, 2, 0)[k % 3]

    def apply_rules(self, src_tokens):
        """Reference expansion of a source sentence; also the test oracle."""
        ordered = list(reversed(src_tokens)) if self.permutation == "reverse" else list(src_tokens)
        out = []
        for tok in ordered:
            out.extend([tok] * self.fertility_of(tok))
        return out


def synth_vocab(spec):
    """Full deterministic vocabulary for a synthetic task (no OOV)."""
    tokens = [spec.surface(k) for k in range(spec.vocab_size)]
    return build_vocab([tokens], max_size=spec.vocab_size + len(RESERVED))


def gen_synthetic(spec, n, vocab=None):
    """n reproducible sentence pairs respecting the spec's rules.

    Sources are uniform over the task vocabulary; a draw whose target would
    be empty (possible with the doubling rule) is resampled.
    """
    if n < 1:
        raise InputError("gen_synthetic: n must be >= 1")
    vocab = vocab or synth_vocab(spec)
    rng = np.random.default_rng(spec.seed)
    pairs = []
    while len(pairs) < n:
        length = int(rng.integers(spec.min_len, spec.max_len + 1))
        src = [spec.surface(int(k)) for k in rng.integers(0, spec.vocab_size, size=length)]
        tgt = spec.apply_rules(src)
        if not tgt:
            continue
        pairs.append(SentencePair(
            src_ids=encode_sentence(src, vocab),
            tgt_ids=encode_sentence(tgt, vocab),
            src_tokens=src,
            tgt_tokens=tgt,
        ))
    return pairs


# ---------------------------------------------------------------------------
# batching


@dataclass
class Batch:
    """Padded id matrices plus lengths and 0/1 pad masks."""

    src: np.ndarray        # (B, max_src) int64, PAD-filled
    tgt: np.ndarray        # (B, max_tgt)
    src_lens: np.ndarray   # (B,)
    tgt_lens: np.ndarray
    src_mask: np.ndarray   # (B, max_src) 1 where real token
    tgt_mask: np.ndarray

    def __len__(self):
        return self.src.shape[0]

    def pair_ids(self, i):
        """Unpadded (src_ids, tgt_ids) recovered from the masked matrices."""
        return (
            self.src[i, : self.src_lens[i]].tolist(),
            self.tgt[i, : self.tgt_lens[i]].tolist(),
        )


def _pack(rows, width):
    mat = np.full((len(rows), width), PAD_ID, dtype=np.int64)
    mask = np.zeros((len(rows), width), dtype=np.int64)
    for i, ids in enumerate(rows):
        mat[i, : len(ids)] = ids
        mask[i, : len(ids)] = 1
    return mat, mask


def make_batches(pairs, batch_size, max_len=50, shuffle_seed=0, sort_window=12):
    """Length-sorted batches over the pairs surviving the length filter.

    A pair is dropped when either side exceeds max_len. After a seeded
    shuffle, pairs are sorted inside windows of sort_window*batch_size so
    consecutive batches have similar lengths and little padding, without
    fixing the global order across epochs.
    """
    if batch_size < 1:
        raise InputError("make_batches: batch_size must be >= 1")
    kept = [p for p in pairs if len(p.src_ids) <= max_len and len(p.tgt_ids) <= max_len]
    if not kept:
        raise InputError("make_batches: every pair exceeded the length filter")
    order = np.random.default_rng(shuffle_seed).permutation(len(kept))
    shuffled = [kept[i] for i in order]

    window = max(1, sort_window) * batch_size
    batches = []
    for w0 in range(0, len(shuffled), window):
        chunk = sorted(
            shuffled[w0 : w0 + window],
            key=lambda p: (len(p.src_ids), len(p.tgt_ids)),
        )
        for b0 in range(0, len(chunk), batch_size):
            group = chunk[b0 : b0 + batch_size]
            src_rows = [p.src_ids for p in group]
            tgt_rows = [p.tgt_ids for p in group]
            src, src_mask = _pack(src_rows, max(len(r) for r in src_rows))
            tgt, tgt_mask = _pack(tgt_rows, max(len(r) for r in tgt_rows))
            batches.append(Batch(
                src=src, tgt=tgt,
                src_lens=np.array([len(r) for r in src_rows], dtype=np.int64),
                tgt_lens=np.array([len(r) for r in tgt_rows], dtype=np.int64),
                src_mask=src_mask, tgt_mask=tgt_mask,
            ))
    return batches


# ---------------------------------------------------------------------------
# file I/O


def load_parallel(src_path, tgt_path, vocab_src=None, vocab_tgt=None):
    """Aligned token sentences from two text files.

    Returns raw (src_tokens, tgt_tokens) lists; pass vocabs to get
    SentencePairs instead.
    """
    with open(src_path, encoding="utf-8") as f:
        src_lines = [line.split() for line in f.read().splitlines()]
    with open(tgt_path, encoding="utf-8") as f:
        tgt_lines = [line.split() for line in f.read().splitlines()]
    if len(src_lines) != len(tgt_lines):
        raise InputError(
            f"parallel files differ in length: {len(src_lines)} vs {len(tgt_lines)}")
    rows = [(s, t) for s, t in zip(src_lines, tgt_lines) if s and t]
    if vocab_src is None:
        return rows
    return [
        SentencePair(
            src_ids=encode_sentence(s, vocab_src),
            tgt_ids=encode_sentence(t, vocab_tgt),
            src_tokens=s,
            tgt_tokens=t,
        )
        for s, t in rows
    ]


def write_parallel(rows, src_path, tgt_path):
    with open(src_path, "w", encoding="utf-8") as f:
        f.write("".join(" ".join(s) + "\n" for s, _ in rows))
    with open(tgt_path, "w", encoding="utf-8") as f:
        f.write("".join(" ".join(t) + "\n" for _, t in rows))

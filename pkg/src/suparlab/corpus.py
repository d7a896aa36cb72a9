"""Byte-level corpus loading, batching, and the bundled synthetic text.

Training operates on raw bytes (vocab 256). The bundled corpus is ~2 MB of
deterministic synthetic prose: a Zipf-distributed syllabic vocabulary arranged
into sentences and paragraphs with punctuation and occasional numbers. It is
regenerable bit-for-bit from its seed, which keeps the whole pipeline
reproducible and licensing-free.

Batches are contiguous windows at uniform random offsets into the train
split; the window sampler is seeded per run so different sweep cells can see
the identical batch order. The last 5% of bytes form the validation split,
evaluated on evenly spaced windows (no randomness).
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError

_DATA_DOMAIN = 0x64617461  # "data"

BUILTIN_CORPUS = "builtin"
_BUILTIN_FILENAME = "tinycorpus.txt"
_BUILTIN_SEED = 20240117
_BUILTIN_SIZE = 2_500_000

VAL_FRACTION = 0.05


# ---------------------------------------------------------------------------
# synthetic corpus generation

_CONSONANTS = list("bcdfghjklmnprstvwz")
_VOWELS = list("aeiou")


def _make_vocabulary(rng: np.random.Generator, n_words: int) -> list[str]:
    words = set()
    out = []
    while len(out) < n_words:
        n_syll = int(rng.integers(1, 5))
        syllables = []
        for _ in range(n_syll):
            c = _CONSONANTS[int(rng.integers(len(_CONSONANTS)))]
            v = _VOWELS[int(rng.integers(len(_VOWELS)))]
            syllables.append(c + v)
            if rng.random() < 0.25:
                syllables.append(_CONSONANTS[int(rng.integers(len(_CONSONANTS)))])
        w = "".join(syllables)
        if w not in words:
            words.add(w)
            out.append(w)
    return out


def generate_corpus_text(n_bytes: int, seed: int) -> bytes:
    """Deterministic synthetic prose of at least n_bytes bytes."""
    rng = np.random.default_rng(np.random.SeedSequence((_DATA_DOMAIN, seed)))
    vocab = _make_vocabulary(rng, 4096)
    # Zipf-ish weights over a shuffled vocabulary
    ranks = np.arange(1, len(vocab) + 1, dtype=np.float64)
    weights = 1.0 / ranks ** 1.15
    weights /= weights.sum()

    pieces: list[str] = []
    total = 0
    while total < n_bytes:
        n_sentences = int(rng.integers(4, 10))
        sentences = []
        for _ in range(n_sentences):
            n_words = int(rng.integers(4, 15))
            idx = rng.choice(len(vocab), size=n_words, p=weights)
            words = [vocab[i] for i in idx]
            for j in range(n_words):
                r = rng.random()
                if r < 0.04:
                    words[j] = str(int(rng.integers(0, 10 ** int(rng.integers(1, 5)))))
                elif r < 0.07:
                    words[j] = words[j].capitalize()
            words[0] = words[0].capitalize()
            end = "." if rng.random() < 0.8 else ("?" if rng.random() < 0.5 else "!")
            if n_words > 6 and rng.random() < 0.3:
                cut = int(rng.integers(2, n_words - 2))
                words[cut] = words[cut] + ","
            sentences.append(" ".join(words) + end)
        para = " ".join(sentences) + "\n\n"
        pieces.append(para)
        total += len(para)
    return "".join(pieces).encode("ascii")


def write_builtin_corpus(path: Path) -> None:
    path.write_bytes(generate_corpus_text(_BUILTIN_SIZE, _BUILTIN_SEED))


# ---------------------------------------------------------------------------
# loading and batching


@dataclass
class Corpus:
    train_tokens: np.ndarray  # uint8
    val_tokens: np.ndarray    # uint8
    source: str

    @property
    def n_train(self) -> int:
        return len(self.train_tokens)


def load_corpus(source: str = BUILTIN_CORPUS) -> Corpus:
    """Load bytes from a file path or the bundled corpus; split 95/5."""
    if source == BUILTIN_CORPUS:
        res = importlib.resources.files("suparlab").joinpath("data", _BUILTIN_FILENAME)
        raw = res.read_bytes()
    else:
        p = Path(source)
        if not p.is_file():
            raise DomainError(f"corpus file not found: {source}")
        raw = p.read_bytes()
    tokens = np.frombuffer(raw, dtype=np.uint8)
    if len(tokens) < 10_000:
        raise DomainError(f"corpus too small ({len(tokens)} bytes); need >= 10000")
    split = int(len(tokens) * (1.0 - VAL_FRACTION))
    return Corpus(train_tokens=tokens[:split].copy(),
                  val_tokens=tokens[split:].copy(), source=source)


class BatchSampler:
    """Uniform random contiguous windows over the train split.

    Deterministic in (data_seed, seed_index): sweep cells created with the
    same pair see the identical batch stream regardless of scheme/width.
    """

    def __init__(self, corpus: Corpus, batch_size: int, seq_len: int,
                 data_seed: int, seed_index: int = 0):
        if corpus.n_train < seq_len + 2:
            raise DomainError("train split shorter than one window")
        self.corpus = corpus
        self.batch_size = batch_size
        self.seq_len = seq_len
        ss = np.random.SeedSequence((_DATA_DOMAIN, data_seed, seed_index))
        self.rng = np.random.default_rng(ss)

    def next_batch(self) -> tuple[np.ndarray, np.ndarray]:
        high = self.corpus.n_train - self.seq_len - 1
        starts = self.rng.integers(0, high, size=self.batch_size)
        idx = starts[:, None] + np.arange(self.seq_len + 1)[None, :]
        window = self.corpus.train_tokens[idx]
        return window[:, :-1].astype(np.int64), window[:, 1:].astype(np.int64)


def validation_batches(corpus: Corpus, batch_size: int, seq_len: int,
                       n_batches: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Evenly spaced windows over the validation split (deterministic)."""
    n_windows = batch_size * n_batches
    high = len(corpus.val_tokens) - seq_len - 1
    if high < 1:
        raise DomainError("validation split shorter than one window")
    starts = np.linspace(0, high, num=n_windows, dtype=np.int64)
    idx = starts[:, None] + np.arange(seq_len + 1)[None, :]
    window = corpus.val_tokens[idx]
    tokens = window[:, :-1].astype(np.int64)
    targets = window[:, 1:].astype(np.int64)
    return [(tokens[i * batch_size:(i + 1) * batch_size],
             targets[i * batch_size:(i + 1) * batch_size]) for i in range(n_batches)]

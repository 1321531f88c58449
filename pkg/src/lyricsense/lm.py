"""Conditional language-model contract plus the add-k n-gram reference model.

Decoders consume anything satisfying :class:`LanguageModel`: a vocabulary
and a deterministic ``next(context) -> NextTokenDistribution`` step. The
bundled implementation is a word-level add-k smoothed n-gram model, small
enough that every probability it produces can be checked by hand; larger
models are reached over the wire protocol in :mod:`lyricsense.wire`.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Protocol, Sequence, runtime_checkable

import numpy as np

BOS = "<bos>"
EOS = "<eos>"
UNK = "<unk>"

# Lowercased words (inner apostrophes kept) or single punctuation marks.
_TOKEN_RE = re.compile(r"\w+(?:'\w+)*|[^\w\s]")


def tokenize_lm(text: str) -> list[str]:
    """Word-level tokenizer for the reference model."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class Vocabulary:
    """Bijection between token strings and dense ids, with reserved markers."""

    tokens: tuple[str, ...]
    bos_id: int
    eos_id: int
    unk_id: int

    def __post_init__(self) -> None:
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("vocabulary tokens must be distinct")
        reserved = {self.bos_id, self.eos_id, self.unk_id}
        if len(reserved) != 3 or any(not 0 <= i < len(self.tokens) for i in reserved):
            raise ValueError("reserved ids must be three distinct in-range ids")
        object.__setattr__(self, "_ids", {tok: i for i, tok in enumerate(self.tokens)})

    def __len__(self) -> int:
        return len(self.tokens)

    def id_of(self, token: str) -> int:
        return self._ids.get(token, self.unk_id)

    def encode(self, tokens: Iterable[str]) -> list[int]:
        ids = self._ids
        unk = self.unk_id
        return [ids.get(tok, unk) for tok in tokens]

    def encode_text(self, text: str) -> list[int]:
        return self.encode(tokenize_lm(text))

    def decode(self, ids: Sequence[int]) -> list[str]:
        return [self.tokens[i] for i in ids]

    def decode_text(self, ids: Sequence[int]) -> str:
        return " ".join(self.decode(ids))

    @classmethod
    def build(cls, content_tokens: Sequence[str]) -> "Vocabulary":
        """Reserved markers first, then the given content tokens."""
        return cls(tokens=(BOS, EOS, UNK, *content_tokens), bos_id=0, eos_id=1, unk_id=2)


class NextTokenDistribution:
    """Natural-log next-token probabilities over the whole vocabulary."""

    __slots__ = ("log_probs",)

    def __init__(self, log_probs: np.ndarray) -> None:
        self.log_probs = log_probs

    def validate(self, tolerance: float = 1e-6) -> None:
        lp = self.log_probs
        if np.isnan(lp).any() or (lp == np.inf).any():
            raise ValueError("log probabilities must be finite or -inf")
        total = float(np.exp(lp).sum())
        if abs(total - 1.0) > tolerance:
            raise ValueError(f"distribution sums to {total}, not 1")


@runtime_checkable
class LanguageModel(Protocol):
    """Behavioral contract the decoders rely on.

    ``next`` must be deterministic: the same context always yields the
    same distribution. Implementations must be safe for concurrent
    read-only use once constructed.
    """

    def vocabulary(self) -> Vocabulary: ...

    def next(self, context: Sequence[int]) -> NextTokenDistribution: ...


class NGramModel:
    """Add-k smoothed n-gram model over word-level tokens.

    P(t | context) = (count(context, t) + k) / (count(context) + k * |V|),
    with the context truncated to the last n-1 ids and left-padded with
    BOS. Unseen contexts therefore give the uniform distribution.
    """

    def __init__(
        self,
        order: int,
        k: float,
        vocab: Vocabulary,
        counts: dict[tuple[int, ...], Counter],
    ) -> None:
        if order < 1:
            raise ValueError("order must be >= 1")
        if k <= 0:
            raise ValueError("smoothing constant k must be positive")
        self.order = order
        self.k = k
        self._vocab = vocab
        self._counts = counts
        self._totals = {ctx: sum(counter.values()) for ctx, counter in counts.items()}
        self._cache: dict[tuple[int, ...], np.ndarray] = {}

    def vocabulary(self) -> Vocabulary:
        return self._vocab

    def next(self, context: Sequence[int]) -> NextTokenDistribution:
        size = len(self._vocab)
        width = self.order - 1
        tail = tuple(context[-width:]) if width else ()
        for token_id in tail:
            if not 0 <= token_id < size:
                raise ValueError(f"token id {token_id} out of range for |V|={size}")
        if len(tail) < width:
            tail = (self._vocab.bos_id,) * (width - len(tail)) + tail
        key = tail
        cached = self._cache.get(key)
        if cached is None:
            counter = self._counts.get(key)
            total = self._totals.get(key, 0)
            denom = math.log(total + self.k * size)
            cached = np.full(size, math.log(self.k) - denom)
            if counter:
                for token_id, count in counter.items():
                    cached[token_id] = math.log(count + self.k) - denom
            cached.setflags(write=False)
            self._cache[key] = cached
        return NextTokenDistribution(cached)

    def to_dict(self) -> dict:
        vocab = self._vocab
        return {
            "format": "lyricsense-ngram",
            "version": 1,
            "order": self.order,
            "k": self.k,
            "tokens": list(vocab.tokens),
            "bos_id": vocab.bos_id,
            "eos_id": vocab.eos_id,
            "unk_id": vocab.unk_id,
            "counts": {
                " ".join(map(str, ctx)): {str(t): c for t, c in sorted(counter.items())}
                for ctx, counter in sorted(self._counts.items())
            },
        }

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, ensure_ascii=False, sort_keys=True)

    @classmethod
    def from_dict(cls, obj: dict) -> "NGramModel":
        if obj.get("format") != "lyricsense-ngram" or obj.get("version") != 1:
            raise ValueError("not a recognized model file")
        vocab = Vocabulary(
            tokens=tuple(obj["tokens"]),
            bos_id=obj["bos_id"],
            eos_id=obj["eos_id"],
            unk_id=obj["unk_id"],
        )
        counts = {
            tuple(int(x) for x in ctx.split()) if ctx else (): Counter(
                {int(t): c for t, c in counter.items()}
            )
            for ctx, counter in obj["counts"].items()
        }
        return cls(order=obj["order"], k=obj["k"], vocab=vocab, counts=counts)

    @classmethod
    def load(cls, path: str) -> "NGramModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def fit_ngram(texts: Iterable[str], order: int, k: float = 0.1, vocab_cap: int = 5000) -> NGramModel:
    """Fit an add-k n-gram model on raw texts.

    The vocabulary keeps the ``vocab_cap`` most frequent tokens (ties by
    alphabetical order) plus the reserved markers; everything else maps
    to UNK. Each text is bracketed with BOS padding and a final EOS so
    decoders can stop naturally.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    if k <= 0:
        raise ValueError("smoothing constant k must be positive")
    if vocab_cap < 3:
        raise ValueError("vocab_cap must be >= 3")

    tokenized = [tokenize_lm(text) for text in texts]
    tokenized = [toks for toks in tokenized if toks]
    if not tokenized:
        raise ValueError("no training text")

    frequencies = Counter(tok for toks in tokenized for tok in toks)
    kept = sorted(frequencies.items(), key=lambda item: (-item[1], item[0]))[:vocab_cap]
    vocab = Vocabulary.build([tok for tok, _ in kept])

    counts: dict[tuple[int, ...], Counter] = {}
    pad = (vocab.bos_id,) * (order - 1)
    for toks in tokenized:
        ids = (*pad, *vocab.encode(toks), vocab.eos_id)
        for t in range(order - 1, len(ids)):
            ctx = ids[t - order + 1 : t]
            counter = counts.get(ctx)
            if counter is None:
                counter = counts[ctx] = Counter()
            counter[ids[t]] += 1
    return NGramModel(order=order, k=k, vocab=vocab, counts=counts)


def sequence_log_prob(model: LanguageModel, ids: Sequence[int]) -> float:
    """Chain-rule log probability sum(t) log P(ids[t] | ids[:t])."""
    if len(ids) == 0:
        raise ValueError("sequence must be non-empty")
    total = 0.0
    for t, token_id in enumerate(ids):
        dist = model.next(ids[:t])
        if not 0 <= token_id < len(dist.log_probs):
            raise ValueError(f"token id {token_id} out of range")
        total += float(dist.log_probs[token_id])
    return total

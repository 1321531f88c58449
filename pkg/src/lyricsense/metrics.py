"""Generation quality metrics: unigram ROUGE, bag-of-words cosine, total score.

The total score rewards similarity to the gold annotation and penalizes
copying the song lyrics:

    raw   = alpha1 * rouge + alpha2 * cos(pred, annotation) - alpha3 * cos(pred, lyrics)
    score = max(0, raw) / (alpha1 + alpha2)

The division by ``alpha1 + alpha2`` (the largest achievable raw value)
normalizes the score to [0, 1].
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass


@dataclass(frozen=True)
class TotalScoreWeights:
    alpha1: float = 0.5
    alpha2: float = 0.5
    alpha3: float = 0.5

    def __post_init__(self) -> None:
        for name in ("alpha1", "alpha2", "alpha3"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and non-negative, got {value}")
        if self.alpha1 + self.alpha2 == 0:
            raise ValueError("alpha1 + alpha2 must be positive")


@dataclass(frozen=True)
class MetricReport:
    rouge1: float
    cos_pred_annotation: float
    cos_pred_lyrics: float
    total_score: float

    def to_dict(self) -> dict[str, float]:
        return {
            "rouge1": self.rouge1,
            "cos_pred_annotation": self.cos_pred_annotation,
            "cos_pred_lyrics": self.cos_pred_lyrics,
            "total_score": self.total_score,
        }


def tokenize_for_metrics(text: str) -> list[str]:
    """Lowercase, split on whitespace, strip edge non-alphanumerics.

    Inner punctuation survives ("don't" stays one token); tokens that are
    all punctuation are dropped.
    """
    tokens = []
    for raw in text.lower().split():
        start, end = 0, len(raw)
        while start < end and not raw[start].isalnum():
            start += 1
        while end > start and not raw[end - 1].isalnum():
            end -= 1
        if start < end:
            tokens.append(raw[start:end])
    return tokens


def bag_of_words(text: str) -> Counter:
    return Counter(tokenize_for_metrics(text))


def rouge1(prediction: str, reference: str) -> float:
    """Unigram F1 with clipped counts.

    overlap = sum over words of min(pred count, ref count);
    P = overlap/|pred|, R = overlap/|ref|, F1 = 2PR/(P+R). Two empty
    texts score 1.0; exactly one empty scores 0.0.
    """
    pred = bag_of_words(prediction)
    ref = bag_of_words(reference)
    pred_total = sum(pred.values())
    ref_total = sum(ref.values())
    if pred_total == 0 and ref_total == 0:
        return 1.0
    if pred_total == 0 or ref_total == 0:
        return 0.0
    overlap = sum(min(count, ref[word]) for word, count in pred.items())
    if overlap == 0:
        return 0.0
    precision = overlap / pred_total
    recall = overlap / ref_total
    return 2 * precision * recall / (precision + recall)


def cosine_bow(a: str, b: str) -> float:
    """Cosine of the word-count vectors of two texts; 0.0 if either is empty.

    The result is clamped into [0, 1]; with integer counts the true value
    always lies there, so only float rounding is ever clipped. Identical
    texts score exactly 1.0.
    """
    bag_a = bag_of_words(a)
    bag_b = bag_of_words(b)
    if not bag_a or not bag_b:
        return 0.0
    dot = sum(count * bag_b[word] for word, count in bag_a.items())
    norm_sq_a = sum(c * c for c in bag_a.values())
    norm_sq_b = sum(c * c for c in bag_b.values())
    value = dot / math.sqrt(norm_sq_a * norm_sq_b)
    return min(1.0, max(0.0, value))


def total_score(
    rouge: float,
    cs_pred_annotation: float,
    cs_pred_lyrics: float,
    weights: TotalScoreWeights = TotalScoreWeights(),
) -> float:
    """Clamped, normalized weighted combination of the three metrics."""
    for name, value in (
        ("rouge", rouge),
        ("cs_pred_annotation", cs_pred_annotation),
        ("cs_pred_lyrics", cs_pred_lyrics),
    ):
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"{name} must be in [0, 1], got {value}")
    raw = (
        weights.alpha1 * rouge
        + weights.alpha2 * cs_pred_annotation
        - weights.alpha3 * cs_pred_lyrics
    )
    return max(0.0, raw) / (weights.alpha1 + weights.alpha2)


def evaluate(
    prediction: str,
    annotation: str,
    lyrics: str,
    weights: TotalScoreWeights = TotalScoreWeights(),
) -> MetricReport:
    """Full metric report for one generated meaning."""
    r = rouge1(prediction, annotation)
    cs_pa = cosine_bow(prediction, annotation)
    cs_pl = cosine_bow(prediction, lyrics)
    return MetricReport(
        rouge1=r,
        cos_pred_annotation=cs_pa,
        cos_pred_lyrics=cs_pl,
        total_score=total_score(r, cs_pa, cs_pl, weights),
    )

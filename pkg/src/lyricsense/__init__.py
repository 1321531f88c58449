"""Toolkit for generating and evaluating meanings of song lyrics.

Pipeline pieces: corpus ingestion/cleaning/statistics, prompt templates,
a pluggable language-model interface (reference n-gram model plus a wire
protocol for external servers), five decoding strategies, a metric suite,
and an experiment-grid harness with a CLI front end.
"""

__version__ = "0.1.0"

from .corpus import (  # noqa: E402
    AnnotatedFragment,
    CorpusStats,
    LoadResult,
    Sample,
    SongRecord,
    clean_record,
    compute_stats,
    flatten,
    load_corpus,
    split,
)
from .decoding import DecodeConfig, FinishReason, Generation, Strategy, decode  # noqa: E402
from .lm import NGramModel, Vocabulary, fit_ngram, sequence_log_prob  # noqa: E402
from .metrics import MetricReport, TotalScoreWeights, cosine_bow, evaluate, rouge1, total_score  # noqa: E402
from .prompts import PromptKind, PromptSpec, RenderedPrompt, extract_generation, render, render_with_target  # noqa: E402

__all__ = [
    "__version__",
    "AnnotatedFragment",
    "CorpusStats",
    "DecodeConfig",
    "FinishReason",
    "Generation",
    "LoadResult",
    "MetricReport",
    "NGramModel",
    "PromptKind",
    "PromptSpec",
    "RenderedPrompt",
    "Sample",
    "SongRecord",
    "Strategy",
    "TotalScoreWeights",
    "Vocabulary",
    "clean_record",
    "compute_stats",
    "cosine_bow",
    "decode",
    "evaluate",
    "extract_generation",
    "fit_ngram",
    "flatten",
    "load_corpus",
    "render",
    "render_with_target",
    "rouge1",
    "sequence_log_prob",
    "split",
    "total_score",
]

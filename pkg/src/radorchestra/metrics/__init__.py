"""
Report generation metrics: BLEU, ROUGE-1/2/L, METEOR and greedy BERTScore
"""

from .bertscore import bertscore_greedy
from .evaluate import METRIC_KEYS, GroundingStats, MetricReport, evaluate_corpus, load_references
from .lexical import TokenSequence, bleu, corpus_bleu, meteor, rouge_l, rouge_n

__all__ = [
    "METRIC_KEYS",
    "GroundingStats",
    "MetricReport",
    "TokenSequence",
    "bertscore_greedy",
    "bleu",
    "corpus_bleu",
    "evaluate_corpus",
    "load_references",
    "meteor",
    "rouge_l",
    "rouge_n",
]

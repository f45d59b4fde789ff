"""
Lexical overlap metrics: BLEU, ROUGE-N, ROUGE-L and METEOR

All metrics share one tokenizer (lowercase, split on non-alphanumerics).
BLEU replaces zero n-gram precisions with EPSILON; corpus BLEU pools
clipped counts and lengths over all pairs. METEOR aligns exact matches
first, then Porter-stem matches, each hypothesis token taking the leftmost
free reference token.
"""

import math
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, List, Sequence, Tuple, Union

from nltk.stem.porter import PorterStemmer

from ..common.errors import EmptyInput
from ..common.text import tokenize

EPSILON = 1e-9
STEMMER_ID = "porter-original"

_stemmer = PorterStemmer(mode=PorterStemmer.ORIGINAL_ALGORITHM)


@dataclass(frozen=True)
class TokenSequence:
    tokens: Tuple[str, ...]

    @classmethod
    def of(cls, text: str) -> "TokenSequence":
        return cls(tuple(tokenize(text)))

    def __len__(self) -> int:
        return len(self.tokens)


TokensLike = Union[TokenSequence, Sequence[str], str]


def as_tokens(value: TokensLike) -> Tuple[str, ...]:
    if isinstance(value, TokenSequence):
        return value.tokens
    if isinstance(value, str):
        return tuple(tokenize(value))
    return tuple(value)


def _require(hypothesis: Tuple[str, ...], reference: Tuple[str, ...]) -> None:
    if not hypothesis:
        raise EmptyInput("hypothesis")
    if not reference:
        raise EmptyInput("reference")


def ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def clipped_overlap(hypothesis: Sequence[str], reference: Sequence[str], n: int) -> Tuple[int, int, int]:
    """(clipped matches, hypothesis n-grams, reference n-grams)"""
    hyp = ngrams(hypothesis, n)
    ref = ngrams(reference, n)
    overlap = sum(min(count, ref[gram]) for gram, count in hyp.items())
    return overlap, sum(hyp.values()), sum(ref.values())


def _f1(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def _brevity_penalty(hyp_len: int, ref_len: int) -> float:
    if hyp_len > ref_len:
        return 1.0
    return math.exp(1 - ref_len / hyp_len)


def _bleu_from_counts(matches: List[int], totals: List[int], hyp_len: int, ref_len: int) -> float:
    max_n = len(matches)
    log_sum = 0.0
    for match, total in zip(matches, totals):
        precision = match / total if total and match else EPSILON
        log_sum += math.log(precision) / max_n
    return min(1.0, _brevity_penalty(hyp_len, ref_len) * math.exp(log_sum))


def bleu(hypothesis: TokensLike, reference: TokensLike, max_n: int = 4) -> float:
    """Sentence BLEU with uniform weights up to max_n"""
    hyp, ref = as_tokens(hypothesis), as_tokens(reference)
    _require(hyp, ref)
    matches, totals = [], []
    for n in range(1, max_n + 1):
        match, total, _ = clipped_overlap(hyp, ref, n)
        matches.append(match)
        totals.append(total)
    return _bleu_from_counts(matches, totals, len(hyp), len(ref))


def corpus_bleu(pairs: Iterable[Tuple[TokensLike, TokensLike]], max_n: int = 4) -> float:
    """BLEU over pooled clipped counts and pooled lengths"""
    matches = [0] * max_n
    totals = [0] * max_n
    hyp_len = ref_len = 0
    for hypothesis, reference in pairs:
        hyp, ref = as_tokens(hypothesis), as_tokens(reference)
        _require(hyp, ref)
        hyp_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, max_n + 1):
            match, total, _ = clipped_overlap(hyp, ref, n)
            matches[n - 1] += match
            totals[n - 1] += total
    if hyp_len == 0:
        raise EmptyInput("corpus")
    return _bleu_from_counts(matches, totals, hyp_len, ref_len)


def rouge_n(hypothesis: TokensLike, reference: TokensLike, n: int) -> Tuple[float, float, float]:
    hyp, ref = as_tokens(hypothesis), as_tokens(reference)
    _require(hyp, ref)
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    overlap, hyp_total, ref_total = clipped_overlap(hyp, ref, n)
    precision = overlap / hyp_total if hyp_total else 0.0
    recall = overlap / ref_total if ref_total else 0.0
    return precision, recall, _f1(precision, recall)


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    previous = [0] * (len(b) + 1)
    for token in a:
        current = [0]
        for j, other in enumerate(b, start=1):
            current.append(previous[j - 1] + 1 if token == other else max(previous[j], current[j - 1]))
        previous = current
    return previous[-1]


def rouge_l(hypothesis: TokensLike, reference: TokensLike) -> Tuple[float, float, float]:
    hyp, ref = as_tokens(hypothesis), as_tokens(reference)
    _require(hyp, ref)
    lcs = lcs_length(hyp, ref)
    precision = lcs / len(hyp)
    recall = lcs / len(ref)
    return precision, recall, _f1(precision, recall)


@lru_cache(maxsize=65536)
def stem(token: str) -> str:
    return _stemmer.stem(token)


def align(hypothesis: Sequence[str], reference: Sequence[str]) -> List[Tuple[int, int]]:
    """(hyp_index, ref_index) matches: exact stage, then stem stage"""
    used_ref = set()
    matched_hyp = {}
    stages = ((lambda t: t), stem)
    for normalize in stages:
        ref_forms = [normalize(t) for t in reference]
        for i, token in enumerate(hypothesis):
            if i in matched_hyp:
                continue
            form = normalize(token)
            for j, ref_form in enumerate(ref_forms):
                if j not in used_ref and ref_form == form:
                    matched_hyp[i] = j
                    used_ref.add(j)
                    break
    return sorted(matched_hyp.items())


def count_chunks(alignment: Sequence[Tuple[int, int]]) -> int:
    chunks = 0
    previous = None
    for hyp_index, ref_index in alignment:
        if previous is None or hyp_index != previous[0] + 1 or ref_index != previous[1] + 1:
            chunks += 1
        previous = (hyp_index, ref_index)
    return chunks


def meteor(hypothesis: TokensLike, reference: TokensLike) -> float:
    hyp, ref = as_tokens(hypothesis), as_tokens(reference)
    _require(hyp, ref)
    alignment = align(hyp, ref)
    matches = len(alignment)
    if matches == 0:
        return 0.0
    precision = matches / len(hyp)
    recall = matches / len(ref)
    f_mean = 10 * precision * recall / (recall + 9 * precision)
    penalty = 0.5 * (count_chunks(alignment) / matches) ** 3
    return f_mean * (1 - penalty)

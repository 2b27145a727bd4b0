""" ROUGE-1, ROUGE-2, ROUGE-L and ROUGE-Lsum.

Tokenization: lowercase, split on runs of non-alphanumeric characters, no stemming and
no stopword removal. ROUGE-Lsum splits sentences on newlines and on [.!?] followed by
whitespace.
"""
from collections import Counter
from typing import Dict, List, NamedTuple, Sequence, Tuple
import re

TOKEN_SPLIT = re.compile(r"[^a-z0-9]+")
SENTENCE_SPLIT = re.compile(r"(?<=[.!?])\s+|\n+")
ROUGE_TYPES = ("rouge1", "rouge2", "rougeL", "rougeLsum")


class RougeScore(NamedTuple):
    precision: float
    recall: float
    f1: float


def tokenize(text: str) -> List[str]:
    return [token for token in TOKEN_SPLIT.split(text.lower()) if token]


def split_sentences(text: str) -> List[str]:
    return [sentence for sentence in SENTENCE_SPLIT.split(text.strip()) if sentence.strip()]


def score_from_counts(matches: float, candidate_count: int, reference_count: int) -> RougeScore:
    precision = matches / candidate_count if candidate_count else 0.0
    recall = matches / reference_count if reference_count else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return RougeScore(precision, recall, f1)


def ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i: i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(candidate: str, reference: str, n: int = 1) -> RougeScore:
    if n not in (1, 2):
        raise ValueError("n must be 1 or 2")
    candidate_ngrams = ngrams(tokenize(candidate), n)
    reference_ngrams = ngrams(tokenize(reference), n)
    # clipped counts: the multiset intersection
    matches = sum((candidate_ngrams & reference_ngrams).values())
    return score_from_counts(matches, sum(candidate_ngrams.values()), sum(reference_ngrams.values()))


def lcs_table(x: Sequence[str], y: Sequence[str]) -> List[List[int]]:
    table = [[0] * (len(y) + 1) for _ in range(len(x) + 1)]
    for i in range(1, len(x) + 1):
        row, previous = table[i], table[i - 1]
        for j in range(1, len(y) + 1):
            if x[i - 1] == y[j - 1]:
                row[j] = previous[j - 1] + 1
            else:
                row[j] = max(previous[j], row[j - 1])
    return table


def lcs_length(x: Sequence[str], y: Sequence[str]) -> int:
    return lcs_table(x, y)[len(x)][len(y)]


def lcs_positions(x: Sequence[str], y: Sequence[str]) -> List[int]:
    """ Indices into x of one longest common subsequence with y. """
    table = lcs_table(x, y)
    i, j = len(x), len(y)
    positions = []
    while i > 0 and j > 0:
        if x[i - 1] == y[j - 1]:
            positions.append(i - 1)
            i -= 1
            j -= 1
        elif table[i - 1][j] >= table[i][j - 1]:
            i -= 1
        else:
            j -= 1
    return positions[::-1]


def rouge_l(candidate: str, reference: str) -> RougeScore:
    candidate_tokens = tokenize(candidate)
    reference_tokens = tokenize(reference)
    return score_from_counts(lcs_length(candidate_tokens, reference_tokens), len(candidate_tokens), len(reference_tokens))


def rouge_lsum(candidate: str, reference: str) -> RougeScore:
    """ Summary-level LCS: for every reference sentence the union of its LCS hits against
    all candidate sentences, each token credited at most as often as it occurs in both
    texts. """
    candidate_sentences = [tokenize(s) for s in split_sentences(candidate)]
    reference_sentences = [tokenize(s) for s in split_sentences(reference)]
    candidate_sentences = [s for s in candidate_sentences if s]
    reference_sentences = [s for s in reference_sentences if s]

    candidate_counts = Counter(token for sentence in candidate_sentences for token in sentence)
    reference_counts = Counter(token for sentence in reference_sentences for token in sentence)
    candidate_total = sum(candidate_counts.values())
    reference_total = sum(reference_counts.values())

    matches = 0
    for reference_sentence in reference_sentences:
        hits = set()
        for candidate_sentence in candidate_sentences:
            hits.update(lcs_positions(reference_sentence, candidate_sentence))
        for position in sorted(hits):
            token = reference_sentence[position]
            if candidate_counts[token] > 0 and reference_counts[token] > 0:
                candidate_counts[token] -= 1
                reference_counts[token] -= 1
                matches += 1

    return score_from_counts(matches, candidate_total, reference_total)


def score_pair(candidate: str, reference: str) -> Dict[str, RougeScore]:
    return {
        "rouge1": rouge_n(candidate, reference, 1),
        "rouge2": rouge_n(candidate, reference, 2),
        "rougeL": rouge_l(candidate, reference),
        "rougeLsum": rouge_lsum(candidate, reference),
    }


def mean_scores(pair_scores: Sequence[Dict[str, RougeScore]], field: str = "f1") -> Tuple[float, ...]:
    """ Arithmetic mean of one score component per ROUGE type, in ROUGE_TYPES order. """
    if not pair_scores:
        return tuple(0.0 for _ in ROUGE_TYPES)
    return tuple(
        sum(getattr(scores[rouge_type], field) for scores in pair_scores) / len(pair_scores)
        for rouge_type in ROUGE_TYPES
    )

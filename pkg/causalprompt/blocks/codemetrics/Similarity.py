import keyword
import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import List, Sequence, Tuple

from causalprompt.blocks.codemetrics.SyntaxCheck import parse, parses_cleanly, walk
from causalprompt.utils.Errors import DataError, TooFewSolutions
from causalprompt.utils.Logger import get_logger

logger = get_logger(__name__)

KEYWORD_WEIGHT = 5.0
PYTHON_KEYWORDS = frozenset(keyword.kwlist) | frozenset(getattr(keyword, "softkwlist", []))
CODE_TOKEN = re.compile(r"\w+|[^\w\s]")
DEFAULT_WEIGHTS = (1 / 3, 1 / 3, 1 / 3)


def tokenize_code(source: str) -> List[str]:
    """Word runs and single punctuation characters; comments dropped."""
    source = re.sub(r"#[^\n]*", "", source)
    return CODE_TOKEN.findall(source)


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu(candidate: Sequence[str], reference: Sequence[str], max_n: int = 4, smoothing_k: float = 1.0) -> float:
    """
    BLEU of one candidate against one reference: geometric mean of clipped
    n-gram precisions for n = 1..max_n times the brevity penalty.

    Precisions use add-k smoothing, (matches + k) / (total + k). Orders the
    candidate is too short to contain are skipped.
    """
    if max_n < 1:
        raise DataError("bleu needs max_n >= 1")
    if not candidate:
        return 0.0

    log_precisions = []
    for n in range(1, max_n + 1):
        cand_ngrams = _ngrams(candidate, n)
        total = sum(cand_ngrams.values())
        if total == 0:
            continue
        ref_ngrams = _ngrams(reference, n)
        matches = sum(min(count, ref_ngrams[gram]) for gram, count in cand_ngrams.items())
        precision = (matches + smoothing_k) / (total + smoothing_k)
        if precision <= 0:
            return 0.0
        log_precisions.append(math.log(precision))

    c, r = len(candidate), len(reference)
    brevity_penalty = 1.0 if c > r else math.exp(1 - r / c)
    score = brevity_penalty * math.exp(sum(log_precisions) / len(log_precisions))
    return min(1.0, max(0.0, score))


def weighted_bleu(candidate: Sequence[str], reference: Sequence[str], weight: float = KEYWORD_WEIGHT) -> float:
    """Unigram precision where language keywords count `weight` times, with brevity penalty."""
    if not candidate:
        return 0.0
    cand, ref = Counter(candidate), Counter(reference)
    matched = total = 0.0
    for token, count in cand.items():
        w = weight if token in PYTHON_KEYWORDS else 1.0
        matched += w * min(count, ref[token])
        total += w * count
    c, r = len(candidate), len(reference)
    brevity_penalty = 1.0 if c > r else math.exp(1 - r / c)
    return brevity_penalty * matched / total


def _subtree_types(source: str) -> Counter:
    # internal nodes only, so identifiers and literals do not count
    return Counter(node.type for node in walk(parse(source).root_node) if node.children)


def ast_match(candidate: str, reference: str) -> float:
    """
    Share of the candidate's internal syntax-tree nodes matched by type in the reference.
    Nodes are compared as a multiset of types, not as whole subtrees, so
    reordering statements does not change the score.
    """
    cand, ref = _subtree_types(candidate), _subtree_types(reference)
    total = sum(cand.values())
    if total == 0:
        return 1.0 if not ref else 0.0
    return sum(min(count, ref[node_type]) for node_type, count in cand.items()) / total


@dataclass(frozen=True)
class CodeBleuScore:
    score: float
    ngram: float
    weighted: float
    ast: float
    parse_fallback: bool = False
    """Set when either side failed to parse; the syntax component is then 0."""


def codebleu_components(candidate: str, reference: str, weights: Tuple[float, float, float] = DEFAULT_WEIGHTS,
                        max_n: int = 4, smoothing_k: float = 1.0) -> CodeBleuScore:
    if any(w < 0 for w in weights) or abs(sum(weights) - 1.0) > 1e-6:
        raise DataError("codebleu weights must be nonnegative and sum to 1")
    cand_tokens, ref_tokens = tokenize_code(candidate), tokenize_code(reference)
    ngram = bleu(cand_tokens, ref_tokens, max_n, smoothing_k)
    weighted = weighted_bleu(cand_tokens, ref_tokens)

    fallback = not (parses_cleanly(candidate) and parses_cleanly(reference))
    if fallback:
        logger.debug("CodeBLEU parse fallback, syntax component set to 0")
        ast = 0.0
    else:
        ast = ast_match(candidate, reference)

    w_ngram, w_weighted, w_ast = weights
    score = w_ngram * ngram + w_weighted * weighted + w_ast * ast
    return CodeBleuScore(min(1.0, max(0.0, score)), ngram, weighted, ast, fallback)


def codebleu(candidate: str, reference: str, weights: Tuple[float, float, float] = DEFAULT_WEIGHTS,
             max_n: int = 4, smoothing_k: float = 1.0) -> float:
    return codebleu_components(candidate, reference, weights, max_n, smoothing_k).score


def source_bleu(candidate: str, reference: str, max_n: int = 4, smoothing_k: float = 1.0) -> float:
    return bleu(tokenize_code(candidate), tokenize_code(reference), max_n, smoothing_k)


def mutual_similarity(solutions: Sequence[str], metric: str = "codebleu", **kwargs) -> float:
    """Mean of the metric over ordered pairs (i != j), candidate i against reference j."""
    if len(solutions) < 2:
        raise TooFewSolutions(len(solutions))
    if metric == "codebleu":
        score = codebleu
    elif metric == "bleu":
        score = source_bleu
    else:
        raise DataError(f"unknown similarity metric '{metric}'")
    pairs = [(i, j) for i in range(len(solutions)) for j in range(len(solutions)) if i != j]
    return sum(score(solutions[i], solutions[j], **kwargs) for i, j in pairs) / len(pairs)

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from causalprompt.blocks.linguistics.Tokenizer import TokenSequence, frequency_ranks, lexicon, tokenize
from causalprompt.utils.Errors import DataError

FAMILIES = ("lexical", "syntactic_shallow", "semantic_lexicon")


class BaseFeature(ABC):
    @abstractmethod
    def __init__(self):
        pass

    @abstractmethod
    def run(self, tokens: TokenSequence) -> float:
        pass


class FeatureSpec(BaseFeature):
    name: str
    """The unique name of the feature; becomes a linguistic variable of the causal graph."""
    family: str
    compute: Callable[[TokenSequence], float]
    description: str
    """What the value measures and its documented range."""

    def __init__(self, name: str, family: str, compute: Callable[[TokenSequence], float], description: str):
        if family not in FAMILIES:
            raise DataError(f"feature '{name}' has unknown family '{family}'")
        self.name = name
        self.family = family
        self.compute = compute
        self.description = description

    def run(self, tokens: TokenSequence) -> float:
        return float(self.compute(tokens))

    def __repr__(self):
        return f"FeatureSpec({self.name!r}, {self.family!r})"


@dataclass(frozen=True)
class FeatureVector:
    names: Tuple[str, ...]
    values: Tuple[float, ...]
    record_id: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if len(self.names) != len(self.values):
            raise DataError("feature names and values differ in length")
        if not all(math.isfinite(v) for v in self.values):
            raise DataError(f"non-finite feature value for record '{self.record_id}'")

    def as_dict(self) -> Dict[str, float]:
        return dict(zip(self.names, self.values))


# helpers; every one of them is total on the empty sequence

def _safe_div(a: float, b: float) -> float:
    return a / b if b else 0.0


def _types(words: List[str]) -> int:
    return len(set(words))


def _count_tag(tag: str) -> Callable[[TokenSequence], float]:
    return lambda t: len(t.with_tag(tag))


def _ratio_tag(tag: str) -> Callable[[TokenSequence], float]:
    return lambda t: _safe_div(len(t.with_tag(tag)), len(t.words()))


def _root_var(tag: str) -> Callable[[TokenSequence], float]:
    # unique tagged words over the square root of tagged words; 0 when there are none
    return lambda t: _safe_div(_types(t.with_tag(tag)), math.sqrt(len(t.with_tag(tag))))


def _simp_var(tag: str) -> Callable[[TokenSequence], float]:
    return lambda t: _safe_div(_types(t.with_tag(tag)), len(t.with_tag(tag)))


def _bilog_ttr(t: TokenSequence) -> float:
    words = t.words()
    if len(words) < 2:
        return 0.0
    return math.log(_types(words)) / math.log(len(words))


def _uber_index(t: TokenSequence) -> float:
    words = t.words()
    n, v = len(words), _types(words)
    if n < 2 or v == n:
        return 0.0
    return math.log(n) ** 2 / (math.log(n) - math.log(v))


def _sentence_lengths(t: TokenSequence) -> List[int]:
    return [sum(1 for _, tag in sentence if tag != "PUNCT") for sentence in t.sentences()]


def _familiarity(word: str) -> float:
    ranks = frequency_ranks()
    if word not in ranks:
        return 0.0
    return 1.0 - ranks[word] / len(ranks)


def _in_lexicon(name: str) -> Callable[[TokenSequence], float]:
    return lambda t: sum(1 for w in t.words() if w in lexicon(name))


POS_NAMES = {
    "NOUN": "noun", "VERB": "verb", "ADJ": "adj", "ADV": "adv", "DET": "det",
    "PRON": "pron", "PREP": "prep", "NUM": "num",
}


def _build_default_registry() -> Tuple[FeatureSpec, ...]:
    specs = [
        FeatureSpec("token_count", "lexical", lambda t: len(t.words()),
                    "Number of word tokens (punctuation excluded); >= 0."),
        FeatureSpec("char_count", "lexical", lambda t: sum(len(s) for s in t.surfaces),
                    "Number of characters over all tokens, whitespace excluded; >= 0."),
        FeatureSpec("sentence_count", "lexical", lambda t: len(t.sentence_bounds),
                    "Number of sentences; >= 0."),
        FeatureSpec("type_count", "lexical", lambda t: _types(t.words()),
                    "Number of distinct lowercased word tokens; >= 0."),
        FeatureSpec("simp_ttr", "lexical", lambda t: _safe_div(_types(t.words()), len(t.words())),
                    "Type-token ratio, distinct words over words; in [0, 1]."),
        FeatureSpec("root_ttr", "lexical", lambda t: _safe_div(_types(t.words()), math.sqrt(len(t.words()))),
                    "Root type-token ratio, distinct words over sqrt(words); >= 0."),
        FeatureSpec("corr_ttr", "lexical", lambda t: _safe_div(_types(t.words()), math.sqrt(2 * len(t.words()))),
                    "Corrected type-token ratio, distinct words over sqrt(2 * words); >= 0."),
        FeatureSpec("bilog_ttr", "lexical", _bilog_ttr,
                    "Bilogarithmic type-token ratio log(types)/log(words); in [0, 1], 0 under 2 words."),
        FeatureSpec("uber_index", "lexical", _uber_index,
                    "Uber index log(words)^2 / (log(words) - log(types)); >= 0, 0 when all words differ."),
    ]
    for tag, short in POS_NAMES.items():
        specs.append(FeatureSpec(f"{short}_count", "lexical", _count_tag(tag),
                                 f"Number of tokens tagged {tag}; >= 0."))
    for tag, short in POS_NAMES.items():
        specs.append(FeatureSpec(f"{short}_ratio", "lexical", _ratio_tag(tag),
                                 f"Share of word tokens tagged {tag}; in [0, 1]."))
    for tag, short in POS_NAMES.items():
        if tag == "NUM":
            continue
        specs.append(FeatureSpec(f"root_{short}_var", "lexical", _root_var(tag),
                                 f"Distinct {tag} words over sqrt of {tag} words; >= 0, 0 without {tag} words."))
    for tag in ("NOUN", "VERB", "ADJ", "ADV"):
        short = POS_NAMES[tag]
        specs.append(FeatureSpec(f"simp_{short}_var", "lexical", _simp_var(tag),
                                 f"Distinct {tag} words over {tag} words; in [0, 1]."))

    specs += [
        FeatureSpec("punct_count", "syntactic_shallow", _count_tag("PUNCT"),
                    "Number of punctuation tokens; >= 0."),
        FeatureSpec("mean_sentence_length", "syntactic_shallow",
                    lambda t: _safe_div(sum(_sentence_lengths(t)), len(t.sentence_bounds)),
                    "Mean words per sentence; >= 0."),
        FeatureSpec("max_sentence_length", "syntactic_shallow",
                    lambda t: max(_sentence_lengths(t), default=0),
                    "Words in the longest sentence; >= 0."),
        FeatureSpec("mean_word_length", "syntactic_shallow",
                    lambda t: _safe_div(sum(len(w) for w in t.words()), len(t.words())),
                    "Mean characters per word token; >= 0."),
        FeatureSpec("long_word_ratio", "syntactic_shallow",
                    lambda t: _safe_div(sum(1 for w in t.words() if len(w) > 6), len(t.words())),
                    "Share of words longer than six characters; in [0, 1]."),
        FeatureSpec("punct_density", "syntactic_shallow",
                    lambda t: _safe_div(len(t.with_tag("PUNCT")), len(t)),
                    "Punctuation tokens over all tokens; in [0, 1]."),
        FeatureSpec("comma_count", "syntactic_shallow", lambda t: sum(1 for s in t.surfaces if s == ","),
                    "Number of commas; >= 0."),
        FeatureSpec("clause_marker_count", "syntactic_shallow", _in_lexicon("clause_markers"),
                    "Coordinating and subordinating conjunctions; >= 0."),
        FeatureSpec("clauses_per_sentence", "syntactic_shallow",
                    lambda t: _safe_div(_in_lexicon("clause_markers")(t), len(t.sentence_bounds)),
                    "Clause markers per sentence; >= 0."),
        FeatureSpec("question_mark_count", "syntactic_shallow", lambda t: sum(1 for s in t.surfaces if s == "?"),
                    "Number of question marks; >= 0."),
        FeatureSpec("other_count", "syntactic_shallow", _count_tag("OTHER"),
                    "Tokens tagged OTHER (identifiers, conjunctions); >= 0."),
    ]

    specs += [
        FeatureSpec("named_entity_count", "semantic_lexicon", _count_tag("ENT"),
                    "Named entities: capitalized mid-sentence tokens or gazetteer hits; >= 0."),
        FeatureSpec("named_entity_ratio", "semantic_lexicon", _ratio_tag("ENT"),
                    "Share of word tokens that are named entities; in [0, 1]."),
        FeatureSpec("word_familiarity_mean", "semantic_lexicon",
                    lambda t: _safe_div(sum(_familiarity(w) for w in t.words()), len(t.words())),
                    "Mean familiarity from the bundled frequency list, unknown words count 0; in [0, 1]."),
        FeatureSpec("rare_word_ratio", "semantic_lexicon",
                    lambda t: _safe_div(sum(1 for w in t.words() if w not in frequency_ranks()), len(t.words())),
                    "Share of words missing from the bundled frequency list; in [0, 1]."),
        FeatureSpec("code_term_count", "semantic_lexicon", _in_lexicon("code_terms"),
                    "Programming vocabulary hits; >= 0."),
        FeatureSpec("code_term_ratio", "semantic_lexicon",
                    lambda t: _safe_div(_in_lexicon("code_terms")(t), len(t.words())),
                    "Share of words from the programming vocabulary; in [0, 1]."),
    ]
    return tuple(specs)


DEFAULT_REGISTRY: Tuple[FeatureSpec, ...] = _build_default_registry()


def select_registry(names: Sequence[str] = (), registry: Sequence[FeatureSpec] = DEFAULT_REGISTRY) -> Tuple[FeatureSpec, ...]:
    """Restrict a registry to the given names (registry order kept); empty names keep all."""
    if not names:
        return tuple(registry)
    by_name = {spec.name: spec for spec in registry}
    unknown = [n for n in names if n not in by_name]
    if unknown:
        raise DataError(f"unknown features: {unknown}")
    wanted = set(names)
    return tuple(spec for spec in registry if spec.name in wanted)


def extract_features(text: str, registry: Sequence[FeatureSpec] = DEFAULT_REGISTRY, record_id: Optional[str] = None) -> FeatureVector:
    if not registry:
        raise DataError("feature registry is empty")
    tokens = tokenize(text)
    return FeatureVector(
        names=tuple(spec.name for spec in registry),
        values=tuple(spec.run(tokens) for spec in registry),
        record_id=record_id,
    )


def list_features(registry: Sequence[FeatureSpec] = DEFAULT_REGISTRY) -> List[Tuple[str, str, str]]:
    return [(spec.name, spec.family, spec.description) for spec in registry]

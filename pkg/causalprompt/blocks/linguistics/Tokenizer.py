import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Dict, FrozenSet, List, Tuple

POS_TAGS = ("NOUN", "VERB", "ADJ", "ADV", "DET", "PRON", "PREP", "NUM", "PUNCT", "ENT", "OTHER")

TOKEN_PATTERN = re.compile(
    r"\d+(?:[.,]\d+)*(?!\w)"                 # numbers, 3.5 or 1,000
    r"|[A-Za-z]+(?:['’][A-Za-z]+)*(?!\w)"    # words with inner apostrophes
    r"|\w+"                            # identifiers such as a_i or x1
    r"|[^\w\s]"                        # single punctuation marks
)
SENTENCE_END = {".", "!", "?"}
NUMBER_WORDS = frozenset(
    "zero one two three four five six seven eight nine ten eleven twelve twenty "
    "hundred thousand million billion first second third".split()
)

VERB_SUFFIXES = ("ing", "ed", "ize", "ise", "ify", "ate")
ADJ_SUFFIXES = ("ous", "ful", "ive", "able", "ible", "al", "ic", "less", "ish", "est")


@lru_cache(maxsize=None)
def lexicon(name: str) -> FrozenSet[str]:
    """A bundled word list (lowercase, one word per line, '#' comments)."""
    text = resources.files("causalprompt.blocks.linguistics").joinpath("lexicons").joinpath(f"{name}.txt").read_text("utf-8")
    return frozenset(w.strip().lower() for w in text.splitlines() if w.strip() and not w.startswith("#"))


@lru_cache(maxsize=None)
def frequency_ranks() -> Dict[str, int]:
    text = resources.files("causalprompt.blocks.linguistics").joinpath("lexicons").joinpath("frequency.txt").read_text("utf-8")
    words = [w.strip().lower() for w in text.splitlines() if w.strip() and not w.startswith("#")]
    ranks: Dict[str, int] = {}
    for rank, word in enumerate(words):
        ranks.setdefault(word, rank)
    return ranks


CLOSED_CLASSES = (("determiners", "DET"), ("pronouns", "PRON"), ("prepositions", "PREP"))


@dataclass(frozen=True)
class TokenSequence:
    tokens: Tuple[Tuple[str, str], ...] = ()
    """(surface, tag) pairs."""
    sentence_bounds: Tuple[Tuple[int, int], ...] = ()
    """Half-open [start, end) token ranges partitioning tokens."""

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def surfaces(self) -> List[str]:
        return [surface for surface, _ in self.tokens]

    @property
    def tags(self) -> List[str]:
        return [tag for _, tag in self.tokens]

    def words(self) -> List[str]:
        """Lowercased surfaces of every non-punctuation token."""
        return [surface.lower() for surface, tag in self.tokens if tag != "PUNCT"]

    def with_tag(self, tag: str) -> List[str]:
        return [surface.lower() for surface, t in self.tokens if t == tag]

    def sentences(self) -> List[List[Tuple[str, str]]]:
        return [list(self.tokens[start:end]) for start, end in self.sentence_bounds]


def _split_sentences(surfaces: List[str]) -> Tuple[Tuple[int, int], ...]:
    bounds, start = [], 0
    for i, surface in enumerate(surfaces):
        if surface in SENTENCE_END:
            bounds.append((start, i + 1))
            start = i + 1
    if start < len(surfaces):
        bounds.append((start, len(surfaces)))
    return tuple(bounds)


def tag_token(surface: str, sentence_initial: bool) -> str:
    lower = surface.lower()
    if not any(ch.isalnum() for ch in surface):
        return "PUNCT"
    if surface[0].isdigit() and re.fullmatch(r"\d+(?:[.,]\d+)*", surface):
        return "NUM"
    if lower in NUMBER_WORDS:
        return "NUM"
    if not surface.isalpha() and not re.fullmatch(r"[A-Za-z]+(?:['’][A-Za-z]+)*", surface):
        return "OTHER"
    for name, tag in CLOSED_CLASSES:
        if lower in lexicon(name):
            return tag
    if lower in lexicon("clause_markers"):
        return "OTHER"
    capitalized = surface[0].isupper() and len(surface) > 1 and not surface.isupper()
    if capitalized and not sentence_initial:
        return "ENT"
    if lower in lexicon("gazetteer"):
        return "ENT"
    if lower in lexicon("verbs"):
        return "VERB"
    if lower in lexicon("adverbs") or (lower.endswith("ly") and len(lower) > 4):
        return "ADV"
    if len(lower) > 4 and lower.endswith(VERB_SUFFIXES):
        return "VERB"
    if len(lower) > 4 and lower.endswith(ADJ_SUFFIXES):
        return "ADJ"
    return "NOUN"


def tokenize(text: str) -> TokenSequence:
    """
    Split text into tagged tokens and sentences.

    Closed-class words are tagged from the bundled word lists, open classes by
    suffix heuristics, and capitalized tokens that do not start a sentence (or
    gazetteer hits) as named entities.
    """
    surfaces = TOKEN_PATTERN.findall(text or "")
    bounds = _split_sentences(surfaces)
    initial = {start for start, _ in bounds}
    tokens = tuple((surface, tag_token(surface, i in initial)) for i, surface in enumerate(surfaces))
    return TokenSequence(tokens, bounds)

import math

import pytest

from causalprompt.blocks.linguistics.Features import (DEFAULT_REGISTRY, FAMILIES, FeatureVector, extract_features,
                                                      list_features, select_registry)
from causalprompt.blocks.linguistics.Tokenizer import POS_TAGS, tokenize
from causalprompt.utils.Errors import DataError


def feature(text, name):
    return extract_features(text, select_registry([name])).as_dict()[name]


def test_empty_text():
    tokens = tokenize("")
    assert len(tokens) == 0
    assert tokens.sentence_bounds == ()


def test_simple_sentence_tags():
    tokens = tokenize("The cat sat.")
    assert tokens.tags == ["DET", "NOUN", "VERB", "PUNCT"]
    assert len(tokens.sentence_bounds) == 1


def test_mid_sentence_capital_is_entity():
    tokens = tokenize("Ask Alice about the list.")
    assert dict(tokens.tokens)["Alice"] == "ENT"


def test_identifiers_and_numbers_stay_whole():
    tokens = tokenize("Let a_i be 3.5 for all i.")
    assert "a_i" in tokens.surfaces
    assert dict(tokens.tokens)["3.5"] == "NUM"


def test_sentence_bounds_partition_tokens():
    tokens = tokenize("First line. Second one! Third? trailing words")
    covered = [i for start, end in tokens.sentence_bounds for i in range(start, end)]
    assert covered == list(range(len(tokens)))
    assert all(tag in POS_TAGS for tag in tokens.tags)


def test_feature_examples():
    assert feature("a b c", "token_count") == 3
    assert feature("the cat and the dog", "simp_ttr") == pytest.approx(0.8)
    assert feature("the cat saw the dog on a mat", "root_det_var") == pytest.approx(2 / math.sqrt(3))
    assert feature("no determiners here", "root_det_var") == 0.0


def test_registry_contract():
    entries = list_features()
    names = [name for name, _, _ in entries]
    assert len(entries) >= 40
    assert len(set(names)) == len(names)
    assert all(description for _, _, description in entries)
    assert {family for _, family, _ in entries} <= set(FAMILIES)
    assert {"simp_ttr", "root_det_var", "named_entity_count"} <= set(names)


def test_every_feature_total_on_empty_text():
    vector = extract_features("")
    assert len(vector.values) == len(DEFAULT_REGISTRY)
    assert all(math.isfinite(v) for v in vector.values)


def test_determinism_and_order():
    text = "Given an array of n integers, print the largest one. Alice wants it fast."
    first, second = extract_features(text), extract_features(text)
    assert first == second
    assert first.names == tuple(spec.name for spec in DEFAULT_REGISTRY)


def test_counts_grow_and_ratios_stay_in_range():
    text = "Read two numbers and print their sum. Then explain it quickly, if possible!"
    once, twice = extract_features(text).as_dict(), extract_features(text + " " + text).as_dict()
    for name, value in once.items():
        if name.endswith("_count"):
            assert twice[name] >= value, name
        if name.endswith("_ratio") or name in ("simp_ttr", "bilog_ttr", "punct_density"):
            assert 0.0 <= value <= 1.0, name


def test_select_registry():
    assert [s.name for s in select_registry(["simp_ttr", "token_count"])] == ["token_count", "simp_ttr"]
    assert select_registry([]) == DEFAULT_REGISTRY
    with pytest.raises(DataError):
        select_registry(["no_such_feature"])
    with pytest.raises(DataError):
        extract_features("text", ())


def test_feature_vector_rejects_bad_values():
    with pytest.raises(DataError):
        FeatureVector(("a",), (float("nan"),))
    with pytest.raises(DataError):
        FeatureVector(("a", "b"), (1.0,))

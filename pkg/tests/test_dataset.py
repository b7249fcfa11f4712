import json

import numpy as np
import pytest

from causalprompt.blocks.codemetrics.CodeMetrics import CodeMetricVector
from causalprompt.blocks.linguistics.Features import FeatureVector
from causalprompt.blocks.prompts.Intentions import (DEFAULT_REGISTRY, Intention, IntentionVector, check_length,
                                                    decode, load_registry, validate_registry)
from causalprompt.data.Dataset import PromptRecord, gold_solution, index_by_id, load_dataset, save_dataset
from causalprompt.data.Matrix import (LING, META, METRIC, ObservationMatrix, VariableSchema, assemble_matrix,
                                      drop_uncorrelated, load_matrix, standardize, unstandardize)
from causalprompt.utils.Errors import (AlignmentError, DataError, EmptyMatrixError, InsufficientData,
                                       LengthMismatch, SchemaError)


def write_jsonl(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def _line(**overrides):
    record = {"id": "q1", "question_text": "Add two numbers.", "origin_id": "q1",
              "intention_vector": "00", "solutions": ["print(1)\n"],
              "test_cases": [{"stdin": "", "expected_stdout": "1\n"}]}
    record.update(overrides)
    return json.dumps({k: v for k, v in record.items() if v is not None})


def test_bundled_fixture_has_twenty_originals(toy_records):
    assert len(toy_records) == 20
    assert all(r.is_original for r in toy_records)
    assert all(len(r.test_cases) >= 2 for r in toy_records)
    assert all(len(r.intention_vector) == len(DEFAULT_REGISTRY) for r in toy_records)


def test_malformed_record_names_line_and_field(tmp_path):
    path = write_jsonl(tmp_path / "d.jsonl", [_line(), _line(id="q2", origin_id="q2", question_text=None)])
    with pytest.raises(SchemaError) as info:
        load_dataset(path)
    assert info.value.line == 2
    assert info.value.field == "question_text"


def test_bad_intention_vector_rejected(tmp_path):
    path = write_jsonl(tmp_path / "d.jsonl", [_line(intention_vector="0120")])
    with pytest.raises(SchemaError) as info:
        load_dataset(path)
    assert info.value.field == "intention_vector"


def test_duplicate_id_and_unknown_origin(tmp_path):
    with pytest.raises(SchemaError):
        load_dataset(write_jsonl(tmp_path / "a.jsonl", [_line(), _line()]))
    with pytest.raises(SchemaError) as info:
        load_dataset(write_jsonl(tmp_path / "b.jsonl", [_line(), _line(id="q1-r1", origin_id="nope")]))
    assert info.value.field == "origin_id"


def test_missing_file_is_io_error(tmp_path):
    with pytest.raises(IOError):
        load_dataset(tmp_path / "missing.jsonl")


def test_save_then_load_keeps_records(tmp_path, toy_records):
    path = save_dataset(toy_records[:3], tmp_path / "out.jsonl")
    again = load_dataset(path)
    assert [r.model_dump() for r in again] == [r.model_dump() for r in toy_records[:3]]


def test_csv_dataset(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text(
        "id,question_text,origin_id,intention_vector,solutions,test_cases,difficulty\n"
        'q1,Print one.,q1,01,"[""print(1)""]","[{""stdin"": """", ""expected_stdout"": ""1""}]",\n',
        encoding="utf-8")
    records = load_dataset(path, format="csv")
    assert records[0].intention_vector == IntentionVector((0, 1))
    assert records[0].solutions == ["print(1)"]
    assert records[0].difficulty is None


def test_gold_solution_comes_from_origin(toy_records):
    rephrased = PromptRecord(id="p01-r1", question_text="Sum a and b.", origin_id="p01",
                             intention_vector="0" * 12)
    by_id = index_by_id(toy_records + [rephrased])
    assert gold_solution(rephrased, by_id) == toy_records[0].solutions[0]
    assert gold_solution(rephrased, {}) == ""


# intentions

def test_intention_vector_helpers():
    v = IntentionVector.from_string("101")
    assert v.to_string() == "101"
    assert IntentionVector.one_hot(3, 1).bits == (0, 1, 0)
    with pytest.raises(DataError):
        IntentionVector.from_string("10a")
    with pytest.raises(LengthMismatch):
        check_length(v, DEFAULT_REGISTRY)


def test_decode_in_registry_order():
    bits = [0] * 12
    bits[0], bits[9] = 1, 1
    assert decode(IntentionVector(tuple(bits)), DEFAULT_REGISTRY) == ["make it short", "in a programming competition"]


def test_registry_validation(tmp_path):
    with pytest.raises(DataError):
        validate_registry([Intention("a", "role", "x"), Intention("a", "role", "y")])
    with pytest.raises(DataError):
        Intention("a", "mood", "x")
    path = tmp_path / "registry.json"
    path.write_text(json.dumps([{"id": "terse", "group": "instruction", "surface_text": "be terse"}]))
    assert load_registry(path)[0].id == "terse"


# matrix

def _schema():
    return VariableSchema(("m1",), ("f1", "f2"), ("c1",))


def _record(i, bit):
    return PromptRecord(id=f"r{i}", question_text="q", origin_id=f"r{i}", intention_vector=(bit,))


def test_assemble_orders_columns_by_tier():
    records = [_record(0, 1), _record(1, 0)]
    features = [FeatureVector(("f2", "f1"), (2.0, 1.0), "r0"), FeatureVector(("f2", "f1"), (4.0, 3.0), "r1")]
    metrics = [CodeMetricVector("r0", pass_rate=0.5), CodeMetricVector("r1", pass_rate=0.25)]
    schema = VariableSchema(("m1",), ("f1", "f2"), ("pass_rate",))
    m = assemble_matrix(records, features, metrics, schema)
    assert m.names == ["m1", "f1", "f2", "pass_rate"]
    np.testing.assert_array_equal(m.rows, [[1, 1, 2, 0.5], [0, 3, 4, 0.25]])
    assert m.ids == ("r0", "r1")


def test_assemble_alignment_and_dropped_rows():
    schema = VariableSchema(("m1",), ("f1",), ("pass_rate",))
    records = [_record(0, 1), _record(1, 0)]
    features = [FeatureVector(("f1",), (1.0,), "r0"), FeatureVector(("f1",), (2.0,), "r1")]
    with pytest.raises(AlignmentError):
        assemble_matrix(records, features, [CodeMetricVector("r1", pass_rate=1.0)] * 2, schema)
    with pytest.raises(AlignmentError):
        assemble_matrix(records, features[:1], [CodeMetricVector("r0", pass_rate=1.0)], schema)

    m = assemble_matrix(records, features, [CodeMetricVector("r0", pass_rate=1.0), CodeMetricVector("r1")], schema)
    assert m.n == 1 and m.dropped_rows == 1
    with pytest.raises(EmptyMatrixError):
        assemble_matrix(records, features, [CodeMetricVector("r0"), CodeMetricVector("r1")], schema)


def test_meta_columns_must_be_binary():
    with pytest.raises(DataError):
        ObservationMatrix(_schema(), np.array([[2.0, 1.0, 1.0, 1.0]]))


def test_standardize_keeps_meta_and_flags_constants(rng):
    n = 200
    rows = np.column_stack([rng.integers(0, 2, n), rng.normal(5, 3, n), np.full(n, 4.0), rng.normal(size=n)])
    m = standardize(ObservationMatrix(_schema(), rows))
    assert set(np.unique(m.column("m1"))) <= {0.0, 1.0}
    assert abs(m.column("f1").mean()) < 1e-12
    assert abs(m.column("f1").std() - 1) < 1e-12
    assert "f2" in m.constant
    np.testing.assert_array_equal(m.column("f2"), rows[:, 2])
    np.testing.assert_allclose(unstandardize(m).rows, rows)


def test_drop_uncorrelated(rng):
    n = 300
    meta = rng.integers(0, 2, n).astype(float)
    related = 2 * meta + rng.normal(scale=0.5, size=n)
    noise = rng.normal(size=n)
    metric = related + rng.normal(scale=0.5, size=n)
    m = ObservationMatrix(_schema(), np.column_stack([meta, related, noise, metric]))
    kept = drop_uncorrelated(m, alpha=0.001)
    assert kept.schema.ling_names == ("f1",)
    assert kept.schema.meta_names == ("m1",) and kept.schema.metric_names == ("c1",)
    with pytest.raises(InsufficientData):
        drop_uncorrelated(m.take(np.arange(5)))


def test_assemble_is_permutation_equivariant(rng):
    schema = VariableSchema(("m1",), ("f1", "f2"), ("pass_rate",))
    records = [_record(i, i % 2) for i in range(6)]
    features = [FeatureVector(("f1", "f2"), tuple(rng.normal(size=2)), f"r{i}") for i in range(6)]
    metrics = [CodeMetricVector(f"r{i}", pass_rate=float(rng.random())) for i in range(6)]
    base = assemble_matrix(records, features, metrics, schema)
    order = [3, 0, 5, 1, 4, 2]
    shuffled = assemble_matrix([records[i] for i in order], [features[i] for i in order],
                               [metrics[i] for i in order], schema)
    np.testing.assert_array_equal(shuffled.rows, base.rows[order])
    assert shuffled.ids == tuple(base.ids[i] for i in order)


def _screen_matrix(seed, n=1000, metrics=5):
    rng = np.random.default_rng(seed)
    schema = VariableSchema(("m1",), ("noise", "copy"), tuple(f"c{k}" for k in range(metrics)))
    meta = rng.integers(0, 2, n).astype(float)
    outcomes = rng.normal(size=(n, metrics))
    rows = np.column_stack([meta, rng.normal(size=n), outcomes[:, 0], outcomes])
    return ObservationMatrix(schema, rows)


def test_screen_removes_independent_noise_over_seeds():
    removed = 0
    for seed in range(200):
        kept = drop_uncorrelated(_screen_matrix(seed), alpha=0.02)
        assert "copy" in kept.schema.ling_names
        assert kept.schema.meta_names == ("m1",) and len(kept.schema.metric_names) == 5
        removed += "noise" not in kept.schema.ling_names
    assert removed / 200 >= 0.95


def test_screen_alpha_one_keeps_everything():
    m = _screen_matrix(0)
    assert drop_uncorrelated(m, alpha=1.0).names == m.names


def test_matrix_csv_keeps_schema(tmp_path, rng):
    rows = np.column_stack([rng.integers(0, 2, 20), rng.normal(size=(20, 3))])
    m = ObservationMatrix(_schema(), rows, ids=tuple(f"r{i}" for i in range(20)))
    again = load_matrix(m.save_csv(tmp_path / "m.csv"))
    assert again.schema == m.schema
    assert again.ids == m.ids
    np.testing.assert_array_equal(again.rows, m.rows)
    assert {again.schema.tier_of(n) for n in again.names} == {META, LING, METRIC}

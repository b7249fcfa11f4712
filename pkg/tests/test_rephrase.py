import json

import numpy as np
import pytest

from causalprompt.agents.Rephraser.RephraseAgent import (RephraseAgent, generate_code, mock_code_fixtures,
                                                         plan_selections, rephrase_question, rephrased_id)
from causalprompt.agents.Rephraser.modelProcesses import strip_code_fences
from causalprompt.blocks.prompts.Intentions import DEFAULT_REGISTRY, IntentionVector
from causalprompt.blocks.prompts.PromptTemplate import build_code_prompt, build_meta_prompt
from causalprompt.models.Models import (AuditLog, ChatRequest, ChatResponse, MockModel, Models, create_model,
                                        derive_mock_programs, mock_rephrase)
from causalprompt.utils.Config import LLMConfig
from causalprompt.utils.Errors import DataError, EmptyResponse, LengthMismatch, TransportError

QUESTION = "Read two integers and print their sum."


def selection(*ids):
    return IntentionVector(tuple(int(i.id in ids) for i in DEFAULT_REGISTRY))


# meta-prompt

def test_control_prompt_has_no_clauses():
    prompt = build_meta_prompt(QUESTION, IntentionVector.zeros(12))
    assert QUESTION in prompt
    assert "make it" not in prompt and "Rephrase it as" not in prompt and "Assume" not in prompt


def test_single_instruction_clause():
    assert "make it short" in build_meta_prompt(QUESTION, selection("short"))


def test_instruction_clause_precedes_role():
    prompt = build_meta_prompt(QUESTION, selection("short", "student"))
    assert prompt.index("make it short") < prompt.index("as a student")


def test_selection_length_checked():
    with pytest.raises(LengthMismatch):
        build_meta_prompt(QUESTION, IntentionVector.zeros(3))


def test_code_prompt_contains_question():
    assert QUESTION in build_code_prompt(QUESTION)


# clients

def test_echo_and_fixture_modes():
    assert rephrase_question(QUESTION, selection("short"), MockModel(mode="echo")) == QUESTION
    fixtures = {(QUESTION, selection("long").to_string()): "A much longer question."}
    assert rephrase_question(QUESTION, selection("long"), MockModel(mode="fixtures", fixtures=fixtures)) == \
        "A much longer question."


def test_rules_mode_applies_intentions():
    text = rephrase_question(QUESTION, selection("long", "student"), MockModel())
    assert text.startswith("As a student")
    assert text.endswith("exactly as described above.")
    assert mock_rephrase("Please just print the value.", ["short"]) == "print the value."


def test_retries_then_transport_error():
    delays = []
    client = MockModel(mode="echo", failures=10, retries=2, backoff_s=1.0, sleep=delays.append)
    with pytest.raises(TransportError) as info:
        rephrase_question(QUESTION, selection(), client)
    assert info.value.attempts == 3
    assert client.attempts == 3
    assert delays == [1.0, 2.0]


def test_recovers_after_transient_failure():
    client = MockModel(mode="echo", failures=1, retries=3)
    assert rephrase_question(QUESTION, selection(), client) == QUESTION
    assert client.attempts == 2


def test_empty_rephrase_raises():
    with pytest.raises(EmptyResponse):
        rephrase_question(QUESTION, selection(), MockModel(mode="echo", empty=["q1"]), record_id="q1")


def test_response_invariant():
    with pytest.raises(DataError):
        ChatResponse(None, "stop")
    with pytest.raises(DataError):
        ChatResponse("text", "content_filter")
    assert not ChatResponse(None, "content_filter").ok


def test_generate_code_copies_and_fences():
    client = MockModel(code_fixtures={QUESTION: ["print(1)\n"]})
    assert generate_code(QUESTION, client) == ["print(1)\n"] * 3
    fenced = MockModel(code_fixtures={QUESTION: ["Here you go:\n```python\nprint(2)\n```\nDone."]})
    assert generate_code(QUESTION, fenced, n=1) == ["print(2)\n"]
    with pytest.raises(DataError):
        generate_code(QUESTION, client, n=0)


def test_generate_code_skips_empty_slots():
    client = MockModel(code_fixtures={QUESTION: ["a = 1\n", "b = 2\n", "c = 3\n"]}, empty=["r#1"])
    assert generate_code(QUESTION, client, n=3, record_id="r") == ["a = 1\n", "c = 3\n"]


def test_strip_code_fences_without_fence():
    assert strip_code_fences("print(3)\n") == "print(3)\n"
    assert strip_code_fences("```\nx = 1```") == "x = 1\n"


def test_model_registry_and_factory():
    assert Models.get_Model("mock") is MockModel
    assert Models.get_Model("nope") is None
    assert isinstance(create_model(LLMConfig(mock=True)), MockModel)


def test_audit_log(tmp_path):
    log = AuditLog(tmp_path / "audit.jsonl")
    client = MockModel(mode="echo", audit_log=log)
    rephrase_question(QUESTION, selection("short"), client, record_id="p1-r1")
    entry = json.loads((tmp_path / "audit.jsonl").read_text().splitlines()[0])
    assert entry["record_id"] == "p1-r1"
    assert entry["finish_reason"] == "stop"
    assert entry["usage"]["completion_tokens"] > 0


def test_complete_many_keeps_order():
    client = MockModel(mode="echo", max_inflight=4)
    requests = [ChatRequest.from_prompt(f"message {i}", request_id=str(i)) for i in range(8)]
    assert [r.text for r in client.complete_many(requests)] == [f"message {i}" for i in range(8)]


# plans and the agent

def test_plan_selections():
    plan = plan_selections(12, 2, np.random.default_rng(0))
    assert len(plan) == 15
    assert plan[0] == IntentionVector.zeros(12)
    assert all(sum(v.bits) == 1 for v in plan[1:13])
    assert all(sum(v.bits) >= 2 for v in plan[13:])
    assert len({v.bits for v in plan}) == 15


def test_rephrase_dataset(toy_records):
    agent = RephraseAgent(MockModel(), LLMConfig(mock=True))
    records = agent.rephrase_dataset(toy_records[:2], combos_per_question=2, seed=3)
    assert len(records) == 2 + 2 * 15
    rephrased = [r for r in records if not r.is_original]
    assert {r.origin_id for r in rephrased} == {"p01", "p02"}
    assert all(r.id == rephrased_id(r.origin_id, r.intention_vector) for r in rephrased)
    assert all(r.test_cases for r in rephrased)
    again = RephraseAgent(MockModel(), LLMConfig(mock=True)).rephrase_dataset(toy_records[:2], 2, seed=3)
    assert [r.model_dump() for r in again] == [r.model_dump() for r in records]


def test_generate_solutions_with_mock_programs(toy_records):
    agent = RephraseAgent(MockModel(), LLMConfig(mock=True))
    records = agent.rephrase_dataset(toy_records[:1], combos_per_question=0, seed=0)
    agent.client.code_fixtures = mock_code_fixtures(records, 3, derive_mock_programs)
    generated = agent.generate_solutions(records)
    assert generated[0].solutions == toy_records[0].solutions
    assert all(len(r.solutions) == 3 for r in generated[1:])


def test_mock_programs():
    gold = "x = int(input())\nprint(x)\n"
    programs = derive_mock_programs("Echo a number.", gold, 5)
    assert programs == derive_mock_programs("Echo a number.", gold, 5)
    assert len(programs) == 5
    assert derive_mock_programs("anything", "", 2) == ["print()", "print()"]

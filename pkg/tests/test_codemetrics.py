import itertools
import os
import time

import pytest

from causalprompt.blocks.codemetrics.CodeMetrics import compute_metrics, load_metrics_csv, save_metrics_csv, stability
from causalprompt.blocks.codemetrics.Sandbox import (PASS, RUNTIME_ERROR, TIMEOUT, WRONG_OUTPUT, Sandbox,
                                                     normalize_output, run_tests)
from causalprompt.blocks.codemetrics.Similarity import (ast_match, bleu, codebleu, codebleu_components,
                                                        mutual_similarity, source_bleu, tokenize_code)
from causalprompt.blocks.codemetrics.StyleRules import check_style, style_violations
from causalprompt.blocks.codemetrics.SyntaxCheck import count_syntax_errors
from causalprompt.data.Dataset import PromptRecord, TestCase
from causalprompt.utils.Config import MetricsConfig
from causalprompt.utils.Errors import DataError, SandboxError, TooFewSolutions

ECHO_SUM = "a, b = map(int, input().split())\nprint(a + b)\n"
TESTS = [TestCase(stdin="1 2\n", expected_stdout="3\n"),
         TestCase(stdin="2 2\n", expected_stdout="4"),
         TestCase(stdin="0 5\n", expected_stdout="5\n")]
LOOP = "while True:\n    pass\n"


def _record(solutions, tests=TESTS):
    return PromptRecord(id="r1", question_text="Add.", origin_id="r1", intention_vector="0",
                        solutions=solutions, test_cases=tests)


# sandbox

def test_passing_program():
    outcome = run_tests(ECHO_SUM, TESTS, timeout_s=2.0)
    assert outcome.pass_rate == 1.0
    assert len(outcome.cells) == 1 and len(outcome.cells[0]) == 3


def test_exception_is_runtime_error_everywhere():
    outcome = run_tests("raise ValueError('boom')\n", TESTS, timeout_s=2.0)
    assert all(cell.status == RUNTIME_ERROR for cell in outcome.cells[0])
    assert "ValueError" in outcome.cells[0][0].stderr_tail


def test_infinite_loop_times_out():
    outcome = run_tests(LOOP, TESTS[:1], timeout_s=1.0, grace_s=1.0)
    cell = outcome.cells[0][0]
    assert cell.status == TIMEOUT
    assert 1.0 <= cell.wall_time <= 2.0


def test_output_normalization():
    assert normalize_output("3  \n\n") == "3"
    assert normalize_output("a \nb\n") == "a\nb"


def test_sandbox_errors():
    with pytest.raises(DataError):
        Sandbox().run_tests([ECHO_SUM], [])
    with pytest.raises(SandboxError):
        Sandbox(interpreter="no-such-interpreter-xyz").run_tests([ECHO_SUM], TESTS)


def test_rates_sum_to_one_on_four_programs():
    programs = [ECHO_SUM, "print(0)\n", "import sys\nsys.exit(3)\n", LOOP]
    metrics = compute_metrics(_record(programs), ECHO_SUM, MetricsConfig(timeout_s=1.0, workers=8))
    assert metrics.pass_rate == 0.25
    assert metrics.wrong_output_rate == 0.25
    assert metrics.run_err_rate == 0.25
    assert metrics.timeout_rate == 0.25
    assert metrics.pass_rate + metrics.wrong_output_rate + metrics.run_err_rate + metrics.timeout_rate == 1.0


def test_outcome_counts():
    outcome = Sandbox(timeout_s=2.0).run_tests([ECHO_SUM, "print(4)\n"], TESTS)
    assert outcome.counts() == {PASS: 4, WRONG_OUTPUT: 2, RUNTIME_ERROR: 0, TIMEOUT: 0}


posix_only = pytest.mark.skipif(os.name != "posix", reason="process groups and rlimits are POSIX")


def _spawns_late_writer(marker, then):
    late = f"import time; time.sleep(3); open({str(marker)!r}, 'w').write('late')"
    return (f"import subprocess, sys\nsubprocess.Popen([sys.executable, '-c', {late!r}], stdin=subprocess.DEVNULL, "
            f"stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL)\n{then}")


@posix_only
@pytest.mark.slow
def test_children_of_a_cell_do_not_outlive_it(tmp_path):
    timed_out = _spawns_late_writer(tmp_path / "a.txt", "while True:\n    pass\n")
    finished = _spawns_late_writer(tmp_path / "b.txt", "print(3)\n")
    outcome = Sandbox(timeout_s=1.0, grace_s=1.0).run_tests([timed_out, finished], TESTS[:1])
    assert outcome.cells[0][0].status == TIMEOUT
    assert outcome.cells[1][0].status == PASS
    time.sleep(4)
    assert not (tmp_path / "a.txt").exists()
    assert not (tmp_path / "b.txt").exists()


@posix_only
def test_memory_limit_applies_in_the_child():
    outcome = run_tests("data = bytearray(1024 ** 3)\nprint(len(data))\n", TESTS[:1], timeout_s=4.0, memory_mb=256)
    assert outcome.cells[0][0].status == RUNTIME_ERROR
    assert "MemoryError" in outcome.cells[0][0].stderr_tail


def test_many_cells_on_a_full_pool():
    outcome = Sandbox(timeout_s=5.0, workers=8).run_tests([ECHO_SUM] * 6, TESTS)
    assert outcome.pass_rate == 1.0
    assert all(len(row) == len(TESTS) for row in outcome.cells)


# syntax and style

def test_syntax_errors():
    assert count_syntax_errors("x = 1") == 0
    assert count_syntax_errors("def f(:") >= 1
    broken = "a=1\nif x\n    y = (\n"
    assert count_syntax_errors(broken) == count_syntax_errors(broken)


def test_style_rules():
    clean = "import os\n\n\ndef main():\n    return os.getcwd()\n\n\nmain()\n"
    assert style_violations(clean) == 0
    long_line = "x = '" + "a" * 100 + "'\n"
    assert "line-length" in {v.rule for v in check_style(long_line)}
    assert [v.rule for v in check_style("x=1\n")] == ["spacing"]


def test_style_counts_blank_lines_and_commas():
    source = "import os\ndef f(a ,b):\n    return a\nf(1,2)\n"
    rules = sorted(v.rule for v in check_style(source))
    assert rules.count("blank-lines") == 2
    assert rules.count("spacing") == 2


# similarity

def test_bleu_examples():
    assert bleu("a b c d".split(), "a b c d".split()) == 1.0
    assert bleu([], "a b".split()) == 0.0
    assert bleu("a b c d".split(), "a b c e".split(), max_n=1, smoothing_k=0) == pytest.approx(0.75)


def test_codebleu_identity_and_degenerate_weights():
    program = "def f(a):\n    return a + 1\n"
    assert codebleu(program, program) == pytest.approx(1.0)
    other = "def g(a):\n    return a * 2\n"
    assert codebleu(other, program, weights=(1.0, 0.0, 0.0)) == pytest.approx(source_bleu(other, program))


def test_identifier_rename_keeps_syntax_component():
    score = codebleu_components("def g(b):\n    return b + 1\n", "def f(a):\n    return a + 1\n")
    assert score.ast == 1.0
    assert score.ngram < 1.0 and score.weighted < 1.0
    assert not score.parse_fallback


def test_syntax_match_counts_node_types_not_positions():
    assert ast_match("x = 1\ny = f(x)\n", "y = f(x)\nx = 1\n") == 1.0
    assert ast_match("x = 1\n", "for i in r:\n    pass\n") < 1.0


def test_unparsable_candidate_falls_back():
    score = codebleu_components("def f(:\n", "def f(a):\n    return a\n")
    assert score.parse_fallback and score.ast == 0.0
    with pytest.raises(DataError):
        codebleu_components("x", "x", weights=(0.5, 0.5, 0.5))


def test_tokenize_code_drops_comments():
    assert tokenize_code("x = 1  # set x\n") == ["x", "=", "1"]


def test_mutual_similarity():
    assert mutual_similarity(["x = 1\n"] * 3) == pytest.approx(1.0)
    with pytest.raises(TooFewSolutions):
        mutual_similarity(["x = 1\n"])
    assert mutual_similarity(["a b c d", "a b c e"], "bleu", max_n=1, smoothing_k=0) == pytest.approx(0.75)


def test_mutual_similarity_ignores_solution_order():
    solutions = [ECHO_SUM, "print(sum(map(int, input().split())))\n", "x = 1\nprint(x)\n", LOOP]
    expected = mutual_similarity(solutions)
    for order in itertools.permutations(solutions):
        assert mutual_similarity(list(order)) == pytest.approx(expected, abs=1e-12)


# aggregation

def test_identical_to_gold():
    metrics = compute_metrics(_record([ECHO_SUM]), ECHO_SUM, MetricsConfig(timeout_s=2.0))
    assert metrics.pass_rate == 1.0
    assert metrics.gold_sim_B == pytest.approx(1.0)
    assert metrics.mut_sim_CB is None and metrics.stability is None


def test_three_gold_copies():
    metrics = compute_metrics(_record([ECHO_SUM] * 3), ECHO_SUM, MetricsConfig(timeout_s=2.0))
    assert metrics.mut_sim_CB == pytest.approx(1.0)
    assert metrics.stability == 1.0
    assert metrics.syn_err == 0 and metrics.black_count == 0


def test_pass_and_timeout_split():
    tests = TESTS[:2]
    metrics = compute_metrics(_record([ECHO_SUM, LOOP], tests), ECHO_SUM, MetricsConfig(timeout_s=1.0))
    assert metrics.pass_rate == 0.5
    assert metrics.timeout_rate == 0.5


def test_missing_tests_and_gold():
    metrics = compute_metrics(_record(["x = 1\n", "x=1\n"], tests=[]), "")
    assert metrics.pass_rate is None and metrics.gold_sim_CB is None
    assert metrics.black_count == 0.5
    with pytest.raises(DataError):
        compute_metrics(_record([]), ECHO_SUM)


def test_stability():
    assert stability(["x = 1", "x  =  1", "y = 2"]) == pytest.approx(2 / 6)
    assert stability(["x"]) is None


def test_metrics_csv(tmp_path):
    metrics = compute_metrics(_record(["x = 1\n", "x=1\n"], tests=[]), "x = 1\n")
    loaded = load_metrics_csv(save_metrics_csv([metrics], tmp_path / "metrics.csv"))
    assert loaded == [metrics]

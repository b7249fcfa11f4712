import math
import re
from dataclasses import asdict, dataclass, fields
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import pandas as pd
from tqdm import tqdm

from causalprompt.blocks.codemetrics.Sandbox import PASS, RUNTIME_ERROR, TIMEOUT, WRONG_OUTPUT, Sandbox
from causalprompt.blocks.codemetrics.Similarity import codebleu_components, mutual_similarity, source_bleu
from causalprompt.blocks.codemetrics.StyleRules import style_violations
from causalprompt.blocks.codemetrics.SyntaxCheck import count_syntax_errors
from causalprompt.utils.Config import MetricsConfig
from causalprompt.utils.Errors import DataError
from causalprompt.utils.Files import atomic_write_text
from causalprompt.utils.Logger import get_logger

logger = get_logger(__name__)

METRIC_NAMES = (
    "pass_rate", "run_err_rate", "timeout_rate", "syn_err",
    "gold_sim_CB", "gold_sim_B", "mut_sim_CB", "mut_sim_B", "black_count",
)
AUXILIARY_NAMES = ("wrong_output_rate", "stability")
# +1 when larger is better
METRIC_DIRECTIONS: Dict[str, int] = {
    "pass_rate": 1, "run_err_rate": -1, "timeout_rate": -1, "syn_err": -1,
    "gold_sim_CB": 1, "gold_sim_B": 1, "mut_sim_CB": 1, "mut_sim_B": 1, "black_count": -1,
    "wrong_output_rate": -1, "stability": 1,
}


@dataclass(frozen=True)
class CodeMetricVector:
    """
    Code-quality metrics of one record. None marks a value that could not be
    computed (no tests, no gold solution, fewer than two solutions).
    """
    record_id: Optional[str] = None
    pass_rate: Optional[float] = None
    run_err_rate: Optional[float] = None
    timeout_rate: Optional[float] = None
    syn_err: Optional[float] = None
    gold_sim_CB: Optional[float] = None
    gold_sim_B: Optional[float] = None
    mut_sim_CB: Optional[float] = None
    mut_sim_B: Optional[float] = None
    black_count: Optional[float] = None
    wrong_output_rate: Optional[float] = None
    stability: Optional[float] = None
    parse_fallback: bool = False

    def as_dict(self) -> Dict[str, Optional[float]]:
        return {name: getattr(self, name) for name in METRIC_NAMES + AUXILIARY_NAMES}


def _mean(values: Sequence[float]) -> float:
    return sum(values) / len(values)


def _normalize_ws(source: str) -> str:
    return re.sub(r"\s+", " ", source).strip()


def stability(solutions: Sequence[str]) -> Optional[float]:
    """Share of ordered solution pairs that are identical up to whitespace."""
    if len(solutions) < 2:
        return None
    normalized = [_normalize_ws(s) for s in solutions]
    pairs = [(i, j) for i in range(len(normalized)) for j in range(len(normalized)) if i != j]
    return sum(normalized[i] == normalized[j] for i, j in pairs) / len(pairs)


def _status_rates(outcome) -> Dict[str, Fraction]:
    # per solution first, then across solutions; exact so the four rates sum to 1
    per_solution = []
    for row in outcome.cells:
        counts = {status: 0 for status in (PASS, WRONG_OUTPUT, RUNTIME_ERROR, TIMEOUT)}
        for cell in row:
            counts[cell.status] += 1
        per_solution.append({status: Fraction(count, len(row)) for status, count in counts.items()})
    k = len(per_solution)
    return {status: sum((rates[status] for rates in per_solution), Fraction(0)) / k
            for status in (PASS, WRONG_OUTPUT, RUNTIME_ERROR, TIMEOUT)}


def compute_metrics(record, gold: str, config: Optional[MetricsConfig] = None,
                    sandbox: Optional[Sandbox] = None) -> CodeMetricVector:
    """
    Metrics of a record's generated solutions. Rates average each solution's
    share of test outcomes; similarities and counts average over solutions.
    """
    config = config or MetricsConfig()
    solutions = list(record.solutions)
    if not solutions:
        raise DataError(f"record '{record.id}' has no solutions")
    sandbox = sandbox or Sandbox.from_config(config)

    values: Dict[str, Optional[float]] = {}
    if record.test_cases:
        rates = _status_rates(sandbox.run_tests(solutions, record.test_cases))
        values.update(pass_rate=float(rates[PASS]), run_err_rate=float(rates[RUNTIME_ERROR]),
                      timeout_rate=float(rates[TIMEOUT]), wrong_output_rate=float(rates[WRONG_OUTPUT]))
    else:
        logger.warning(f"Record '{record.id}' has no test cases; execution rates left empty")

    values["syn_err"] = _mean([count_syntax_errors(s) for s in solutions])
    values["black_count"] = _mean([style_violations(s) for s in solutions])

    similarity_args = dict(max_n=config.bleu_max_n, smoothing_k=config.bleu_smoothing_k)
    fallback = False
    if gold:
        scores = [codebleu_components(s, gold, tuple(config.codebleu_weights), **similarity_args) for s in solutions]
        fallback = any(score.parse_fallback for score in scores)
        values["gold_sim_CB"] = _mean([score.score for score in scores])
        values["gold_sim_B"] = _mean([source_bleu(s, gold, **similarity_args) for s in solutions])

    if len(solutions) >= 2:
        values["mut_sim_CB"] = mutual_similarity(solutions, "codebleu", weights=tuple(config.codebleu_weights),
                                                 **similarity_args)
        values["mut_sim_B"] = mutual_similarity(solutions, "bleu", **similarity_args)
        values["stability"] = stability(solutions)

    if fallback:
        logger.warning(f"Record '{record.id}': a solution failed to parse, CodeBLEU syntax component is 0")
    return CodeMetricVector(record_id=record.id, parse_fallback=fallback, **values)


def compute_all(records, gold_of, config: Optional[MetricsConfig] = None) -> List[CodeMetricVector]:
    """Metrics for every record; gold_of maps a record to its reference source."""
    config = config or MetricsConfig()
    sandbox = Sandbox.from_config(config)
    return [compute_metrics(record, gold_of(record), config, sandbox)
            for record in tqdm(records, desc="Code metrics")]


def save_metrics_csv(vectors: Sequence[CodeMetricVector], path: Union[str, Path]) -> Path:
    frame = pd.DataFrame([asdict(v) for v in vectors])
    return atomic_write_text(path, frame.to_csv(index=False, float_format="%.17g", lineterminator="\n"))


def load_metrics_csv(path: Union[str, Path]) -> List[CodeMetricVector]:
    frame = pd.read_csv(path, dtype={"record_id": str})
    known = {f.name for f in fields(CodeMetricVector)}
    vectors = []
    for row in frame.to_dict(orient="records"):
        kwargs = {}
        for key, value in row.items():
            if key not in known:
                continue
            if key == "parse_fallback":
                kwargs[key] = bool(value)
            elif key == "record_id":
                kwargs[key] = str(value)
            else:
                kwargs[key] = None if value is None or (isinstance(value, float) and math.isnan(value)) else float(value)
        vectors.append(CodeMetricVector(**kwargs))
    return vectors

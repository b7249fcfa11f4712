from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from sklearn.metrics import mean_squared_error, r2_score

from causalprompt.causal.CausalGraph import CausalGraph
from causalprompt.causal.Inference import AteEstimate, conditional_mean, estimate_ate, make_nuisance
from causalprompt.data.Matrix import LING, META, ObservationMatrix
from causalprompt.utils.Config import AnalysisConfig, DmlConfig
from causalprompt.utils.Errors import AlignmentError, DataError, InsufficientData, UnknownNode
from causalprompt.utils.Logger import get_logger

logger = get_logger(__name__)


@dataclass(frozen=True)
class FeatureEffect:
    feature: str
    estimate: AteEstimate
    responsible: bool = False

    @property
    def ate(self) -> float:
        return self.estimate.point


@dataclass
class AnalysisReport:
    meta_var: str
    ranked_metrics: List[Tuple[str, AteEstimate]]
    top_metrics: List[str]
    explanations: Dict[str, List[FeatureEffect]]
    unexplained: List[str] = field(default_factory=list)
    """Selected metrics without linguistic ancestors."""
    no_detectable_effect: bool = False

    def to_json(self) -> Dict:
        return {
            "meta_var": self.meta_var,
            "no_detectable_effect": self.no_detectable_effect,
            "ranked_metrics": [{"metric": c, **e.to_json()} for c, e in self.ranked_metrics],
            "top_metrics": list(self.top_metrics),
            "explanations": {
                c: [{"feature": f.feature, "responsible": f.responsible, **f.estimate.to_json()} for f in effects]
                for c, effects in self.explanations.items()
            },
            "unexplained": list(self.unexplained),
        }

    def rows(self) -> List[Dict[str, str]]:
        """One row per selected metric: sign, ATE and the responsible features."""
        ates = dict(self.ranked_metrics)
        rows = []
        for metric in self.top_metrics:
            point = ates[metric].point
            responsible = [f.feature for f in self.explanations.get(metric, []) if f.responsible]
            rows.append({
                "meta": self.meta_var,
                "metric": metric,
                "sign": "+" if point > 0 else "-" if point < 0 else "0",
                "ate": f"{point:.4f}",
                "features": ", ".join(responsible) if responsible else "(none)",
            })
        return rows


def _rank(items: Sequence[Tuple[str, AteEstimate]]) -> List[Tuple[str, AteEstimate]]:
    # |ATE| descending, then name ascending
    return sorted(items, key=lambda item: (-abs(item[1].point), item[0]))


def analyze(graph: CausalGraph, m: ObservationMatrix, meta_var: str, config: Optional[AnalysisConfig] = None,
            dml: Optional[DmlConfig] = None) -> AnalysisReport:
    """
    Effect of one meta-prompt variable on every code metric, the most affected
    metrics, and for each of them the linguistic ancestors ranked by their own
    effect when moved between the feature's means under M=0 and M=1.
    """
    config = config or AnalysisConfig()
    if meta_var not in graph.graph:
        raise UnknownNode(meta_var)
    if graph.tier(meta_var) != META:
        raise DataError(f"'{meta_var}' is not a meta-prompt variable")
    for value in (0, 1):
        conditional_mean(m, meta_var, (meta_var, value))

    metrics = [c for c in m.schema.metric_names if c not in m.constant]
    ranked = _rank([(c, estimate_ate(m, graph, meta_var, c, 1.0, 0.0, dml)) for c in metrics])
    top = [c for c, _ in ranked[:min(config.top_metrics, len(ranked))]]
    no_effect = not ranked or max(abs(e.point) for _, e in ranked) < config.negligible
    if no_effect:
        logger.warning(f"No detectable effect of '{meta_var}' on any metric")

    explanations: Dict[str, List[FeatureEffect]] = {}
    unexplained: List[str] = []
    for metric in top:
        features = sorted(graph.ancestors(metric, tier=LING)) if metric in graph.graph else []
        if not features:
            unexplained.append(metric)
            explanations[metric] = []
            continue
        effects = []
        for feature in features:
            x1 = conditional_mean(m, feature, (meta_var, 1))
            x0 = conditional_mean(m, feature, (meta_var, 0))
            effects.append((feature, estimate_ate(m, graph, feature, metric, x1, x0, dml)))
        ranked_features = _rank(effects)
        explanations[metric] = [FeatureEffect(f, e, i < config.top_features) for i, (f, e) in enumerate(ranked_features)]

    report = AnalysisReport(meta_var, ranked, top, explanations, unexplained, no_effect)
    for metric in top:
        for effect in report.explanations[metric]:
            if effect.feature not in graph.ancestors(metric):
                raise DataError(f"explanation feature '{effect.feature}' is not an ancestor of '{metric}'")
    return report


def analyze_many(graph: CausalGraph, m: ObservationMatrix, meta_vars: Sequence[str],
                 config: Optional[AnalysisConfig] = None, dml: Optional[DmlConfig] = None) -> List[AnalysisReport]:
    """Run analyze once per meta-prompt variable; variables missing from the graph are skipped."""
    reports = []
    for meta_var in meta_vars:
        if meta_var not in graph.graph:
            logger.warning(f"'{meta_var}' has no edges in the graph; skipped")
            continue
        reports.append(analyze(graph, m, meta_var, config, dml))
    return reports


def reports_markdown(reports: Sequence[AnalysisReport]) -> str:
    lines = ["| Meta-prompt | Code metric | Sign | ATE | Responsible features |",
             "|---|---|---|---|---|"]
    for report in reports:
        flag = " (no detectable effect)" if report.no_detectable_effect else ""
        for row in report.rows():
            lines.append(f"| {row['meta']}{flag} | {row['metric']} | {row['sign']} | {row['ate']} | {row['features']} |")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class MetricFit:
    metric: str
    r2: float
    mse: float
    predictors: Tuple[str, ...]
    n_train: int
    n_test: int


@dataclass
class VerificationReport:
    fits: List[MetricFit]
    test_fraction: float
    seed: int
    predictor: str

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([{
            "metric": f.metric, "r2": f.r2, "mse": f.mse, "n_predictors": len(f.predictors),
            "predictors": " ".join(f.predictors), "n_train": f.n_train, "n_test": f.n_test,
        } for f in self.fits])


def _verification_inputs(m: ObservationMatrix, predictors: Sequence[str],
                         original_ling: Optional[Mapping[str, Mapping[str, float]]]) -> np.ndarray:
    if original_ling is None:
        return m.columns(predictors)
    ling = set(m.schema.ling_names)
    columns = []
    for name in predictors:
        if name not in ling:
            columns.append(m.column(name))
            continue
        values = []
        for row_id in m.ids:
            if row_id not in original_ling:
                raise AlignmentError(row_id)
            if name not in original_ling[row_id]:
                raise DataError(f"original prompt of '{row_id}' has no feature '{name}'")
            values.append(float(original_ling[row_id][name]))
        columns.append(np.asarray(values, dtype=float))
    return np.column_stack(columns)


def verify_graph(graph: CausalGraph, m: ObservationMatrix, config: Optional[AnalysisConfig] = None,
                 original_ling: Optional[Mapping[str, Mapping[str, float]]] = None) -> VerificationReport:
    """
    Predict every metric from its meta-prompt and linguistic ancestors in the
    graph on a seeded hold-out split; metrics without such ancestors get the
    training mean. Out-of-sample R2 and MSE per metric.

    original_ling maps each row id to the linguistic features of the prompt it
    was rephrased from; when given, linguistic predictors take those values
    instead of the row's own.
    """
    config = config or AnalysisConfig()
    if m.n < config.min_n:
        raise InsufficientData(m.n, config.min_n)
    if original_ling is not None and len(m.ids) != m.n:
        raise DataError("original linguistic features need row ids on the matrix")
    order = np.random.default_rng(config.seed).permutation(m.n)
    n_test = max(1, int(round(m.n * config.test_fraction)))
    test, train = order[:n_test], order[n_test:]

    fits = []
    for metric in m.schema.metric_names:
        predictors: Tuple[str, ...] = ()
        if metric in graph.graph:
            allowed = set(m.schema.meta_names) | set(m.schema.ling_names)
            predictors = tuple(sorted(graph.ancestors(metric) & allowed))
        y = m.column(metric)
        if predictors:
            X = _verification_inputs(m, predictors, original_ling)
            model = make_nuisance(config.predictor, config.seed).fit(X[train], y[train])
            predicted = model.predict(X[test])
        else:
            predicted = np.full(len(test), y[train].mean())
        mse = float(mean_squared_error(y[test], predicted))
        r2 = float(r2_score(y[test], predicted)) if len(test) > 1 and np.ptp(y[test]) > 0 else (1.0 if mse == 0 else 0.0)
        fits.append(MetricFit(metric, r2, mse, predictors, len(train), len(test)))
        logger.info(f"Verification {metric}: R2={r2:.4f} MSE={mse:.4f} ({len(predictors)} predictors)")
    return VerificationReport(fits, config.test_fraction, config.seed, config.predictor)

from dataclasses import asdict, dataclass
from typing import Dict, Optional, Sequence, Set, Tuple

import numpy as np
from sklearn.ensemble import GradientBoostingRegressor
from sklearn.linear_model import LinearRegression, RidgeCV
from sklearn.model_selection import KFold

from causalprompt.causal.CausalGraph import CausalGraph
from causalprompt.data.Matrix import ObservationMatrix
from causalprompt.utils.Config import DmlConfig
from causalprompt.utils.Errors import DataError, EmptyStratum, InsufficientData, NotIdentifiable, UnknownNode
from causalprompt.utils.Logger import get_logger

logger = get_logger(__name__)

Z_95 = 1.959963984540054
RIDGE_ALPHAS = np.logspace(-6, 3, 10)


@dataclass(frozen=True)
class AteEstimate:
    treatment: str
    outcome: str
    x1: float
    x0: float
    point: float
    stderr: float
    ci95: Tuple[float, float]
    adjustment_set: Tuple[str, ...]
    n_used: int
    theta: float = 0.0
    """Effect of a unit change in the treatment; point = theta * (x1 - x0)."""

    def to_json(self) -> Dict:
        data = asdict(self)
        data["ci95"] = list(self.ci95)
        data["adjustment_set"] = list(self.adjustment_set)
        return data


def make_nuisance(kind: str, seed: int = 0):
    if kind == "ridge":
        return RidgeCV(alphas=RIDGE_ALPHAS)
    if kind == "linear":
        return LinearRegression()
    if kind == "stumps":
        return GradientBoostingRegressor(max_depth=1, n_estimators=200, learning_rate=0.1, random_state=seed)
    raise DataError(f"unknown nuisance model '{kind}'")


def _graph_parents(graph: CausalGraph, node: str) -> Set[str]:
    # variables dropped from the graph have no parents there
    return graph.parents(node) if node in graph.graph else set()


def _graph_descendants(graph: CausalGraph, node: str) -> Set[str]:
    return graph.descendants(node) if node in graph.graph else set()


def adjustment_set(graph: CausalGraph, treatment: str, outcome: str) -> Tuple[str, ...]:
    """Pa(treatment) together with the parents of the outcome that are not the treatment or its descendants."""
    descendants = _graph_descendants(graph, treatment)
    z = _graph_parents(graph, treatment) | (_graph_parents(graph, outcome) - {treatment} - descendants)
    return tuple(sorted(z))


def _theta_and_se(t_res: np.ndarray, y_res: np.ndarray) -> Tuple[float, float]:
    denom = float(np.sum(t_res * t_res))
    if denom <= 0:
        raise DataError("treatment has no variation left after adjustment")
    theta = float(np.sum(t_res * y_res)) / denom
    # HC0 sandwich
    psi = (y_res - theta * t_res) * t_res
    se = float(np.sqrt(np.sum(psi * psi))) / denom
    return theta, se


def _cross_fit(Z: np.ndarray, t: np.ndarray, y: np.ndarray, config: DmlConfig, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    t_res, y_res = np.zeros_like(t), np.zeros_like(y)
    folds = KFold(n_splits=config.folds, shuffle=True, random_state=seed)
    for train, test in folds.split(Z):
        y_model = make_nuisance(config.nuisance, seed).fit(Z[train], y[train])
        t_model = make_nuisance(config.nuisance, seed).fit(Z[train], t[train])
        y_res[test] = y[test] - y_model.predict(Z[test])
        t_res[test] = t[test] - t_model.predict(Z[test])
    return t_res, y_res


def estimate_ate(m: ObservationMatrix, graph: CausalGraph, treatment: str, outcome: str,
                 x1: float = 1.0, x0: float = 0.0, config: Optional[DmlConfig] = None,
                 adjust: Optional[Sequence[str]] = None) -> AteEstimate:
    """
    Average treatment effect of moving `treatment` from x0 to x1 on `outcome`,
    under the partially linear model, by double machine learning.

    The adjustment set comes from the graph unless `adjust` is given. With an
    empty set the estimate is the slope of the centered outcome on the
    centered treatment.
    """
    config = config or DmlConfig()
    for node in (treatment, outcome):
        if node not in m.names:
            raise UnknownNode(node)
    if treatment == outcome:
        raise DataError("treatment and outcome must differ")
    if m.n < config.min_n:
        raise InsufficientData(m.n, config.min_n)
    if treatment in _graph_descendants(graph, outcome):
        raise NotIdentifiable(treatment, outcome)

    z_names = tuple(adjust) if adjust is not None else adjustment_set(graph, treatment, outcome)
    for node in z_names:
        if node not in m.names:
            raise UnknownNode(node)
    t, y = m.column(treatment).astype(float), m.column(outcome).astype(float)

    if not z_names:
        theta, se = _theta_and_se(t - t.mean(), y - y.mean())
    else:
        Z = m.columns(z_names)
        thetas, ses = [], []
        for repetition in range(config.repetitions):
            t_res, y_res = _cross_fit(Z, t, y, config, config.seed + repetition)
            theta_r, se_r = _theta_and_se(t_res, y_res)
            thetas.append(theta_r)
            ses.append(se_r)
        theta = float(np.median(thetas))
        se = float(np.median([np.sqrt(s * s + (th - theta) ** 2) for s, th in zip(ses, thetas)]))

    gap = float(x1) - float(x0)
    point = theta * gap
    stderr = se * abs(gap)
    estimate = AteEstimate(treatment, outcome, float(x1), float(x0), point, stderr,
                           (point - Z_95 * stderr, point + Z_95 * stderr), z_names, m.n, theta)
    logger.info(f"ATE {treatment}->{outcome} = {point:.4f} (se {stderr:.4f}), adjusted for {list(z_names)}")
    return estimate


def conditional_mean(m: ObservationMatrix, variable: str, condition: Tuple[str, float]) -> float:
    """Mean of variable over the rows where the binary condition variable equals the value."""
    name, value = condition
    for node in (variable, name):
        if node not in m.names:
            raise UnknownNode(node)
    column = m.column(name)
    if not np.all((column == 0) | (column == 1)):
        raise DataError(f"condition variable '{name}' must be binary")
    rows = column == value
    if not rows.any():
        raise EmptyStratum(name, value)
    return float(m.column(variable)[rows].mean())

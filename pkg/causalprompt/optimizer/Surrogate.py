from typing import Dict, Optional, Tuple

import numpy as np
from sklearn.linear_model import LinearRegression

from causalprompt.blocks.codemetrics.CodeMetrics import METRIC_DIRECTIONS
from causalprompt.blocks.prompts.Intentions import IntentionVector
from causalprompt.causal.CausalGraph import CausalGraph
from causalprompt.data.Matrix import ObservationMatrix
from causalprompt.utils.Errors import LengthMismatch, UnknownMetric
from causalprompt.utils.Logger import get_logger

logger = get_logger(__name__)


class CausalSurrogate:
    """
    Linear structural equations fitted from the graph, used to predict a code
    metric for an intention vector without generating any code.

    Every node with parents gets a least-squares fit on its parents. Meta-prompt
    nodes take the vector's bits; other nodes without parents stay at their
    sample mean.
    """

    def __init__(self, graph: CausalGraph, m: ObservationMatrix, objective: str):
        if objective not in m.schema.metric_names:
            raise UnknownMetric(objective)
        self.graph = graph
        self.m = m
        self.objective = objective
        self.direction = METRIC_DIRECTIONS.get(objective, 1)
        self.order = graph.topological_order()
        self.equations: Dict[str, Tuple[Tuple[str, ...], np.ndarray, float]] = {}
        for node in self.order:
            parents = tuple(sorted(graph.parents(node)))
            if parents:
                model = LinearRegression().fit(m.columns(parents), m.column(node))
                self.equations[node] = (parents, np.asarray(model.coef_, dtype=float), float(model.intercept_))
        self.means = {name: float(m.column(name).mean()) for name in m.names}
        self._cache: Dict[Tuple[int, ...], float] = {}

    def propagate(self, vector: IntentionVector) -> Dict[str, float]:
        meta_names = self.m.schema.meta_names
        if len(vector) != len(meta_names):
            raise LengthMismatch(len(meta_names), len(vector))
        values = dict(self.means)
        values.update({name: float(bit) for name, bit in zip(meta_names, vector.bits)})
        for node in self.order:
            if node in self.equations:
                parents, coef, intercept = self.equations[node]
                values[node] = intercept + float(np.dot(coef, [values[p] for p in parents]))
        return values

    def expected(self, vector: IntentionVector, original_scale: bool = False) -> float:
        """E[objective | do(M = vector)] under the fitted equations."""
        if vector.bits not in self._cache:
            self._cache[vector.bits] = self.propagate(vector)[self.objective]
        value = self._cache[vector.bits]
        if original_scale and self.m.scaling and self.objective in self.m.scaling:
            mean, std = self.m.scaling[self.objective]
            value = value * std + mean
        return value

    def fitness(self, vector: IntentionVector) -> float:
        """Expected objective, negated for metrics where smaller is better."""
        return self.direction * self.expected(vector)


def surrogate_fitness(vector: IntentionVector, graph: CausalGraph, m: ObservationMatrix, objective: str,
                      surrogate: Optional[CausalSurrogate] = None) -> float:
    surrogate = surrogate or CausalSurrogate(graph, m, objective)
    return surrogate.fitness(vector)

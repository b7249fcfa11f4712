from dataclasses import dataclass, field
from typing import Dict, List, Optional

import networkx as nx
import numpy as np

from causalprompt.causal.CausalGraph import CausalGraph
from causalprompt.data.Matrix import LING, META, METRIC, ObservationMatrix, VariableSchema
from causalprompt.utils.Errors import DataError


@dataclass(frozen=True)
class Assignment:
    name: str
    tier: str
    coefficients: Dict[str, float] = field(default_factory=dict)
    intercept: float = 0.0
    noise_sd: float = 1.0
    bernoulli_p: Optional[float] = None
    """Set for binary exogenous variables, which take 1 with this probability."""


class SyntheticScm:
    """
    A linear structural causal model with zero-mean Gaussian noise, used to
    produce data whose causal effects are known by construction.
    """

    def __init__(self):
        self.assignments: Dict[str, Assignment] = {}
        self._graph = nx.DiGraph()

    def add_variable(self, name: str, tier: str, coefficients: Optional[Dict[str, float]] = None,
                     intercept: float = 0.0, noise_sd: float = 1.0, bernoulli_p: Optional[float] = None) -> "SyntheticScm":
        coefficients = dict(coefficients or {})
        if name in self.assignments:
            raise DataError(f"variable '{name}' already assigned")
        missing = [p for p in coefficients if p not in self.assignments]
        if missing:
            raise DataError(f"parents {missing} of '{name}' must be added first")
        if bernoulli_p is not None and coefficients:
            raise DataError("binary variables must be exogenous")
        if noise_sd < 0:
            raise DataError("noise_sd must be nonnegative")
        self.assignments[name] = Assignment(name, tier, coefficients, intercept, noise_sd, bernoulli_p)
        self._graph.add_node(name)
        self._graph.add_edges_from((parent, name) for parent in coefficients)
        return self

    @property
    def order(self) -> List[str]:
        return list(nx.topological_sort(self._graph))

    def sample(self, n: int, seed: int = 0) -> Dict[str, np.ndarray]:
        rng = np.random.default_rng(seed)
        values: Dict[str, np.ndarray] = {}
        for name in self.order:
            a = self.assignments[name]
            if a.bernoulli_p is not None:
                values[name] = (rng.random(n) < a.bernoulli_p).astype(float)
                continue
            x = np.full(n, a.intercept) + rng.normal(0.0, a.noise_sd, size=n)
            for parent, coefficient in a.coefficients.items():
                x = x + coefficient * values[parent]
            values[name] = x
        return values

    def schema(self) -> VariableSchema:
        names = list(self.assignments)
        return VariableSchema(
            tuple(n for n in names if self.assignments[n].tier == META),
            tuple(n for n in names if self.assignments[n].tier == LING),
            tuple(n for n in names if self.assignments[n].tier == METRIC),
        )

    def to_matrix(self, n: int, seed: int = 0) -> ObservationMatrix:
        values = self.sample(n, seed)
        schema = self.schema()
        rows = np.column_stack([values[name] for name in schema.names])
        return ObservationMatrix(schema, rows, ids=tuple(f"s{i}" for i in range(n)))

    def graph(self) -> CausalGraph:
        """The true graph, edges weighted by their coefficients."""
        tiers = {name: a.tier for name, a in self.assignments.items()}
        edges = [(p, name, c) for name, a in self.assignments.items() for p, c in a.coefficients.items()]
        return CausalGraph(tiers, edges)


def confounder_scm(noise_sd: float = 1.0) -> SyntheticScm:
    """Z confounds X and Y: X = 2Z + e1, Y = 10X + Z + e2, so E[Y | Z] = 21Z."""
    return (SyntheticScm()
            .add_variable("Z", LING, noise_sd=1.0)
            .add_variable("X", LING, {"Z": 2.0}, noise_sd=noise_sd)
            .add_variable("Y", METRIC, {"X": 10.0, "Z": 1.0}, noise_sd=noise_sd))


def chain_scm(effect_ml: float = 1.0, effect_lc: float = 1.0, noise_sd: float = 0.5) -> SyntheticScm:
    """M -> L1 -> C1 with a binary meta-prompt variable and an unrelated L2 and C2."""
    return (SyntheticScm()
            .add_variable("M", META, bernoulli_p=0.5)
            .add_variable("L1", LING, {"M": effect_ml}, noise_sd=noise_sd)
            .add_variable("L2", LING, noise_sd=1.0)
            .add_variable("C1", METRIC, {"L1": effect_lc}, noise_sd=noise_sd)
            .add_variable("C2", METRIC, noise_sd=1.0))

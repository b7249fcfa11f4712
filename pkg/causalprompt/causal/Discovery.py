from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
import scipy.linalg as slin
import scipy.optimize as sopt

from causalprompt.causal.CausalGraph import CausalGraph
from causalprompt.data.Matrix import CONSTANT_EPS, ObservationMatrix
from causalprompt.utils.Config import DiscoveryConfig
from causalprompt.utils.Errors import CycleAfterPrune, DataError, NonConvergence
from causalprompt.utils.Logger import get_logger

logger = get_logger(__name__)


def acyclicity(W: np.ndarray) -> float:
    """h(W) = trace(exp(W * W)) - d; zero exactly when the nonzero pattern of W is a DAG."""
    W = np.asarray(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise DataError("acyclicity needs a square matrix")
    return float(np.trace(slin.expm(W * W)) - W.shape[0])


def _acyclicity_with_grad(W: np.ndarray) -> Tuple[float, np.ndarray]:
    E = slin.expm(W * W)
    return float(np.trace(E) - W.shape[0]), E.T * W * 2


@dataclass
class SubgraphFit:
    W: np.ndarray
    converged: bool
    iterations: int
    h: float
    names: Tuple[str, ...] = ()

    def raise_if_failed(self):
        if not self.converged:
            raise NonConvergence(self.iterations, self.h)


def learn_subgraph(X: np.ndarray, mask: np.ndarray, config: Optional[DiscoveryConfig] = None) -> SubgraphFit:
    """
    Linear structure learning by continuous optimization.

    Minimizes (1/2n)||X - XW||^2 + lambda_l1 * |W|_1 subject to h(W) = 0 with an
    augmented Lagrangian; the inner problem is solved by L-BFGS-B over the
    positive and negative parts of W. Entries where mask is False are bound to 0.
    A run that stops above the tolerance is returned with converged=False.
    """
    config = config or DiscoveryConfig()
    X = np.asarray(X, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    n, d = X.shape
    if mask.shape != (d, d):
        raise DataError(f"mask shape {mask.shape} does not match {d} variables")
    if np.any(np.diag(mask)):
        raise DataError("mask must forbid self loops")
    if d == 0 or not mask.any():
        return SubgraphFit(np.zeros((d, d)), True, 0, 0.0)

    X = X - X.mean(axis=0, keepdims=True)
    lambda1 = config.lambda_l1

    def _adj(w):
        return (w[:d * d] - w[d * d:]).reshape([d, d])

    def _func(w):
        W = _adj(w)
        R = X - X @ W
        loss = 0.5 / n * (R ** 2).sum()
        G_loss = -1.0 / n * X.T @ R
        h, G_h = _acyclicity_with_grad(W)
        obj = loss + 0.5 * rho * h * h + alpha * h + lambda1 * w.sum()
        G_smooth = G_loss + (rho * h + alpha) * G_h
        return obj, np.concatenate((G_smooth + lambda1, -G_smooth + lambda1), axis=None)

    allowed = mask.ravel()
    bounds = [(0, None) if ok else (0, 0) for _ in range(2) for ok in allowed]
    w_est, rho, alpha, h = np.zeros(2 * d * d), 1.0, 0.0, np.inf
    iterations = 0
    for iterations in range(1, config.max_outer_iters + 1):
        w_new, h_new = w_est, h
        while rho < config.rho_max:
            solution = sopt.minimize(_func, w_est, method="L-BFGS-B", jac=True, bounds=bounds)
            w_new = solution.x
            h_new = acyclicity(_adj(w_new))
            if h_new > 0.25 * h:
                rho *= 10
            else:
                break
        w_est, h = w_new, h_new
        alpha += rho * h
        if h <= config.tolerance or rho >= config.rho_max:
            break

    W = _adj(w_est)
    W[~mask] = 0.0
    converged = h <= config.tolerance
    if not converged:
        logger.warning(f"Structure learning stopped at h={h:.3e} after {iterations} outer iterations")
    return SubgraphFit(W, converged, iterations, float(h))


def prune(W: np.ndarray, threshold: float, names: Optional[Sequence[str]] = None) -> List[Tuple[str, str, float]]:
    """Edges with |w| > threshold as (src, dst, weight); the kept pattern must be a DAG."""
    if threshold < 0:
        raise DataError("edge threshold must be nonnegative")
    W = np.asarray(W, dtype=float)
    names = list(names) if names is not None else [str(i) for i in range(W.shape[0])]
    sources, targets = np.nonzero(np.abs(W) > threshold)
    edges = [(names[i], names[j], float(W[i, j])) for i, j in zip(sources, targets)]
    pattern = nx.DiGraph()
    pattern.add_edges_from((u, v) for u, v, _ in edges)
    if not nx.is_directed_acyclic_graph(pattern):
        cycle = [u for u, _ in nx.find_cycle(pattern)]
        raise CycleAfterPrune(cycle)
    return edges


def tier_mask(sources: Sequence[bool], targets: Sequence[bool]) -> np.ndarray:
    """Allow i -> j when i is a source column and j a target column, never i -> i."""
    mask = np.outer(np.asarray(sources, dtype=bool), np.asarray(targets, dtype=bool))
    np.fill_diagonal(mask, False)
    return mask


def _usable(m: ObservationMatrix, names: Sequence[str]) -> List[str]:
    return [n for n in names if n not in m.constant and np.ptp(m.column(n)) > CONSTANT_EPS]


def two_step_discover(m: ObservationMatrix, config: Optional[DiscoveryConfig] = None) -> CausalGraph:
    """
    Learn the tiered graph in two independent fits: meta-prompt and linguistic
    columns with edges M->L and L->L, then linguistic and metric columns with
    edges L->C and C->C. The pruned edge sets are merged by node name and nodes
    left without edges are dropped. Constant columns never enter a fit.
    """
    config = config or DiscoveryConfig()
    meta = _usable(m, m.schema.meta_names)
    ling = _usable(m, m.schema.ling_names)
    metric = _usable(m, m.schema.metric_names)
    excluded = sorted(set(m.names) - set(meta) - set(ling) - set(metric))
    if excluded:
        logger.info(f"Excluded constant columns from discovery: {excluded}")
    if not meta or not ling or not metric:
        raise DataError("discovery needs non-constant meta-prompt, linguistic and metric columns")

    steps = [
        (meta + ling, tier_mask([True] * (len(meta) + len(ling)), [False] * len(meta) + [True] * len(ling))),
        (ling + metric, tier_mask([True] * (len(ling) + len(metric)), [False] * len(ling) + [True] * len(metric))),
    ]

    def fit(step):
        names, mask = step
        result = learn_subgraph(m.columns(names), mask, config)
        result.names = tuple(names)
        return result

    with ThreadPoolExecutor(max_workers=2) as pool:
        fits = list(pool.map(fit, steps))

    graph = CausalGraph(m.schema.tiers())
    for fit_result in fits:
        for src, dst, weight in prune(fit_result.W, config.edge_threshold, fit_result.names):
            graph.add_edge(src, dst, weight)
    removed = graph.remove_isolated()
    graph.metadata = {
        "converged": [f.converged for f in fits],
        "final_h": [f.h for f in fits],
        "iterations": [f.iterations for f in fits],
        "excluded": excluded,
        "isolated_removed": len(removed),
    }
    graph.audit()
    for f in fits:
        if not f.converged:
            logger.warning(f"Subgraph over {len(f.names)} variables did not reach h <= {config.tolerance}")
    logger.info(f"Discovered {graph!r}")
    return graph

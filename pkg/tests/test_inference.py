import numpy as np
import pytest

from causalprompt.causal.CausalGraph import CausalGraph
from causalprompt.causal.Inference import adjustment_set, conditional_mean, estimate_ate, make_nuisance
from causalprompt.causal.SyntheticScm import chain_scm, confounder_scm
from causalprompt.data.Matrix import LING, METRIC
from causalprompt.utils.Config import DmlConfig
from causalprompt.utils.Errors import (DataError, EmptyStratum, InsufficientData, NotIdentifiable,
                                       UnknownNode)


@pytest.fixture(scope="module")
def confounded():
    scm = confounder_scm()
    return scm.to_matrix(2000, seed=11), scm.graph()


def test_adjustment_set_blocks_confounder(confounded):
    _, graph = confounded
    assert adjustment_set(graph, "X", "Y") == ("Z",)
    assert adjustment_set(graph, "Z", "Y") == ()


def test_adjusted_effect_is_recovered(confounded):
    m, graph = confounded
    estimate = estimate_ate(m, graph, "X", "Y")
    assert estimate.adjustment_set == ("Z",)
    assert abs(estimate.point - 10.0) < 0.5
    assert estimate.ci95[0] < estimate.point < estimate.ci95[1]
    assert estimate.n_used == 2000


def test_omitting_confounder_biases_estimate(confounded):
    m, graph = confounded
    naive = estimate_ate(m, graph, "X", "Y", adjust=())
    assert abs(naive.point - 10.0) > 3 * naive.stderr
    assert naive.point == pytest.approx(10.4, abs=0.15)


def test_effect_scales_with_gap(confounded):
    m, graph = confounded
    unit = estimate_ate(m, graph, "X", "Y")
    doubled = estimate_ate(m, graph, "X", "Y", x1=3.0, x0=1.0)
    assert doubled.point == pytest.approx(2 * unit.point)
    assert estimate_ate(m, graph, "X", "Y", x1=2.0, x0=2.0).point == 0.0


def test_stumps_nuisance(confounded):
    m, graph = confounded
    estimate = estimate_ate(m, graph, "X", "Y", config=DmlConfig(nuisance="stumps", folds=3))
    assert abs(estimate.point - 10.0) < 1.0


def test_estimation_errors(confounded):
    m, graph = confounded
    with pytest.raises(NotIdentifiable):
        estimate_ate(m, graph, "Y", "X")
    with pytest.raises(InsufficientData):
        estimate_ate(m.take(np.arange(10)), graph, "X", "Y")
    with pytest.raises(UnknownNode):
        estimate_ate(m, graph, "Q", "Y")
    with pytest.raises(DataError):
        estimate_ate(m, graph, "X", "X")
    with pytest.raises(DataError):
        make_nuisance("forest")


def test_nodes_outside_graph_have_no_parents(confounded):
    m, _ = confounded
    sparse = CausalGraph({"X": LING, "Y": METRIC})
    estimate = estimate_ate(m, sparse, "X", "Y")
    assert estimate.adjustment_set == ()


def test_conditional_mean():
    m = chain_scm(effect_ml=3.0, noise_sd=0.1).to_matrix(400, seed=2)
    high = conditional_mean(m, "L1", ("M", 1))
    low = conditional_mean(m, "L1", ("M", 0))
    assert high - low == pytest.approx(3.0, abs=0.1)
    only_zero = m.take(np.flatnonzero(m.column("M") == 0))
    with pytest.raises(EmptyStratum):
        conditional_mean(only_zero, "L1", ("M", 1))
    with pytest.raises(DataError):
        conditional_mean(m, "L1", ("L2", 1))

import json
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Set, Tuple, Union

import networkx as nx

from causalprompt.data.Matrix import LING, META, METRIC, TIERS
from causalprompt.utils.Errors import DataError, OverlappingSets, UnknownNode
from causalprompt.utils.Files import atomic_write_text
from causalprompt.utils.Logger import get_logger

logger = get_logger(__name__)

TIER_COLORS = {META: "tab:orange", LING: "tab:blue", METRIC: "tab:green"}
TIER_RANK = {tier: rank for rank, tier in enumerate(TIERS)}


def _d_separator(graph: nx.DiGraph, x: Set[str], y: Set[str], z: Set[str]) -> bool:
    # networkx renamed d_separated to is_d_separator in 3.3
    if hasattr(nx, "is_d_separator"):
        return nx.is_d_separator(graph, x, y, z)
    return nx.d_separated(graph, x, y, z)


class CausalGraph:
    """
    A weighted DAG over meta-prompt (M), linguistic (L) and code-metric (C)
    variables. Meta-prompt variables are exogenous, and no edge leaves the
    metric tier towards M or L.
    """
    graph: nx.DiGraph
    metadata: Dict

    def __init__(self, tiers: Optional[Dict[str, str]] = None, edges: Iterable[Tuple[str, str, float]] = ()):
        self.graph = nx.DiGraph()
        self.metadata = {}
        for name, tier in (tiers or {}).items():
            self.add_node(name, tier)
        for src, dst, weight in edges:
            self.add_edge(src, dst, weight)

    # construction

    def add_node(self, name: str, tier: str):
        if tier not in TIERS:
            raise DataError(f"node '{name}' has unknown tier '{tier}'")
        self.graph.add_node(name, tier=tier)

    def add_edge(self, src: str, dst: str, weight: float = 1.0):
        self._require(src, dst)
        src_tier, dst_tier = self.tier(src), self.tier(dst)
        if dst_tier == META:
            raise DataError(f"edge {src}->{dst} points into the exogenous meta-prompt tier")
        if TIER_RANK[src_tier] > TIER_RANK[dst_tier]:
            raise DataError(f"edge {src}->{dst} goes backwards from tier {src_tier} to {dst_tier}")
        self.graph.add_edge(src, dst, weight=float(weight))

    def remove_isolated(self) -> List[str]:
        isolated = sorted(nx.isolates(self.graph))
        self.graph.remove_nodes_from(isolated)
        return isolated

    # queries

    def _require(self, *nodes: str):
        for node in nodes:
            if node not in self.graph:
                raise UnknownNode(node)

    @property
    def nodes(self) -> List[str]:
        return list(self.graph.nodes)

    def edges(self) -> List[Tuple[str, str, float]]:
        return [(u, v, d["weight"]) for u, v, d in self.graph.edges(data=True)]

    def weight(self, src: str, dst: str) -> float:
        return self.graph.edges[src, dst]["weight"]

    def tier(self, node: str) -> str:
        self._require(node)
        return self.graph.nodes[node]["tier"]

    def nodes_in(self, tier: str) -> List[str]:
        return [n for n, t in self.graph.nodes(data="tier") if t == tier]

    def parents(self, node: str) -> Set[str]:
        self._require(node)
        return set(self.graph.predecessors(node))

    def children(self, node: str) -> Set[str]:
        self._require(node)
        return set(self.graph.successors(node))

    def ancestors(self, node: str, tier: Optional[str] = None) -> Set[str]:
        """Transitive closure of the parents of node, optionally restricted to one tier."""
        self._require(node)
        found = nx.ancestors(self.graph, node)
        if tier is not None:
            found = {n for n in found if self.graph.nodes[n]["tier"] == tier}
        return found

    def descendants(self, node: str) -> Set[str]:
        self._require(node)
        return nx.descendants(self.graph, node)

    def d_separated(self, x: Iterable[str], y: Iterable[str], z: Iterable[str] = ()) -> bool:
        x, y, z = set(x), set(y), set(z)
        self._require(*(x | y | z))
        overlap = (x & y) | (x & z) | (y & z)
        if overlap:
            raise OverlappingSets(overlap)
        if not x or not y:
            return True
        return _d_separator(self.graph, x, y, z)

    def is_dag(self) -> bool:
        return nx.is_directed_acyclic_graph(self.graph)

    def topological_order(self) -> List[str]:
        # ties broken by tier, then name, so the order is reproducible
        return list(nx.lexicographical_topological_sort(
            self.graph, key=lambda n: (TIER_RANK[self.graph.nodes[n]["tier"]], n)))

    def audit(self):
        """Raise when the graph has a cycle or an edge breaking the tier order."""
        if not self.is_dag():
            raise DataError(f"graph has a cycle: {nx.find_cycle(self.graph)}")
        for src, dst in self.graph.edges:
            if self.tier(dst) == META or TIER_RANK[self.tier(src)] > TIER_RANK[self.tier(dst)]:
                raise DataError(f"edge {src}->{dst} violates the tier order")

    # export

    def to_json(self) -> Dict:
        return {
            "nodes": [{"name": n, "tier": t} for n, t in self.graph.nodes(data="tier")],
            "edges": [{"src": u, "dst": v, "weight": w} for u, v, w in self.edges()],
            "metadata": self.metadata,
        }

    @classmethod
    def from_json(cls, data: Dict) -> "CausalGraph":
        graph = cls({n["name"]: n["tier"] for n in data["nodes"]},
                    [(e["src"], e["dst"], e["weight"]) for e in data["edges"]])
        graph.metadata = dict(data.get("metadata", {}))
        graph.audit()
        return graph

    def save(self, path: Union[str, Path]) -> Path:
        return atomic_write_text(path, json.dumps(self.to_json(), indent=2) + "\n")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "CausalGraph":
        with open(path, "r", encoding="utf-8") as handle:
            return cls.from_json(json.load(handle))

    def to_dot(self, path: Union[str, Path]) -> Optional[Path]:
        """Write a DOT file through pygraphviz; skipped with a warning when it is missing."""
        try:
            from networkx.drawing.nx_agraph import to_agraph
        except ImportError:
            logger.warning("pygraphviz is not installed; DOT export skipped")
            return None
        try:
            agraph = to_agraph(self.graph)
        except ImportError:
            logger.warning("pygraphviz is not installed; DOT export skipped")
            return None
        for node in agraph.nodes():
            node.attr["color"] = TIER_COLORS[self.graph.nodes[str(node)]["tier"]].replace("tab:", "")
        for edge in agraph.edges():
            edge.attr["label"] = f"{self.weight(edge[0], edge[1]):.2f}"
        return atomic_write_text(path, agraph.to_string())

    def __len__(self) -> int:
        return self.graph.number_of_nodes()

    def __repr__(self):
        return f"CausalGraph({self.graph.number_of_nodes()} nodes, {self.graph.number_of_edges()} edges)"


def graph_stats(graph: CausalGraph) -> Dict[str, int]:
    """Node counts per tier and edge counts per tier pair, plus totals."""
    stats = {"nodes": len(graph), "edges": graph.graph.number_of_edges()}
    for tier in TIERS:
        stats[f"nodes_{tier}"] = len(graph.nodes_in(tier))
    for src, dst, _ in graph.edges():
        key = f"edges_{graph.tier(src)}{graph.tier(dst)}"
        stats[key] = stats.get(key, 0) + 1
    return stats


def render_graph(graph: CausalGraph, path: Union[str, Path], title: str = "") -> Path:
    """Draw the DAG in three columns, one per tier, nodes colored by tier."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    layered = graph.graph.copy()
    for node, tier in layered.nodes(data="tier"):
        layered.nodes[node]["layer"] = TIER_RANK[tier]
    positions = nx.multipartite_layout(layered, subset_key="layer") if len(layered) else {}
    colors = [TIER_COLORS[t] for _, t in layered.nodes(data="tier")]

    figure, axis = plt.subplots(figsize=(max(6, len(layered) * 0.35), 8))
    nx.draw_networkx(layered, positions, ax=axis, node_color=colors, node_size=600, font_size=7,
                     arrows=True, edge_color="gray")
    axis.set_title(title or repr(graph))
    axis.axis("off")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    figure.savefig(path, bbox_inches="tight")
    plt.close(figure)
    return path

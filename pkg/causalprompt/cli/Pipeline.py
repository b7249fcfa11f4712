import json
from dataclasses import dataclass, field
from hashlib import sha256
from importlib import resources
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import pandas as pd

from causalprompt.agents.Rephraser.RephraseAgent import RephraseAgent, mock_code_fixtures
from causalprompt.blocks.codemetrics.CodeMetrics import compute_all, load_metrics_csv, save_metrics_csv
from causalprompt.blocks.linguistics.Features import FeatureVector, extract_features, select_registry
from causalprompt.blocks.prompts.Intentions import DEFAULT_REGISTRY, Intention, IntentionVector, decode, load_registry
from causalprompt.causal.Analysis import analyze_many, reports_markdown, verify_graph
from causalprompt.causal.CausalGraph import CausalGraph, graph_stats, render_graph
from causalprompt.causal.Discovery import two_step_discover
from causalprompt.causal.Inference import estimate_ate
from causalprompt.data.Dataset import gold_solution, index_by_id, load_dataset, save_dataset
from causalprompt.data.Matrix import (ObservationMatrix, VariableSchema, assemble_matrix, drop_uncorrelated,
                                      load_matrix, standardize)
from causalprompt.models.Models import AuditLog, ModelBase, create_model, derive_mock_programs
from causalprompt.optimizer.Genetic import best_single, optimize
from causalprompt.optimizer.Surrogate import CausalSurrogate
from causalprompt.utils.Config import PipelineConfig, derive_seed
from causalprompt.utils.Errors import AlignmentError, CausalPromptError, DataError, StageError, StageInputMissing
from causalprompt.utils.Files import atomic_write_text, file_sha256
from causalprompt.utils.Logger import get_logger

logger = get_logger(__name__)

MANIFEST = "manifest.json"
AUDIT_LOG = "llm_audit.jsonl"
BUNDLED_DATASET = "toy_problems.jsonl"


@dataclass(frozen=True)
class Stage:
    """
    One pipeline step: the artifacts it reads and writes (relative to the output
    directory), the config keys its result depends on, and the function doing
    the work. `extras` are written too but not hashed into the manifest.
    """
    name: str
    inputs: Tuple[str, ...]
    outputs: Tuple[str, ...]
    config_keys: Tuple[str, ...]
    run: Callable[["Pipeline"], None]
    version: str = "1"
    extras: Tuple[str, ...] = ()


def bundled_dataset() -> Path:
    return Path(str(resources.files("causalprompt.resources").joinpath(BUNDLED_DATASET)))


def _dataset_format(path: Path) -> str:
    return "csv" if path.suffix.lower() == ".csv" else "jsonl"


def _write_json(path: Path, payload) -> Path:
    return atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _write_frame(path: Path, frame: pd.DataFrame) -> Path:
    return atomic_write_text(path, frame.to_csv(index=False, float_format="%.17g", lineterminator="\n"))


@dataclass
class Pipeline:
    """Runs stages over one output directory and keeps its manifest."""
    config: PipelineConfig
    output_dir: Path = field(init=False)
    registry: Tuple[Intention, ...] = field(init=False)
    _client: Optional[ModelBase] = field(default=None, init=False)

    def __post_init__(self):
        self.config = self.config.seeded()
        self.output_dir = Path(self.config.output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.registry = load_registry(self.config.registry) if self.config.registry else tuple(DEFAULT_REGISTRY)

    def path(self, name: str) -> Path:
        return self.output_dir / name

    def require(self, stage: str, *names: str):
        for name in names:
            if not self.path(name).exists():
                raise StageInputMissing(stage, str(self.path(name)))

    @property
    def dataset_source(self) -> Path:
        return Path(self.config.dataset) if self.config.dataset else bundled_dataset()

    @property
    def client(self):
        if self._client is None:
            self._client = create_model(self.config.llm, AuditLog(self.path(AUDIT_LOG)))
        return self._client

    def agent(self) -> RephraseAgent:
        return RephraseAgent(self.client, self.config.llm, self.registry)

    def schema(self, feature_names: Sequence[str]) -> VariableSchema:
        return VariableSchema(tuple(i.id for i in self.registry), tuple(feature_names),
                              tuple(self.config.metric_names))

    def matrix(self) -> ObservationMatrix:
        """The screened matrix, standardized the same way for every consumer."""
        return standardize(load_matrix(self.path("matrix.csv")))

    def graph(self) -> CausalGraph:
        return CausalGraph.load(self.path("graph.json"))

    # manifest

    def load_manifest(self) -> Dict:
        path = self.path(MANIFEST)
        if not path.exists():
            return {}
        try:
            with open(path, "r", encoding="utf-8") as handle:
                return json.load(handle)
        except json.JSONDecodeError:
            logger.warning(f"Ignoring unreadable manifest {path}")
            return {}

    def config_section(self, keys: Sequence[str]) -> str:
        dumped = self.config.model_dump(mode="json")
        section = {key: dumped.get(key) for key in keys}
        return json.dumps(section, sort_keys=True)

    def input_hashes(self, stage: Stage) -> Dict[str, str]:
        hashes = {name: file_sha256(self.path(name)) for name in stage.inputs}
        if stage.name == "ingest":
            hashes["source:" + self.dataset_source.name] = file_sha256(self.dataset_source)
        return hashes

    def stage_entry(self, stage: Stage, inputs: Dict[str, str]) -> Dict:
        return {
            "version": stage.version,
            "config": sha256(self.config_section(stage.config_keys).encode("utf-8")).hexdigest(),
            "inputs": inputs,
            "outputs": {name: file_sha256(self.path(name)) for name in stage.outputs},
        }

    def up_to_date(self, stage: Stage, manifest: Dict, inputs: Dict[str, str]) -> bool:
        recorded = manifest.get("stages", {}).get(stage.name)
        if not recorded:
            return False
        for name in stage.outputs:
            if not self.path(name).exists():
                return False
        current = self.stage_entry(stage, inputs)
        return recorded == current

    def write_manifest(self, stages: Dict[str, Dict]) -> Path:
        payload = {
            "config_hash": self.config.config_hash(),
            "seed": self.config.seed,
            "stages": dict(sorted(stages.items())),
        }
        return _write_json(self.path(MANIFEST), payload)

    def run_stage(self, stage: Stage, manifest: Dict) -> Dict:
        if stage.name == "ingest":
            if not self.dataset_source.exists():
                raise StageInputMissing(stage.name, str(self.dataset_source))
        self.require(stage.name, *stage.inputs)
        inputs = self.input_hashes(stage)
        if self.up_to_date(stage, manifest, inputs):
            logger.info(f"Stage '{stage.name}' is up to date; skipped")
            return manifest["stages"][stage.name]
        logger.info(f"Stage '{stage.name}' started")
        try:
            stage.run(self)
        except CausalPromptError:
            logger.error(f"Stage '{stage.name}' failed; artifacts not written: {list(stage.outputs)}")
            raise
        except Exception as error:
            logger.error(f"Stage '{stage.name}' failed; artifacts not written: {list(stage.outputs)}")
            raise StageError(f"stage '{stage.name}' failed: {error}") from error
        entry = self.stage_entry(stage, inputs)
        logger.info(f"Stage '{stage.name}' finished: {', '.join(str(self.path(n)) for n in stage.outputs)}")
        return entry


# stage bodies

def _ingest(p: Pipeline):
    source = p.dataset_source
    records = load_dataset(source, _dataset_format(source))
    for record in records:
        if len(record.intention_vector) != len(p.registry):
            raise DataError(f"record '{record.id}' has {len(record.intention_vector)} intention bits, "
                            f"registry has {len(p.registry)}")
    save_dataset(records, p.path("dataset.jsonl"))


def _rephrase(p: Pipeline):
    records = load_dataset(p.path("dataset.jsonl"))
    rephrased = p.agent().rephrase_dataset(records, p.config.combos_per_question,
                                           derive_seed(p.config.seed, "rephrase"))
    save_dataset(rephrased, p.path("rephrased.jsonl"))


def _generate(p: Pipeline):
    records = load_dataset(p.path("rephrased.jsonl"))
    if p.config.llm.mock:
        p.client.code_fixtures = mock_code_fixtures(records, p.config.llm.n_solutions, derive_mock_programs)
    save_dataset(p.agent().generate_solutions(records), p.path("generated.jsonl"))


def _analysis_records(p: Pipeline):
    records = load_dataset(p.path("generated.jsonl"))
    return records, [r for r in records if not r.is_original]


def _features(p: Pipeline):
    _, records = _analysis_records(p)
    registry = select_registry(p.config.features)
    rows = []
    for record in records:
        vector = extract_features(record.question_text, registry, record.id)
        rows.append({"id": record.id, **vector.as_dict()})
    frame = pd.DataFrame(rows, columns=["id"] + [f.name for f in registry])
    _write_frame(p.path("features.csv"), frame)


def _metrics(p: Pipeline):
    records, analysed = _analysis_records(p)
    by_id = index_by_id(records)
    with_solutions = [r for r in analysed if r.solutions]
    if len(with_solutions) < len(analysed):
        logger.warning(f"{len(analysed) - len(with_solutions)} records have no generated solutions; skipped")
    vectors = compute_all(with_solutions, lambda record: gold_solution(record, by_id), p.config.metrics)
    save_metrics_csv(vectors, p.path("metrics.csv"))


def load_features_csv(path: Path) -> Dict[str, FeatureVector]:
    frame = pd.read_csv(path, dtype={"id": str})
    names = tuple(c for c in frame.columns if c != "id")
    return {str(row["id"]): FeatureVector(names, tuple(row[n] for n in names), str(row["id"]))
            for row in frame.to_dict(orient="records")}


def _discover(p: Pipeline):
    _, records = _analysis_records(p)
    features = load_features_csv(p.path("features.csv"))
    metrics = {v.record_id: v for v in load_metrics_csv(p.path("metrics.csv"))}
    records = [r for r in records if r.id in metrics]
    missing = [r.id for r in records if r.id not in features]
    if missing:
        raise AlignmentError(missing[0])
    feature_names = next(iter(features.values())).names if features else ()
    raw = assemble_matrix(records, [features[r.id] for r in records], [metrics[r.id] for r in records],
                          p.schema(feature_names))
    screened = drop_uncorrelated(raw, p.config.correlation_alpha)
    screened.save_csv(p.path("matrix.csv"))

    graph = two_step_discover(standardize(screened), p.config.discovery)
    graph.save(p.path("graph.json"))
    graph.to_dot(p.path("graph.dot"))
    render_graph(graph, p.path("graph.png"))
    logger.info(f"Graph statistics: {graph_stats(graph)}")


def _analyze(p: Pipeline):
    m, graph = p.matrix(), p.graph()
    meta_vars = list(p.config.meta_vars) or list(m.schema.meta_names)
    reports = analyze_many(graph, m, meta_vars, p.config.analysis, p.config.dml)
    _write_json(p.path("analysis.json"), [r.to_json() for r in reports])
    atomic_write_text(p.path("analysis.md"), reports_markdown(reports))


def _original_ling(p: Pipeline, m: ObservationMatrix) -> Dict[str, Dict[str, float]]:
    records, _ = _analysis_records(p)
    by_id = index_by_id(records)
    registry = select_registry(m.schema.ling_names)
    cache: Dict[str, Dict[str, float]] = {}
    original = {}
    for row_id in m.ids:
        if row_id not in by_id or by_id[row_id].origin_id not in by_id:
            raise AlignmentError(row_id)
        origin = by_id[by_id[row_id].origin_id]
        if origin.id not in cache:
            cache[origin.id] = extract_features(origin.question_text, registry, origin.id).as_dict()
        original[row_id] = cache[origin.id]
    return original


def _verify(p: Pipeline):
    m = p.matrix()
    report = verify_graph(p.graph(), m, p.config.analysis, _original_ling(p, m))
    _write_frame(p.path("verification.csv"), report.to_frame())


def _candidate(surrogate: CausalSurrogate, vector: IntentionVector, registry) -> Dict:
    return {
        "vector": vector.to_string(),
        "intentions": decode(vector, registry),
        "fitness": surrogate.fitness(vector),
        "expected": surrogate.expected(vector, original_scale=True),
    }


def comparison_template(objective: str, rows: Dict[str, Dict]) -> str:
    """Markdown table to fill with live measurements, surrogate estimates alongside."""
    single, ours = rows["single"], rows["ours"]
    lines = [
        f"Surrogate objective: {objective}",
        "",
        f"| Metric | Original | Single ({', '.join(single['intentions'])}) | Ours ({', '.join(ours['intentions']) or 'none'}) |",
        "|---|---|---|---|",
        "| gold_sim |  |  |  |",
        "| mut_sim |  |  |  |",
        f"| {objective} (surrogate) | {rows['original']['expected']:.4f} | {single['expected']:.4f} | {ours['expected']:.4f} |",
    ]
    return "\n".join(lines) + "\n"


def _optimize(p: Pipeline):
    m, graph = p.matrix(), p.graph()
    objective = p.config.objective
    best, trace = optimize(graph, m, objective, p.config.ga, p.registry)
    surrogate = CausalSurrogate(graph, m, objective)
    single, _ = best_single(surrogate.fitness, len(p.registry))
    rows = {
        "original": _candidate(surrogate, IntentionVector.zeros(len(p.registry)), p.registry),
        "single": _candidate(surrogate, single, p.registry),
        "ours": _candidate(surrogate, best, p.registry),
    }
    payload = {"objective": objective, "direction": surrogate.direction,
               "ga": p.config.ga.model_dump(mode="json"), **rows}
    _write_json(p.path("optimizer.json"), payload)
    _write_frame(p.path("trace.csv"), trace.to_frame())
    atomic_write_text(p.path("comparison_template.md"), comparison_template(objective, rows))


STAGES: Tuple[Stage, ...] = (
    Stage("ingest", (), ("dataset.jsonl",), ("dataset", "registry"), _ingest),
    Stage("rephrase", ("dataset.jsonl",), ("rephrased.jsonl",),
          ("llm", "registry", "combos_per_question", "seed"), _rephrase),
    Stage("generate", ("rephrased.jsonl",), ("generated.jsonl",), ("llm",), _generate),
    Stage("features", ("generated.jsonl",), ("features.csv",), ("features",), _features),
    Stage("metrics", ("generated.jsonl",), ("metrics.csv",), ("metrics",), _metrics),
    Stage("discover", ("generated.jsonl", "features.csv", "metrics.csv"), ("matrix.csv", "graph.json"),
          ("registry", "metric_names", "correlation_alpha", "discovery", "seed"), _discover,
          extras=("graph.dot", "graph.png")),
    Stage("analyze", ("matrix.csv", "graph.json"), ("analysis.json", "analysis.md"),
          ("meta_vars", "analysis", "dml", "seed"), _analyze),
    Stage("optimize", ("matrix.csv", "graph.json"), ("optimizer.json", "trace.csv", "comparison_template.md"),
          ("registry", "objective", "ga", "seed"), _optimize),
    Stage("verify", ("generated.jsonl", "matrix.csv", "graph.json"), ("verification.csv",),
          ("features", "analysis", "seed"), _verify),
)
STAGE_NAMES = tuple(s.name for s in STAGES)


def run_pipeline(config: PipelineConfig, stages: Sequence[str] = STAGE_NAMES) -> Dict:
    """
    Run the requested stages in dependency order and return the manifest.

    A stage whose inputs, config section and outputs match the manifest is
    skipped. Every artifact is written atomically; the manifest is rewritten
    after each finished stage.
    """
    unknown = sorted(set(stages) - set(STAGE_NAMES))
    if unknown:
        raise DataError(f"unknown stages {unknown}; choose from {list(STAGE_NAMES)}")
    pipeline = Pipeline(config)
    manifest = pipeline.load_manifest()
    if manifest.get("config_hash") not in (None, pipeline.config.config_hash()):
        logger.info("Configuration changed since the last run; stages are re-checked against their sections")
    entries: Dict[str, Dict] = dict(manifest.get("stages", {}))
    for stage in STAGES:
        if stage.name not in stages:
            continue
        entries[stage.name] = pipeline.run_stage(stage, manifest)
        pipeline.write_manifest(entries)
    return pipeline.load_manifest()


def ate_from_artifacts(config: PipelineConfig, treatment: str, outcome: str, x1: float = 1.0,
                       x0: float = 0.0) -> Dict:
    """ATE between two matrix columns using the stored graph; written to ate.json and returned."""
    pipeline = Pipeline(config)
    pipeline.require("ate", "matrix.csv", "graph.json")
    estimate = estimate_ate(pipeline.matrix(), pipeline.graph(), treatment, outcome, x1, x0, pipeline.config.dml)
    payload = estimate.to_json()
    _write_json(pipeline.path("ate.json"), payload)
    return payload


def discovered_stats(config: PipelineConfig) -> Dict[str, int]:
    pipeline = Pipeline(config)
    pipeline.require("discover", "graph.json")
    return graph_stats(pipeline.graph())


def stage_outputs(names: Sequence[str]) -> List[str]:
    return [out for stage in STAGES if stage.name in names for out in stage.outputs + stage.extras]

from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from tqdm import tqdm

from causalprompt.agents.Rephraser.modelProcesses import RephraserModelProcesses, strip_code_fences
from causalprompt.blocks.prompts.Intentions import DEFAULT_REGISTRY, Intention, IntentionVector, check_length
from causalprompt.blocks.prompts.PromptTemplate import build_code_prompt, build_meta_prompt
from causalprompt.data.Dataset import PromptRecord
from causalprompt.models.Models import ModelBase
from causalprompt.utils.Config import LLMConfig
from causalprompt.utils.Errors import DataError, EmptyResponse
from causalprompt.utils.Logger import get_logger

logger = get_logger(__name__)


def rephrase_question(question: str, selection: IntentionVector, client: ModelBase,
                      temperature: Optional[float] = 0.7, max_tokens: int = 2000,
                      registry: Sequence[Intention] = DEFAULT_REGISTRY, record_id: str = "") -> str:
    """Rephrase one question with the meta-prompt of the selection; the reply is returned verbatim."""
    prompt = build_meta_prompt(question, selection, registry)
    selected = selection.selected(registry)
    texts = RephraserModelProcesses(client).generate_text(
        prompt, max_tokens=max_tokens, temperature=temperature, purpose="rephrase", request_id=record_id,
        metadata={
            "record_id": record_id,
            "question": question,
            "selection": selection.to_string(),
            "intentions": [i.id for i in selected],
            "surface_texts": [i.surface_text for i in selected],
        },
    )
    if texts[0] is None:
        raise EmptyResponse(record_id)
    return texts[0]


def generate_code(question: str, client: ModelBase, n: int = 3, max_tokens: int = 2000,
                  temperature: Optional[float] = None, record_id: str = "") -> List[str]:
    """
    n independent solutions for a question, fences stripped, in slot order.
    Slots with an empty response are skipped and logged.
    """
    if n < 1:
        raise DataError("generate_code needs n >= 1")
    texts = RephraserModelProcesses(client).generate_text(
        build_code_prompt(question), max_tokens=max_tokens, temperature=temperature, k=n, purpose="code",
        request_id=record_id, metadata={"record_id": record_id, "question": question},
    )
    empty = [slot for slot, text in enumerate(texts) if text is None]
    if empty:
        logger.warning(f"Record '{record_id}': empty responses in slots {empty}")
    return [strip_code_fences(text) for text in texts if text is not None]


def plan_selections(registry_size: int, combos: int, rng: np.random.Generator) -> List[IntentionVector]:
    """
    Selections to try for one question: the all-zero control, every single
    intention, then `combos` distinct random vectors with at least two bits set.
    """
    plan = [IntentionVector.zeros(registry_size)]
    plan += [IntentionVector.one_hot(registry_size, i) for i in range(registry_size)]
    seen = {v.bits for v in plan}
    limit = 2 ** registry_size - registry_size - 1
    target = min(combos, limit)
    while len(plan) < registry_size + 1 + target:
        bits = tuple(int(b) for b in rng.integers(0, 2, size=registry_size))
        if sum(bits) < 2 or bits in seen:
            continue
        seen.add(bits)
        plan.append(IntentionVector(bits))
    return plan


def rephrased_id(origin_id: str, selection: IntentionVector) -> str:
    return f"{origin_id}-r{selection.to_string()}"


class RephraseAgent:
    """
    Drives the rephrase and generate stages over a dataset: every original
    question is rephrased under a plan of intention selections, then code is
    generated for every rephrased question.
    """
    client: ModelBase
    config: LLMConfig
    registry: Sequence[Intention]

    def __init__(self, client: ModelBase, config: Optional[LLMConfig] = None,
                 registry: Sequence[Intention] = DEFAULT_REGISTRY):
        self.client = client
        self.config = config or LLMConfig()
        self.registry = tuple(registry)

    def rephrase_record(self, original: PromptRecord, selection: IntentionVector) -> PromptRecord:
        check_length(selection, self.registry)
        record_id = rephrased_id(original.id, selection)
        text = rephrase_question(original.question_text, selection, self.client,
                                 temperature=self.config.rephrase_temperature, max_tokens=self.config.max_tokens,
                                 registry=self.registry, record_id=record_id)
        return PromptRecord(id=record_id, question_text=text, origin_id=original.id, intention_vector=selection,
                            solutions=[], test_cases=list(original.test_cases), difficulty=original.difficulty)

    def rephrase_dataset(self, records: Sequence[PromptRecord], combos_per_question: int = 2,
                         seed: int = 0) -> List[PromptRecord]:
        """Originals followed by their rephrasings; records that fail are skipped and logged."""
        rng = np.random.default_rng(seed)
        originals = [r for r in records if r.is_original]
        jobs = [(original, selection) for original in originals
                for selection in plan_selections(len(self.registry), combos_per_question, rng)]
        rephrased: List[PromptRecord] = []
        for original, selection in tqdm(jobs, desc="Rephrasing"):
            try:
                rephrased.append(self.rephrase_record(original, selection))
            except EmptyResponse as error:
                logger.warning(str(error))
        logger.info(f"Rephrased {len(originals)} questions into {len(rephrased)} prompts")
        return list(originals) + rephrased

    def generate_solutions(self, records: Sequence[PromptRecord]) -> List[PromptRecord]:
        """Fill the solutions of every rephrased record; originals keep their reference solutions."""
        out: List[PromptRecord] = []
        for record in tqdm(records, desc="Generating code"):
            if record.is_original:
                out.append(record)
                continue
            solutions = generate_code(record.question_text, self.client, n=self.config.n_solutions,
                                      max_tokens=self.config.max_tokens,
                                      temperature=self.config.generation_temperature, record_id=record.id)
            out.append(record.model_copy(update={"solutions": solutions}))
        return out


def mock_code_fixtures(records: Sequence[PromptRecord], n: int,
                       derive: Callable[[str, str, int], List[str]]) -> Dict[str, List[str]]:
    """Programs per question text for the mock model, derived from each origin's reference solution."""
    by_id = {r.id: r for r in records}
    fixtures: Dict[str, List[str]] = {}
    for record in records:
        origin = by_id.get(record.origin_id)
        gold = origin.solutions[0] if origin is not None and origin.solutions else ""
        fixtures[record.question_text] = derive(record.question_text, gold, n)
    return fixtures

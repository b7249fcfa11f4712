from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from causalprompt.blocks.prompts.Intentions import DEFAULT_REGISTRY, Intention, IntentionVector, decode
from causalprompt.causal.CausalGraph import CausalGraph
from causalprompt.data.Matrix import ObservationMatrix
from causalprompt.optimizer.Surrogate import CausalSurrogate
from causalprompt.utils.Config import GaConfig
from causalprompt.utils.Errors import DataError, LengthMismatch
from causalprompt.utils.Logger import get_logger

logger = get_logger(__name__)

INIT_STREAM = 0x5EED
MIN_LENGTH = 3


def _rng(seed: int, *key: int) -> np.random.Generator:
    # one independent stream per (generation, individual)
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def crossover(a: IntentionVector, b: IntentionVector, rng: np.random.Generator,
              cuts: Optional[Tuple[int, int]] = None) -> Tuple[IntentionVector, IntentionVector]:
    """
    Two-point crossover. Cut points i < j are drawn uniformly; the children
    swap the segment of positions i through j, both ends included.
    """
    if len(a) != len(b):
        raise LengthMismatch(len(a), len(b))
    if len(a) < MIN_LENGTH:
        raise DataError(f"crossover needs vectors of length >= {MIN_LENGTH}")
    if cuts is None:
        i, j = sorted(int(c) for c in rng.choice(len(a), size=2, replace=False))
    else:
        i, j = cuts
    if not 0 <= i < j < len(a):
        raise DataError(f"invalid cut points ({i}, {j}) for length {len(a)}")
    child_a = a.bits[:i] + b.bits[i:j + 1] + a.bits[j + 1:]
    child_b = b.bits[:i] + a.bits[i:j + 1] + b.bits[j + 1:]
    return IntentionVector(child_a), IntentionVector(child_b)


def mutate(v: IntentionVector, rate: float, rng: np.random.Generator) -> IntentionVector:
    """Flip every bit independently with probability rate."""
    if not 0 <= rate <= 1:
        raise DataError("mutation rate must be in [0, 1]")
    flips = rng.random(len(v)) < rate
    return IntentionVector(tuple(int(bit) ^ int(flip) for bit, flip in zip(v.bits, flips)))


@dataclass(frozen=True)
class GenerationRecord:
    generation: int
    best: IntentionVector
    best_fitness: float
    mean_fitness: float


class SearchTrace(list):
    """GenerationRecord per generation, in order."""

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([{
            "generation": r.generation, "best": r.best.to_string(),
            "best_fitness": r.best_fitness, "mean_fitness": r.mean_fitness,
        } for r in self])


def genetic_search(fitness: Callable[[IntentionVector], float], length: int,
                   config: Optional[GaConfig] = None) -> Tuple[IntentionVector, float, SearchTrace]:
    """
    Elitist genetic search over bit vectors. Each generation keeps the top
    `survivors` by fitness and refills the population with mutated children
    of uniformly chosen survivor pairs. Returns the best vector ever seen.
    """
    config = config or GaConfig()
    if length < MIN_LENGTH:
        raise DataError(f"genetic search needs at least {MIN_LENGTH} bits")
    cache: Dict[Tuple[int, ...], float] = {}

    def score(v: IntentionVector) -> float:
        if v.bits not in cache:
            cache[v.bits] = float(fitness(v))
        return cache[v.bits]

    population = [IntentionVector(tuple(int(b) for b in _rng(config.seed, INIT_STREAM, k).integers(0, 2, length)))
                  for k in range(config.population)]
    trace = SearchTrace()
    best, best_fit = population[0], -np.inf
    for generation in range(config.generations):
        scored = sorted(((score(v), v) for v in population), key=lambda item: (-item[0], item[1].bits))
        survivors = [v for _, v in scored[:config.survivors]]
        fits = [f for f, _ in scored]
        if scored[0][0] > best_fit:
            best_fit, best = scored[0]
        trace.append(GenerationRecord(generation, best, best_fit, float(np.mean(fits))))

        children: List[IntentionVector] = list(survivors)
        k = 0
        while len(children) < config.population:
            rng = _rng(config.seed, generation, k)
            p1, p2 = rng.integers(0, len(survivors), size=2)
            for child in crossover(survivors[p1], survivors[p2], rng):
                if len(children) < config.population:
                    children.append(mutate(child, config.mutation_rate, rng))
            k += 1
        population = children

    logger.info(f"Genetic search best {best} with fitness {best_fit:.4f} after {config.generations} generations")
    return best, best_fit, trace


def optimize(graph: CausalGraph, m: ObservationMatrix, objective: str, config: Optional[GaConfig] = None,
             registry: Sequence[Intention] = DEFAULT_REGISTRY) -> Tuple[IntentionVector, SearchTrace]:
    """Search the intention vector maximizing the surrogate's estimate of the objective."""
    if len(registry) < 2:
        raise DataError("optimization needs a registry of at least 2 intentions")
    if len(registry) != len(m.schema.meta_names):
        raise LengthMismatch(len(m.schema.meta_names), len(registry))
    surrogate = CausalSurrogate(graph, m, objective)
    best, _, trace = genetic_search(surrogate.fitness, len(registry), config)
    logger.info(f"Best intentions: {decode(best, registry) or ['(none)']}")
    return best, trace


def best_single(fitness: Callable[[IntentionVector], float], length: int) -> Tuple[IntentionVector, float]:
    """Best vector with exactly one intention selected."""
    candidates = [IntentionVector.one_hot(length, i) for i in range(length)]
    scored = sorted(((fitness(v), v) for v in candidates), key=lambda item: (-item[0], item[1].bits))
    return scored[0][1], scored[0][0]


def exhaustive_best(fitness: Callable[[IntentionVector], float], length: int) -> Tuple[IntentionVector, float]:
    """Brute force over all 2**length vectors."""
    best, best_fit = None, -np.inf
    for code in range(2 ** length):
        v = IntentionVector(tuple((code >> (length - 1 - i)) & 1 for i in range(length)))
        f = fitness(v)
        if f > best_fit:
            best, best_fit = v, f
    return best, best_fit

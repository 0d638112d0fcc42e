"""NSGA-II style multi-objective search over fixed-length sequence space.

All objectives are maximized. The optimizer is deliberately generic: it knows
nothing about GPs or likelihoods, only that `evaluate` maps a sequence to a
fixed-length objective vector deterministically. Campaigns wire in whatever
evaluator their method needs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .sequences import ALPHABET, diff, validate_sequence

__all__ = [
    "GAConfig",
    "EvolveResult",
    "non_dominated_sort",
    "crowding_distance",
    "evolve",
]

OBJECTIVE_SETS = ("mean_std", "mean_std_likelihood")


@dataclass
class GAConfig:
    """Knobs for one evolve() run.

    `mutation_rate` of None means one expected substitution per child (1/L).
    `objective_set` is carried for campaign bookkeeping (it decides what the
    evaluator computes); evolve() itself only checks the evaluator's output.
    """

    population_size: int = 128
    generations: int = 50
    mutation_rate: float | None = None
    crossover_probability: float = 0.9
    max_mutations: int | None = None
    objective_set: str = "mean_std"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.population_size < 4 or self.population_size % 2:
            raise ValueError(
                f"population_size must be an even number >= 4, got {self.population_size}"
            )
        if self.generations < 1:
            raise ValueError(f"generations must be >= 1, got {self.generations}")
        if self.mutation_rate is not None and not 0.0 < self.mutation_rate <= 1.0:
            raise ValueError(f"mutation_rate must lie in (0, 1], got {self.mutation_rate}")
        if not 0.0 <= self.crossover_probability <= 1.0:
            raise ValueError(
                f"crossover_probability must lie in [0, 1], got {self.crossover_probability}"
            )
        if self.max_mutations is not None and self.max_mutations < 1:
            raise ValueError(f"max_mutations must be >= 1, got {self.max_mutations}")
        if self.objective_set not in OBJECTIVE_SETS:
            raise ValueError(
                f"objective_set must be one of {OBJECTIVE_SETS}, got {self.objective_set!r}"
            )


def non_dominated_sort(objectives: np.ndarray) -> list[np.ndarray]:
    """Fronts of indices under maximization dominance.

    Front 0 holds the non-dominated points; each later front is non-dominated
    once the earlier ones are removed. x dominates y when x >= y in every
    objective and x > y in at least one.
    """
    objs = np.asarray(objectives, dtype=float)
    if objs.ndim != 2 or objs.shape[0] == 0:
        raise ValueError(f"expected a nonempty (n, m) objective matrix, got {objs.shape}")
    n = objs.shape[0]
    ge = np.all(objs[:, None, :] >= objs[None, :, :], axis=2)
    gt = np.any(objs[:, None, :] > objs[None, :, :], axis=2)
    dominates = ge & gt

    dominated_count = dominates.sum(axis=0)
    fronts: list[np.ndarray] = []
    current = np.nonzero(dominated_count == 0)[0]
    assigned = 0
    while current.size:
        fronts.append(current)
        assigned += current.size
        if assigned == n:
            break
        dominated_count = dominated_count - dominates[current].sum(axis=0)
        dominated_count[np.concatenate(fronts)] = -1
        current = np.nonzero(dominated_count == 0)[0]
    return fronts


def crowding_distance(front_objectives: np.ndarray) -> np.ndarray:
    """Crowding distances within one front; boundary points get infinity.

    Interior points sum, per objective, the normalized gap between their two
    sorted neighbors. Flat objectives (zero range) contribute nothing.
    """
    objs = np.asarray(front_objectives, dtype=float)
    if objs.ndim != 2 or objs.shape[0] == 0:
        raise ValueError(f"expected a nonempty (k, m) objective matrix, got {objs.shape}")
    k, m = objs.shape
    if k <= 2:
        return np.full(k, np.inf)
    distance = np.zeros(k)
    for t in range(m):
        order = np.argsort(objs[:, t], kind="stable")
        col = objs[order, t]
        span = col[-1] - col[0]
        distance[order[0]] = np.inf
        distance[order[-1]] = np.inf
        if span > 0:
            gaps = (col[2:] - col[:-2]) / span
            interior = order[1:-1]
            finite = np.isfinite(distance[interior])
            distance[interior[finite]] += gaps[finite]
    return distance


@dataclass
class EvolveResult:
    """Final front plus enough ranking context to pad a batch from the runners-up."""

    front: list[tuple[str, np.ndarray]]
    ranked: list[tuple[str, np.ndarray, int, float]]  # (seq, objectives, rank, crowding)
    history: np.ndarray  # (generations + 1, m) per-objective population best
    evaluations: int = 0


def _rank_population(objs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    ranks = np.empty(objs.shape[0], dtype=int)
    crowd = np.empty(objs.shape[0], dtype=float)
    for rank, front in enumerate(non_dominated_sort(objs)):
        ranks[front] = rank
        crowd[front] = crowding_distance(objs[front])
    return ranks, crowd


def evolve(
    parental: str,
    evaluate: Callable[[str], np.ndarray],
    config: GAConfig,
    *,
    exclude: Iterable[str] = (),
    seed_sequences: Sequence[str] = (),
    front_writer: Callable[[int, list[str], np.ndarray], None] | None = None,
) -> EvolveResult:
    """Run the (mu + lambda) elitist multi-objective GA.

    Parameters
    ----------
    parental : str
        Anchor sequence; defines length and the mutation-count cap.
    evaluate : callable
        Deterministic, side-effect-free map from sequence to objective vector.
        Called once per distinct sequence (results are cached).
    config : GAConfig
    exclude : iterable of str
        Sequences never emitted in the final front (typically the training set).
    seed_sequences : sequence of str
        Extra starting individuals, e.g. the best observed variants.
    front_writer : callable, optional
        Called after every generation with (generation, front sequences,
        front objectives); used for per-generation dump files.

    The initial population is the parental, the valid seed sequences, and
    random 1-3 site mutants. Duplicates arising anywhere are re-mutated once
    and then tolerated. Selection keeps the union's best N by (front rank,
    crowding distance), which makes per-objective population maxima
    non-decreasing across generations.
    """
    validate_sequence(parental)
    length = len(parental)
    if length == 0:
        raise ValueError("parental sequence must be nonempty")
    rate = config.mutation_rate if config.mutation_rate is not None else 1.0 / length
    cap = config.max_mutations
    rng = np.random.default_rng(config.seed)
    exclude_set = set(exclude)

    cache: dict[str, np.ndarray] = {}
    n_objectives = 2 if config.objective_set == "mean_std" else 3

    def score(seq: str) -> np.ndarray:
        if seq not in cache:
            value = np.asarray(evaluate(seq), dtype=float).ravel()
            if value.size != n_objectives:
                raise ValueError(
                    f"evaluate returned {value.size} objectives but objective set "
                    f"{config.objective_set!r} expects {n_objectives}"
                )
            if not np.all(np.isfinite(value)):
                raise ValueError(f"evaluate returned non-finite objectives for {seq!r}")
            cache[seq] = value
        return cache[seq]

    def count_muts(seq: str) -> int:
        return sum(1 for a, b in zip(parental, seq) if a != b)

    def random_mutant(base: str, n_sites: int) -> str:
        chars = list(base)
        sites = rng.choice(length, size=min(n_sites, length), replace=False)
        for pos in sites:
            choices = [aa for aa in ALPHABET if aa != chars[pos]]
            chars[pos] = choices[rng.integers(len(choices))]
        return "".join(chars)

    def repair(seq: str) -> str:
        if cap is None:
            return seq
        chars = list(seq)
        differing = [i for i in range(length) if chars[i] != parental[i]]
        while len(differing) > cap:
            pick = rng.integers(len(differing))
            pos = differing.pop(pick)
            chars[pos] = parental[pos]
        return "".join(chars)

    def point_mutation(seq: str) -> str:
        return repair(random_mutant(seq, 1))

    # -- initial population
    population: list[str] = [parental]
    seen = {parental}
    for seq in seed_sequences:
        validate_sequence(seq)
        if len(seq) != length:
            raise ValueError(
                f"seed sequence length {len(seq)} != parental length {length}"
            )
        if cap is not None and count_muts(seq) > cap:
            continue
        if seq not in seen and len(population) < config.population_size:
            population.append(seq)
            seen.add(seq)
    while len(population) < config.population_size:
        max_sites = 3 if cap is None else min(3, cap)
        candidate = random_mutant(parental, int(rng.integers(1, max_sites + 1)))
        if candidate in seen:
            candidate = point_mutation(candidate)  # re-mutate once, then tolerate
        population.append(candidate)
        seen.add(candidate)

    objs = np.stack([score(s) for s in population])
    history = [objs.max(axis=0)]

    for generation in range(config.generations):
        ranks, crowd = _rank_population(objs)

        def tournament() -> int:
            i, j = rng.integers(len(population)), rng.integers(len(population))
            if (ranks[i], -crowd[i]) <= (ranks[j], -crowd[j]):
                return int(i)
            return int(j)

        offspring: list[str] = []
        batch_seen = set(population)
        while len(offspring) < config.population_size:
            a = population[tournament()]
            b = population[tournament()]
            if rng.random() < config.crossover_probability:
                mask = rng.random(length) < 0.5
                child_a = "".join(y if m else x for x, y, m in zip(a, b, mask))
                child_b = "".join(x if m else y for x, y, m in zip(a, b, mask))
            else:
                child_a, child_b = a, b
            for child in (child_a, child_b):
                chars = list(child)
                flips = np.nonzero(rng.random(length) < rate)[0]
                for pos in flips:
                    choices = [aa for aa in ALPHABET if aa != chars[pos]]
                    chars[pos] = choices[rng.integers(len(choices))]
                mutated = repair("".join(chars))
                if mutated in batch_seen:
                    mutated = point_mutation(mutated)
                batch_seen.add(mutated)
                offspring.append(mutated)
        offspring = offspring[: config.population_size]

        union = population + offspring
        union_objs = np.stack([score(s) for s in union])
        union_ranks, union_crowd = _rank_population(union_objs)
        order = sorted(
            range(len(union)), key=lambda i: (union_ranks[i], -union_crowd[i], i)
        )
        keep = order[: config.population_size]
        population = [union[i] for i in keep]
        objs = union_objs[keep]
        history.append(objs.max(axis=0))

        if front_writer is not None:
            front_idx = [i for i in keep if union_ranks[i] == 0]
            front_writer(
                generation,
                [union[i] for i in front_idx],
                union_objs[front_idx],
            )

    ranks, crowd = _rank_population(objs)
    order = sorted(range(len(population)), key=lambda i: (ranks[i], -crowd[i], i))

    front: list[tuple[str, np.ndarray]] = []
    ranked: list[tuple[str, np.ndarray, int, float]] = []
    emitted: set[str] = set()
    for i in order:
        seq = population[i]
        if seq in emitted or seq in exclude_set:
            continue
        emitted.add(seq)
        ranked.append((seq, objs[i].copy(), int(ranks[i]), float(crowd[i])))
        if ranks[i] == 0:
            front.append((seq, objs[i].copy()))
    return EvolveResult(
        front=front, ranked=ranked, history=np.stack(history), evaluations=len(cache)
    )

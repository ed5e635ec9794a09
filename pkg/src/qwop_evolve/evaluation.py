"""Fitness assignment, evaluators, and initial-population seeding."""
from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .genome import Genome, Representation, decode, random_genome
from .physics import Outcome, WorldConfig, run_episode

SPEED_BONUS_THRESHOLD_M = 10.0
EVAL_TIME_LIMIT_S = 45.0
SEEDING_TIME_LIMIT_S = 20.0


def fitness(distance_m: float, minutes: float) -> float:
    """Score a run: plain distance below 10 m, distance plus average speed (m/min) above."""
    if not minutes > 0:
        raise ValueError(f"minutes must be positive, got {minutes}")
    if distance_m < SPEED_BONUS_THRESHOLD_M:
        return float(distance_m)
    return distance_m + distance_m / minutes


@dataclass(frozen=True)
class FitnessRecord:
    """Outcome of scoring one genome.

    ``temporary`` marks a seeding score (raw meters in the shorter seeding
    episode) that has not been replaced by a full evaluation yet.
    ``outcome`` is None for evaluators that do not run the simulator.
    """

    fitness: float
    distance_m: float
    minutes: float
    outcome: Outcome | None
    time_limit_s: float = EVAL_TIME_LIMIT_S
    temporary: bool = False

    def __post_init__(self):
        if not self.minutes > 0:
            raise ValueError(f"minutes must be positive, got {self.minutes}")


@dataclass(frozen=True)
class Individual:
    genome: Genome
    record: FitnessRecord
    birth_eval: int = 0

    @property
    def fitness(self) -> float:
        return self.record.fitness


class EvaluationCounter:
    """Thread-safe tally of full fitness evaluations."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._value = 0

    def increment(self, n: int = 1) -> int:
        with self._lock:
            self._value += n
            return self._value

    @property
    def value(self) -> int:
        with self._lock:
            return self._value

    def reset(self) -> None:
        with self._lock:
            self._value = 0


evaluation_counter = EvaluationCounter()


def _physics_record(genome: Genome, config: WorldConfig, time_limit_s: float,
                    temporary: bool) -> FitnessRecord:
    result = run_episode(decode(genome), config, time_limit_s)
    minutes = result.elapsed_s / 60.0
    score = result.distance_m if temporary else fitness(result.distance_m, minutes)
    return FitnessRecord(score, result.distance_m, minutes, result.outcome, time_limit_s, temporary)


def evaluate(genome: Genome, config: WorldConfig | None = None,
             time_limit_s: float = EVAL_TIME_LIMIT_S) -> FitnessRecord:
    """Run one full evaluation in the simulator and count it."""
    record = _physics_record(genome, config or WorldConfig(), time_limit_s, temporary=False)
    evaluation_counter.increment()
    return record


class Evaluator:
    """Scores genomes, optionally spreading batches over a thread pool.

    Subclasses implement :meth:`score` (a full evaluation) and
    :meth:`score_temporary` (the seeding score). Batches come back in input
    order whatever the worker count, so results never depend on scheduling.
    """

    def __init__(self, workers: int = 1):
        if workers < 1:
            raise ValueError("workers must be >= 1")
        self.workers = workers
        self.counter = EvaluationCounter()
        self._pool: ThreadPoolExecutor | None = None

    def score(self, genome: Genome) -> FitnessRecord:
        raise NotImplementedError

    def score_temporary(self, genome: Genome) -> FitnessRecord:
        raise NotImplementedError

    def evaluate(self, genome: Genome) -> FitnessRecord:
        record = self.score(genome)
        self.counter.increment()
        evaluation_counter.increment()
        return record

    def _map(self, fn: Callable, genomes: Sequence[Genome]) -> list:
        if self.workers == 1 or len(genomes) < 2:
            return [fn(g) for g in genomes]
        if self._pool is None:
            self._pool = ThreadPoolExecutor(max_workers=self.workers)
        return list(self._pool.map(fn, genomes))

    def evaluate_many(self, genomes: Sequence[Genome]) -> list[FitnessRecord]:
        return self._map(self.evaluate, genomes)

    def temporary_many(self, genomes: Sequence[Genome]) -> list[FitnessRecord]:
        return self._map(self.score_temporary, genomes)

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class PhysicsEvaluator(Evaluator):
    def __init__(self, config: WorldConfig | None = None,
                 time_limit_s: float = EVAL_TIME_LIMIT_S,
                 seeding_time_limit_s: float = SEEDING_TIME_LIMIT_S, workers: int = 1):
        super().__init__(workers)
        self.config = config or WorldConfig()
        self.time_limit_s = time_limit_s
        self.seeding_time_limit_s = seeding_time_limit_s

    def score(self, genome):
        return _physics_record(genome, self.config, self.time_limit_s, temporary=False)

    def score_temporary(self, genome):
        return _physics_record(genome, self.config, self.seeding_time_limit_s, temporary=True)


class LetterCountEvaluator(Evaluator):
    """Synthetic benchmark: fitness is how often ``letter`` occurs in the genome.

    Useful for checking the search machinery without the simulator.
    """

    def __init__(self, letter: str = "A", workers: int = 1):
        super().__init__(workers)
        self.letter = letter

    def _count(self, genome: Genome) -> int:
        return sum(1 for t in genome.tokens if (t[0] if isinstance(t, tuple) else t) == self.letter)

    def score(self, genome):
        n = float(self._count(genome))
        return FitnessRecord(n, n, 1.0, None)

    def score_temporary(self, genome):
        n = float(self._count(genome))
        return FitnessRecord(n, n, 1.0, None, temporary=True)


def seed_population(M: int, N: int, rep: Representation | str,
                    config: WorldConfig | None = None,
                    rng: np.random.Generator | None = None,
                    evaluator: Evaluator | None = None) -> list[Individual]:
    """Draw ``M`` random genomes and keep the ``N`` that run farthest in the seeding episode.

    The returned individuals carry their temporary score and are ordered best
    first, ties going to the earlier pool member. These scores are not full
    evaluations and are not counted.
    """
    if not 1 <= N <= M:
        raise ValueError(f"seeding needs M >= N >= 1, got M={M}, N={N}")
    if rng is None:
        raise ValueError("seed_population needs an explicit rng")
    if evaluator is None:
        evaluator = PhysicsEvaluator(config)
    pool = [random_genome(rep, rng) for _ in range(M)]
    records = evaluator.temporary_many(pool)
    order = sorted(range(M), key=lambda i: (-records[i].fitness, i))[:N]
    return [Individual(pool[i], records[i], 0) for i in order]

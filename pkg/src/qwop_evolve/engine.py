"""Steady-state, generational and cellular GA loops with their selection schemes."""
from __future__ import annotations

import configparser
import dataclasses
import enum
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .evaluation import (EVAL_TIME_LIMIT_S, Evaluator, Individual, PhysicsEvaluator,
                         seed_population)
from .genome import Representation
from .physics.config import coerce_fields
from .variation import VariationParams, crossover, mutate

STATIC_MUTATION_RATE = 0.15
WORST_POOL = 5
# ten times the longest random genome; keeps cut-and-splice bloat from running away
DEFAULT_MAX_GENOME_LENGTH = 400


class Variant(str, enum.Enum):
    STEADY_STATE = "ss"
    GENERATIONAL = "gen"
    CELLULAR = "cell"


class ControlMode(str, enum.Enum):
    STATIC = "static"
    DYNAMIC = "dynamic"


@dataclass(frozen=True)
class GAConfig:
    """One GA run. ``seed_pool`` is the Seeding pool size M; None means random initialization."""

    variant: Variant = Variant.STEADY_STATE
    population_size: int = 25
    representation: Representation = Representation.BITMASK
    p_crossover: float = 0.9
    p_mutation: float = STATIC_MUTATION_RATE
    creep_sigma: float = 25.0
    mutation_mode: ControlMode = ControlMode.STATIC
    replacement_mode: ControlMode = ControlMode.STATIC
    eval_budget: int = 1000
    eval_time_limit_s: float = EVAL_TIME_LIMIT_S
    seed_pool: int | None = None
    rng_seed: int = 0
    tournament_size: int | None = None
    max_genome_length: int = DEFAULT_MAX_GENOME_LENGTH

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        set_("variant", Variant(self.variant))
        set_("representation", Representation(self.representation))
        set_("mutation_mode", ControlMode(self.mutation_mode))
        set_("replacement_mode", ControlMode(self.replacement_mode))
        if isinstance(self.seed_pool, str):
            raw = self.seed_pool.strip().lower()
            set_("seed_pool", None if raw in ("", "random", "none") else int(raw))
        if isinstance(self.tournament_size, str):
            raw = self.tournament_size.strip().lower()
            set_("tournament_size", None if raw in ("", "auto", "none") else int(raw))
        self.variation  # validates probabilities and sigma

        n = self.population_size
        if n < 2:
            raise ValueError("population_size must be >= 2")
        if self.eval_budget < n:
            raise ValueError("eval_budget must be >= population_size")
        if not self.eval_time_limit_s > 0:
            raise ValueError("eval_time_limit_s must be positive")
        if self.seed_pool is not None and self.seed_pool < n:
            raise ValueError(f"seeding pool {self.seed_pool} smaller than population {n}")
        if self.variant is Variant.CELLULAR and math.isqrt(n) ** 2 != n:
            raise ValueError(f"cellular population must be a perfect square, got {n}")
        if self.variant is Variant.STEADY_STATE and self.replacement_mode is ControlMode.STATIC \
                and n < WORST_POOL:
            raise ValueError(f"worst-{WORST_POOL} replacement needs population_size >= {WORST_POOL}")
        if self.variant is not Variant.STEADY_STATE and self.replacement_mode is ControlMode.DYNAMIC:
            raise ValueError("dynamic replacement applies to the steady-state variant only")
        if self.max_genome_length < 1:
            raise ValueError("max_genome_length must be >= 1")
        if self.tournament_size is not None and not 1 <= self.tournament_size <= n:
            raise ValueError(f"tournament_size must lie in [1, {n}]")

    @property
    def variation(self) -> VariationParams:
        return VariationParams(self.p_crossover, self.p_mutation, self.creep_sigma)

    @property
    def seeding(self) -> tuple[int, int] | None:
        return None if self.seed_pool is None else (self.seed_pool, self.population_size)

    @property
    def k(self) -> int:
        if self.tournament_size is not None:
            return self.tournament_size
        return default_tournament_size(self.population_size)

    def replace(self, **changes) -> "GAConfig":
        return dataclasses.replace(self, **changes)


def default_tournament_size(n: int) -> int:
    return min(n, max(2, n // 4))


def load_ga_config(path: str | Path, **overrides) -> GAConfig:
    """Read the ``[ga]`` section of an INI-style file; missing keys keep defaults."""
    parser = configparser.ConfigParser()
    with open(path, encoding="utf-8") as fh:
        parser.read_file(fh)
    values = {}
    if parser.has_section("ga"):
        values = coerce_fields(GAConfig, dict(parser.items("ga")), "ga")
    values.update(overrides)
    return GAConfig(**values)


def dump_ga_config(cfg: GAConfig) -> str:
    lines = ["[ga]"]
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        if isinstance(value, enum.Enum):
            value = value.value
        elif value is None:
            value = "random" if f.name == "seed_pool" else "auto"
        lines.append(f"{f.name} = {value}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class GridTopology:
    """Toroidal grid with von Neumann neighborhoods, cells numbered row-major."""

    width: int
    height: int

    @classmethod
    def square(cls, n: int) -> "GridTopology":
        side = math.isqrt(n)
        if side * side != n:
            raise ValueError(f"{n} cells do not form a square grid")
        return cls(side, side)

    @property
    def size(self) -> int:
        return self.width * self.height

    def neighbors(self, i: int) -> tuple[int, int, int, int]:
        """North, south, west, east."""
        r, c = divmod(i, self.width)
        w, h = self.width, self.height
        return (((r - 1) % h) * w + c, ((r + 1) % h) * w + c,
                r * w + (c - 1) % w, r * w + (c + 1) % w)

    def distance(self, i: int, j: int) -> int:
        ri, ci = divmod(i, self.width)
        rj, cj = divmod(j, self.width)
        dr = abs(ri - rj)
        dc = abs(ci - cj)
        return min(dr, self.height - dr) + min(dc, self.width - dc)


# --- selection and replacement -------------------------------------------------

def tournament_index(fits: Sequence[float], k: int, rng: np.random.Generator) -> int:
    n = len(fits)
    if not 1 <= k <= n:
        raise ValueError(f"tournament size {k} outside [1, {n}]")
    picks = rng.choice(n, size=k, replace=False)
    best = int(picks[0])
    for i in picks[1:]:
        if fits[int(i)] > fits[best]:
            best = int(i)
    return best


def tournament_select(pop: Sequence[Individual], k: int, rng: np.random.Generator) -> Individual:
    """Best of ``k`` distinct uniformly drawn individuals; ties go to the first drawn."""
    return pop[tournament_index([ind.fitness for ind in pop], k, rng)]


def _fitnesses(pop) -> list[float]:
    return [p.fitness if isinstance(p, Individual) else float(p) for p in pop]


def worst_indices(fits: Sequence[float], exclude: Sequence[int] = (), count: int = WORST_POOL) -> list[int]:
    candidates = [i for i in range(len(fits)) if i not in exclude]
    return sorted(candidates, key=lambda i: (fits[i], i))[:count]


def replacement_select_static(pop, rng: np.random.Generator, exclude: Sequence[int] = ()) -> int:
    """Uniform pick among the five lowest-fitness members (ties go to the lower index)."""
    fits = _fitnesses(pop)
    if len(fits) < WORST_POOL:
        raise ValueError(f"worst-{WORST_POOL} replacement needs at least {WORST_POOL} individuals")
    pool = worst_indices(fits, exclude)
    return pool[int(rng.integers(len(pool)))]


def alpha(t: float, T: float) -> float:
    return 0.5 + 1.5 * (t / T)


def replacement_weights(fits: Sequence[float], a: float) -> np.ndarray:
    """Unnormalized victim weights ``(1 - f/F)**a`` with F the population's total fitness."""
    f = np.asarray(fits, dtype=float)
    total = f.sum()
    if not total > 0:
        return np.ones_like(f)
    return np.clip(1.0 - f / total, 0.0, None) ** a


def replacement_select_dynamic(pop, t: float, T: float, rng: np.random.Generator,
                               exclude: Sequence[int] = ()) -> int:
    fits = _fitnesses(pop)
    w = replacement_weights(fits, alpha(t, T))
    for i in exclude:
        w[i] = 0.0
    if not w.sum() > 0:
        # every remaining candidate carries all of the fitness; fall back to uniform
        w = np.ones(len(fits))
        for i in exclude:
            w[i] = 0.0
    return int(rng.choice(len(fits), p=w / w.sum()))


def mutation_rate(t: float, T: float, mode: ControlMode | str = ControlMode.STATIC) -> float:
    if ControlMode(mode) is ControlMode.STATIC:
        return STATIC_MUTATION_RATE
    # written around the end value so both endpoints come out exact
    return STATIC_MUTATION_RATE + (1.0 - STATIC_MUTATION_RATE) * (1.0 - t / T)


# --- one step of each variant ----------------------------------------------------

class StepResult(NamedTuple):
    """Population after a step, the individuals evaluated in it (in order), and
    the population mean fitness right after each of those evaluations."""

    population: list
    evaluated: list
    means: list
    complete: bool


def _mean(pop) -> float:
    return float(np.mean([ind.fitness for ind in pop]))


def _default_evaluator(cfg: GAConfig) -> Evaluator:
    return PhysicsEvaluator(time_limit_s=cfg.eval_time_limit_s)


def _clip(g, cfg: GAConfig):
    if len(g) > cfg.max_genome_length:
        return g.with_tokens(g.tokens[:cfg.max_genome_length])
    return g


def _children(a: Individual, b: Individual, cfg: GAConfig, rate: float, rng):
    c1, c2 = crossover(a.genome, b.genome, cfg.variation, rng)
    return (_clip(mutate(c1, cfg.variation, rng, rate), cfg),
            _clip(mutate(c2, cfg.variation, rng, rate), cfg))


def step_steady_state(pop: Sequence[Individual], cfg: GAConfig, t: int, rng: np.random.Generator,
                      evaluator: Evaluator | None = None, limit: int | None = None) -> StepResult:
    """Breed two children and insert each over a replacement victim.

    ``t`` is the number of evaluations consumed so far. If fewer than two
    evaluations remain (``limit``), whatever is evaluated is reported but the
    population is left as it was.
    """
    evaluator = evaluator or _default_evaluator(cfg)
    T = cfg.eval_budget
    rate = mutation_rate(t, T, cfg.mutation_mode)
    k = cfg.k
    p1 = tournament_select(pop, k, rng)
    p2 = tournament_select(pop, k, rng)
    children = _children(p1, p2, cfg, rate, rng)

    limit = len(children) if limit is None else limit
    if limit < len(children):
        done = [Individual(g, evaluator.evaluate(g), t + i + 1)
                for i, g in enumerate(children[:limit])]
        return StepResult(list(pop), done, [_mean(pop)] * len(done), False)

    new = list(pop)
    evaluated, means, placed = [], [], []
    for i, g in enumerate(children):
        child = Individual(g, evaluator.evaluate(g), t + i + 1)
        if cfg.replacement_mode is ControlMode.DYNAMIC:
            victim = replacement_select_dynamic(new, t, T, rng, exclude=placed)
        else:
            victim = replacement_select_static(new, rng, exclude=placed)
        new[victim] = child
        placed.append(victim)
        evaluated.append(child)
        means.append(_mean(new))
    return StepResult(new, evaluated, means, True)


def _evaluate_batch(genomes, t, evaluator, limit):
    genomes = genomes[:limit]
    records = evaluator.evaluate_many(genomes)
    return [Individual(g, r, t + i + 1) for i, (g, r) in enumerate(zip(genomes, records))]


def step_generational(pop: Sequence[Individual], cfg: GAConfig, t: int, rng: np.random.Generator,
                      evaluator: Evaluator | None = None, limit: int | None = None) -> StepResult:
    """Replace the whole population with N children (no elitism)."""
    evaluator = evaluator or _default_evaluator(cfg)
    n = len(pop)
    rate = mutation_rate(t, cfg.eval_budget, cfg.mutation_mode)
    genomes = []
    for _ in range(math.ceil(n / 2)):
        p1 = tournament_select(pop, cfg.k, rng)
        p2 = tournament_select(pop, cfg.k, rng)
        genomes.extend(_children(p1, p2, cfg, rate, rng))
    genomes = genomes[:n]
    limit = n if limit is None else min(limit, n)
    children = _evaluate_batch(genomes, t, evaluator, limit)
    old_mean = _mean(pop)
    if len(children) < n:
        return StepResult(list(pop), children, [old_mean] * len(children), False)
    return StepResult(children, children, [old_mean] * (n - 1) + [_mean(children)], True)


def step_cellular(grid: Sequence[Individual], cfg: GAConfig, t: int, rng: np.random.Generator,
                  evaluator: Evaluator | None = None, limit: int | None = None,
                  topology: GridTopology | None = None) -> StepResult:
    """One synchronous generation: each cell mates with its fittest neighbor and
    keeps the first child only if it is at least as fit as the occupant."""
    evaluator = evaluator or _default_evaluator(cfg)
    topology = topology or GridTopology.square(len(grid))
    rate = mutation_rate(t, cfg.eval_budget, cfg.mutation_mode)
    genomes = []
    for i, occupant in enumerate(grid):
        mates = sorted(topology.neighbors(i))
        mate = max(mates, key=lambda j: (grid[j].fitness, -j))
        c1, _ = crossover(occupant.genome, grid[mate].genome, cfg.variation, rng)
        genomes.append(_clip(mutate(c1, cfg.variation, rng, rate), cfg))
    n = len(grid)
    limit = n if limit is None else min(limit, n)
    children = _evaluate_batch(genomes, t, evaluator, limit)
    old_mean = _mean(grid)
    if len(children) < n:
        return StepResult(list(grid), children, [old_mean] * len(children), False)
    new = [c if c.fitness >= o.fitness else o for c, o in zip(children, grid)]
    return StepResult(new, children, [old_mean] * (n - 1) + [_mean(new)], True)


STEPS: dict[Variant, Callable[..., StepResult]] = {
    Variant.STEADY_STATE: step_steady_state,
    Variant.GENERATIONAL: step_generational,
    Variant.CELLULAR: step_cellular,
}


# --- whole runs ------------------------------------------------------------------

class HistoryPoint(NamedTuple):
    evaluation: int
    best_so_far: float
    population_mean: float


@dataclass
class RunResult:
    config: GAConfig
    history: list[HistoryPoint]
    population: list[Individual]
    best: Individual
    initial_population: list[Individual] = field(repr=False, default_factory=list)

    @property
    def final_best(self) -> float:
        return self.history[-1].best_so_far

    @property
    def final_mean(self) -> float:
        return self.history[-1].population_mean


def initial_population(cfg: GAConfig, rng: np.random.Generator, evaluator: Evaluator) -> list[Individual]:
    n = cfg.population_size
    m = cfg.seed_pool if cfg.seed_pool is not None else n
    return seed_population(m, n, cfg.representation, rng=rng, evaluator=evaluator)


def run(cfg: GAConfig, evaluator: Evaluator | None = None,
        progress: Callable[[int, float], None] | None = None) -> RunResult:
    """Evolve until exactly ``cfg.eval_budget`` evaluations are spent.

    The history holds one point per evaluation: the best fitness seen so far
    (including the initial population) and the population mean right after
    that evaluation.
    """
    evaluator = evaluator or _default_evaluator(cfg)
    rng = np.random.default_rng(cfg.rng_seed)
    pop = initial_population(cfg, rng, evaluator)
    initial = list(pop)
    best = max(pop, key=lambda ind: ind.fitness)
    step_fn = STEPS[cfg.variant]
    history: list[HistoryPoint] = []
    used = 0
    while used < cfg.eval_budget:
        result = step_fn(pop, cfg, used, rng, evaluator=evaluator, limit=cfg.eval_budget - used)
        for child, mean in zip(result.evaluated, result.means):
            used += 1
            if child.fitness > best.fitness:
                best = child
            history.append(HistoryPoint(used, best.fitness, mean))
        pop = result.population
        if progress is not None:
            progress(used, best.fitness)
    return RunResult(cfg, history, list(pop), best, initial)

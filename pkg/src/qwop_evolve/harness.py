"""Multi-trial experiments: presets, persistence, statistics, curves, and replay."""
from __future__ import annotations

import configparser
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .engine import GAConfig, HistoryPoint, RunResult, dump_ga_config, run
from .evaluation import FitnessRecord, Individual, PhysicsEvaluator, fitness
from .genome import Genome, GenomeParseError, decode, format_genome, parse_genome
from .physics import EpisodeResult, Outcome, WorldConfig, dump_world_config, run_episode
from .physics.config import coerce_fields

OUT_ENV = "QWOP_EVOLVE_OUT"
DEFAULT_OUT = "runs"


def output_root(explicit: str | os.PathLike | None = None) -> Path:
    """``explicit`` if given, else ``$QWOP_EVOLVE_OUT``, else ``./runs``."""
    if explicit:
        return Path(explicit)
    return Path(os.environ.get(OUT_ENV) or DEFAULT_OUT)


class Arm(NamedTuple):
    label: str
    config: GAConfig


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    arms: tuple[Arm, ...]
    trials: int = 5
    base_seed: int = 0
    world: WorldConfig = field(default_factory=WorldConfig)

    def __post_init__(self):
        object.__setattr__(self, "arms", tuple(Arm(*a) for a in self.arms))
        if not self.arms:
            raise ValueError("an experiment needs at least one arm")
        if self.trials < 1:
            raise ValueError("an experiment needs at least one trial")
        labels = [a.label for a in self.arms]
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate arm labels in {labels}")
        for label in labels:
            if not re.fullmatch(r"[A-Za-z0-9_.+-]+", label):
                raise ValueError(f"arm label {label!r} is not usable as a directory name")

    def trial_config(self, arm: Arm, trial: int) -> GAConfig:
        return arm.config.replace(rng_seed=self.base_seed + trial)


# --- presets ---------------------------------------------------------------------

def _exp1(base: GAConfig):
    labels = {"ks": "Keystroke", "kud": "KeyupKeydown", "bm": "Bitmask", "bmd": "BitmaskDuration"}
    return [Arm(label, base.replace(representation=rep, seed_pool=500)) for rep, label in labels.items()]


def _exp2(base: GAConfig):
    arms = [Arm("Random", base.replace(seed_pool=None))]
    arms += [Arm(f"Seeded-{m}", base.replace(seed_pool=m)) for m in (50, 250, 500, 1000)]
    return arms


def _exp3(base: GAConfig):
    b = base.replace(seed_pool=500)
    return [
        Arm("Static", b),
        Arm("Dynamic-M", b.replace(mutation_mode="dynamic")),
        Arm("Dynamic-R", b.replace(replacement_mode="dynamic")),
        Arm("Dynamic-R-M", b.replace(mutation_mode="dynamic", replacement_mode="dynamic")),
    ]


def _exp4(base: GAConfig):
    arms = []
    for variant, tag in (("ss", "SS"), ("gen", "Gen"), ("cell", "Cell")):
        arms.append(Arm(f"{tag}-R", base.replace(variant=variant, seed_pool=None)))
        arms.append(Arm(f"{tag}-S", base.replace(variant=variant, seed_pool=500)))
    return arms


PRESETS: dict[str, Callable[[GAConfig], list[Arm]]] = {
    "exp1": _exp1, "exp2": _exp2, "exp3": _exp3, "exp4": _exp4,
}


def preset(name: str, budget: int | None = None, trials: int | None = None,
           pop: int | None = None, base_seed: int = 0,
           world: WorldConfig | None = None) -> ExperimentSpec:
    """One of the four standard experiments, optionally shrunk for a desk-scale run.

    A seeding pool smaller than an overridden population is raised to match.
    """
    key = name.lower().replace("-", "").replace("experiment", "exp")
    if key not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    base = GAConfig()
    if pop is not None:
        base = base.replace(population_size=pop, eval_budget=max(base.eval_budget, pop))
    if budget is not None:
        base = base.replace(eval_budget=budget)
    arms = []
    for arm in PRESETS[key](base):
        cfg = arm.config
        if cfg.seed_pool is not None and cfg.seed_pool < cfg.population_size:
            cfg = cfg.replace(seed_pool=cfg.population_size)
        arms.append(Arm(arm.label, cfg))
    return ExperimentSpec(key, tuple(arms), 5 if trials is None else trials, base_seed,
                          world or WorldConfig())


def load_spec(path: str | Path) -> ExperimentSpec:
    """Read an experiment from an INI file.

    ``[experiment]`` holds name, trials and base_seed; ``[ga]`` holds
    defaults shared by every arm; each ``[arm <label>]`` section overrides
    them; an optional ``[world]`` section configures the simulator.
    """
    parser = configparser.ConfigParser()
    with open(path, encoding="utf-8") as fh:
        parser.read_file(fh)
    head = dict(parser.items("experiment")) if parser.has_section("experiment") else {}
    name = head.get("name", Path(path).stem)
    trials = int(head.get("trials", 5))
    base_seed = int(head.get("base_seed", 0))
    shared = coerce_fields(GAConfig, dict(parser.items("ga")), "ga") if parser.has_section("ga") else {}
    world = WorldConfig()
    if parser.has_section("world"):
        world = WorldConfig(**coerce_fields(WorldConfig, dict(parser.items("world")), "world"))
    arms = []
    for section in parser.sections():
        if section.startswith("arm "):
            label = section[4:].strip()
            values = dict(shared)
            values.update(coerce_fields(GAConfig, dict(parser.items(section)), section))
            arms.append(Arm(label, GAConfig(**values)))
    return ExperimentSpec(name, tuple(arms), trials, base_seed, world)


def dump_spec(spec: ExperimentSpec) -> str:
    parts = [f"[experiment]\nname = {spec.name}\ntrials = {spec.trials}\nbase_seed = {spec.base_seed}\n"]
    for arm in spec.arms:
        body = dump_ga_config(arm.config).split("\n", 1)[1]
        parts.append(f"[arm {arm.label}]\n{body}")
    parts.append(dump_world_config(spec.world))
    return "\n".join(parts)


# --- statistics --------------------------------------------------------------------

@dataclass(frozen=True)
class TrialStats:
    """Cross-trial summary. Standard deviations divide by n, not n - 1."""

    mbf: float
    maf: float
    sigma_mbf: float
    trials: int
    curve_mbf: tuple[float, ...] = ()
    curve_sigma: tuple[float, ...] = ()


def stats(final_bests: Sequence[float], final_means: Sequence[float],
          curves: Sequence[Sequence[float]] | None = None) -> TrialStats:
    if len(final_bests) == 0 or len(final_bests) != len(final_means):
        raise ValueError("stats needs one final best and one final mean per trial (at least one trial)")
    bests = np.asarray(final_bests, dtype=float)
    curve_mbf: tuple[float, ...] = ()
    curve_sigma: tuple[float, ...] = ()
    if curves:
        if len({len(c) for c in curves}) != 1:
            raise ValueError("trial histories have different lengths")
        arr = np.asarray(curves, dtype=float)
        curve_mbf = tuple(float(v) for v in arr.mean(axis=0))
        curve_sigma = tuple(float(v) for v in arr.std(axis=0))
    return TrialStats(float(bests.mean()), float(np.mean(final_means)), float(bests.std()),
                      len(bests), curve_mbf, curve_sigma)


def stats_from_histories(histories: Sequence[Sequence[HistoryPoint]]) -> TrialStats:
    return stats([h[-1].best_so_far for h in histories],
                 [h[-1].population_mean for h in histories],
                 [[p.best_so_far for p in h] for h in histories])


def format_stats(label: str, s: TrialStats) -> str:
    return (f"# sigma_mbf is the population standard deviation (divide by n)\n"
            f"arm = {label}\n"
            f"trials = {s.trials}\n"
            f"mbf = {s.mbf!r}\n"
            f"maf = {s.maf!r}\n"
            f"sigma_mbf = {s.sigma_mbf!r}\n")


def export_curves(arms: dict[str, Sequence[Sequence[HistoryPoint]]]) -> str:
    """Per-evaluation MBF and its cross-trial deviation, one column pair per arm."""
    if not arms:
        raise ValueError("export_curves needs at least one arm")
    columns = {label: stats_from_histories(h) for label, h in arms.items()}
    lengths = {len(s.curve_mbf) for s in columns.values()}
    if len(lengths) != 1:
        raise ValueError("arms have different history lengths")
    header = ["evaluation"]
    for label in columns:
        header += [f"{label}_mbf", f"{label}_sigma"]
    lines = ["# curves are best-so-far; sigma divides by n", "\t".join(header)]
    for i in range(lengths.pop()):
        row = [str(i + 1)]
        for s in columns.values():
            row += [repr(s.curve_mbf[i]), repr(s.curve_sigma[i])]
        lines.append("\t".join(row))
    return "\n".join(lines) + "\n"


# --- persistence ---------------------------------------------------------------------

def format_record(record: FitnessRecord) -> str:
    outcome = record.outcome.name if record.outcome is not None else "NONE"
    return (f"fitness={record.fitness!r}; distance_m={record.distance_m!r}; "
            f"minutes={record.minutes!r}; outcome={outcome}; "
            f"time_limit_s={record.time_limit_s!r}; temporary={str(record.temporary).lower()}")


def parse_record(text: str) -> FitnessRecord:
    values = dict(part.strip().split("=", 1) for part in text.split(";") if "=" in part)
    outcome = values.get("outcome", "NONE")
    return FitnessRecord(float(values["fitness"]), float(values["distance_m"]),
                         float(values["minutes"]),
                         None if outcome == "NONE" else Outcome[outcome],
                         float(values.get("time_limit_s", 45.0)),
                         values.get("temporary", "false") == "true")


def format_history(history: Sequence[HistoryPoint]) -> str:
    lines = ["# evaluation\tbest_so_far\tpopulation_mean"]
    lines += [f"{p.evaluation}\t{p.best_so_far!r}\t{p.population_mean!r}" for p in history]
    return "\n".join(lines) + "\n"


def read_history(path: str | Path) -> list[HistoryPoint]:
    points = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.startswith("#") or not line.strip():
                continue
            ev, best, mean = line.split("\t")
            points.append(HistoryPoint(int(ev), float(best), float(mean)))
    return points


def format_individual(ind: Individual) -> str:
    return f"# {format_record(ind.record)}; birth_eval={ind.birth_eval}\n{format_genome(ind.genome)}\n"


def read_individuals(path: str | Path) -> list[tuple[Genome, FitnessRecord | None]]:
    """Genome lines, each paired with the record comment directly above it (if any)."""
    out = []
    pending = None
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                pending = parse_record(body) if body.startswith("fitness=") else None
                continue
            out.append((parse_genome(line, line=lineno), pending))
            pending = None
    return out


def write_run(result: RunResult, directory: Path, stem: str) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    (directory / f"{stem}.history").write_text(format_history(result.history), encoding="utf-8")
    (directory / f"{stem}.best").write_text(format_individual(result.best), encoding="utf-8")
    (directory / f"{stem}.population").write_text(
        "".join(format_individual(ind) for ind in result.population), encoding="utf-8")


# --- experiments -----------------------------------------------------------------------

@dataclass
class ArmResult:
    label: str
    stats: TrialStats
    runs: list[RunResult]


def run_experiment(spec: ExperimentSpec, out_root: str | Path | None = None,
                   workers: int = 1,
                   progress: Callable[[str, int, RunResult], None] | None = None) -> dict[str, ArmResult]:
    """Run every (arm, trial) pair, persisting each trial as soon as it finishes.

    Trial ``i`` of every arm uses seed ``base_seed + i``. Output goes to
    ``<out_root>/<spec.name>/``; a failing trial leaves earlier trials on disk.
    """
    root = output_root(out_root) / spec.name
    root.mkdir(parents=True, exist_ok=True)
    (root / "experiment.ini").write_text(dump_spec(spec), encoding="utf-8")
    results: dict[str, ArmResult] = {}
    with PhysicsEvaluator(spec.world, workers=workers) as evaluator:
        for arm in spec.arms:
            arm_dir = root / arm.label
            runs = []
            for trial in range(spec.trials):
                cfg = spec.trial_config(arm, trial)
                evaluator.time_limit_s = cfg.eval_time_limit_s
                result = run(cfg, evaluator)
                write_run(result, arm_dir, f"trial_{trial}")
                runs.append(result)
                if progress is not None:
                    progress(arm.label, trial, result)
            arm_stats = stats_from_histories([r.history for r in runs])
            (arm_dir / "stats.summary").write_text(format_stats(arm.label, arm_stats), encoding="utf-8")
            results[arm.label] = ArmResult(arm.label, arm_stats, runs)
    (root / "curves.table").write_text(
        export_curves({label: [r.history for r in a.runs] for label, a in results.items()}),
        encoding="utf-8")
    (root / "stats.summary").write_text(summary_table(results), encoding="utf-8")
    return results


def summary_table(results: dict[str, ArmResult]) -> str:
    lines = ["# sigma_mbf divides by n", "arm\ttrials\tmbf\tmaf\tsigma_mbf"]
    for label, a in results.items():
        s = a.stats
        lines.append(f"{label}\t{s.trials}\t{s.mbf:.4f}\t{s.maf:.4f}\t{s.sigma_mbf:.4f}")
    return "\n".join(lines) + "\n"


def stats_from_directory(directory: str | Path) -> dict[str, TrialStats]:
    """Recompute statistics from persisted histories.

    ``directory`` may be one arm (containing ``trial_*.history``) or an
    experiment (containing one subdirectory per arm).
    """
    directory = Path(directory)

    def trial_files(d: Path):
        files = sorted(d.glob("trial_*.history"), key=lambda p: int(p.stem.split("_")[1]))
        return [read_history(p) for p in files]

    own = trial_files(directory)
    if own:
        return {directory.name: stats_from_histories(own)}
    out = {}
    for sub in sorted(p for p in directory.iterdir() if p.is_dir()):
        hist = trial_files(sub)
        if hist:
            out[sub.name] = stats_from_histories(hist)
    if not out:
        raise FileNotFoundError(f"no trial_*.history files under {directory}")
    return out


# --- replay ----------------------------------------------------------------------------

@dataclass(frozen=True)
class ReplayResult:
    genome: Genome
    episode: EpisodeResult
    record: FitnessRecord
    expected: FitnessRecord | None
    trace_path: Path | None

    @property
    def matches(self) -> bool | None:
        return None if self.expected is None else self.expected == self.record


def replay(genome_file: str | Path, config: WorldConfig | None = None,
           trace_path: str | Path | None = None, time_limit_s: float | None = None,
           index: int = 0) -> ReplayResult:
    """Re-run one genome from a file with tracing on.

    When the genome carries a stored record, the episode uses that record's
    time limit and scoring so the two can be compared exactly.
    """
    config = config or WorldConfig()
    entries = read_individuals(genome_file)
    if not entries:
        raise GenomeParseError("file holds no genomes", 1, 1)
    genome, expected = entries[index]
    limit = time_limit_s or (expected.time_limit_s if expected else 45.0)
    temporary = bool(expected and expected.temporary)
    episode, trace = run_episode(decode(genome), config, limit, trace=True)
    minutes = episode.elapsed_s / 60.0
    score = episode.distance_m if temporary else fitness(episode.distance_m, minutes)
    record = FitnessRecord(score, episode.distance_m, minutes, episode.outcome, limit, temporary)
    path = None
    if trace_path is not None:
        path = Path(trace_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(trace.to_text(), encoding="utf-8")
    return ReplayResult(genome, episode, record, expected, path)

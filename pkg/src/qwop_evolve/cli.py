"""Command-line entry point: ``qwop-evolve <command> ...``."""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .engine import GAConfig, dump_ga_config, load_ga_config, run
from .evaluation import PhysicsEvaluator, seed_population
from .genome import GenomeParseError, Representation
from .harness import (format_individual, format_stats, load_spec, output_root, preset,
                      replay, run_experiment, stats_from_directory, summary_table,
                      write_run)
from .physics import WorldConfig, load_world_config

log = logging.getLogger("qwop_evolve")


def _seeding(text: str) -> tuple[int, int] | str:
    if text.strip().lower() == "random":
        return "random"
    try:
        m, n = (int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected M,N or 'random', got {text!r}") from None
    return m, n


def _world(args) -> WorldConfig:
    return load_world_config(args.config) if args.config else WorldConfig()


def _ga_overrides(args) -> dict:
    out = {}
    if args.rep:
        out["representation"] = args.rep
    if args.variant:
        out["variant"] = args.variant
    if args.seeding == "random":
        out["seed_pool"] = None
    elif args.seeding is not None:
        out["seed_pool"], out["population_size"] = args.seeding
    if args.dynamic_mutation:
        out["mutation_mode"] = "dynamic"
    if args.dynamic_replacement:
        out["replacement_mode"] = "dynamic"
    if args.budget is not None:
        out["eval_budget"] = args.budget
    if args.pop is not None:
        out["population_size"] = args.pop
    if args.seed is not None:
        out["rng_seed"] = args.seed
    return out


def cmd_evolve(args) -> int:
    overrides = _ga_overrides(args)
    cfg = load_ga_config(args.config, **overrides) if args.config else GAConfig(**overrides)
    world = _world(args)
    out = output_root(args.out) / "evolve"
    with PhysicsEvaluator(world, cfg.eval_time_limit_s, workers=args.workers) as ev:
        result = run(cfg, ev, progress=lambda n, best: log.info("evaluation %d best %.3f", n, best))
    write_run(result, out, "run")
    (out / "config.ini").write_text(dump_ga_config(cfg), encoding="utf-8")
    print(f"best fitness {result.final_best:.3f}  final mean {result.final_mean:.3f}")
    print(format_individual(result.best), end="")
    if args.trace:
        rep = replay(out / "run.best", world, out / "run.trace")
        print(f"trace written to {rep.trace_path}")
    print(f"results in {out}")
    return 0


def cmd_experiment(args) -> int:
    world = _world(args)
    path = Path(args.spec)
    if path.exists():
        spec = load_spec(path)
        if args.trials is not None or args.seed is not None:
            spec = dataclasses.replace(
                spec, trials=args.trials or spec.trials,
                base_seed=spec.base_seed if args.seed is None else args.seed)
    else:
        spec = preset(args.spec, budget=args.budget, trials=args.trials, pop=args.pop,
                      base_seed=args.seed or 0, world=world)
    results = run_experiment(
        spec, args.out, workers=args.workers,
        progress=lambda label, trial, r: log.info("%s trial %d best %.3f", label, trial, r.final_best))
    print(summary_table(results), end="")
    print(f"results in {output_root(args.out) / spec.name}")
    return 0


def cmd_seed_pool(args) -> int:
    m, n = args.seeding if isinstance(args.seeding, tuple) else (500, 25)
    rep = Representation(args.rep or "bm")
    rng = np.random.default_rng(args.seed or 0)
    pop = seed_population(m, n, rep, _world(args), rng)
    text = "".join(format_individual(ind) for ind in pop)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"{n} genomes written to {args.out}")
    else:
        print(text, end="")
    return 0


def cmd_replay(args) -> int:
    trace = args.trace_file or (Path(args.genome_file).with_suffix(".trace") if args.trace else None)
    try:
        res = replay(args.genome_file, _world(args), trace, index=args.index)
    except GenomeParseError as exc:
        print(f"{args.genome_file}: {exc}", file=sys.stderr)
        return 2
    ep = res.episode
    print(f"outcome {ep.outcome.name}  distance {ep.distance_m:.1f} m  elapsed {ep.elapsed_s:.3f} s  "
          f"fitness {res.record.fitness:.4f}")
    if res.matches is not None:
        print("matches stored record" if res.matches else "DIFFERS from stored record")
    if res.trace_path:
        print(f"trace written to {res.trace_path}")
    return 0 if res.matches in (None, True) else 1


def cmd_stats(args) -> int:
    for label, s in stats_from_directory(args.history_dir).items():
        print(format_stats(label, s))
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file with [ga] and/or [world] sections")
    common.add_argument("--out", help="output root (default: $QWOP_EVOLVE_OUT or ./runs)")
    common.add_argument("--seed", type=int, help="rng seed (base seed for experiments)")
    common.add_argument("--workers", type=int, default=1, help="parallel evaluator threads")
    common.add_argument("-v", "--verbose", action="store_true")

    ga = argparse.ArgumentParser(add_help=False)
    ga.add_argument("--rep", choices=[r.value for r in Representation])
    ga.add_argument("--variant", choices=["ss", "gen", "cell"])
    ga.add_argument("--seeding", type=_seeding, metavar="M,N|random")
    ga.add_argument("--dynamic-mutation", action="store_true")
    ga.add_argument("--dynamic-replacement", action="store_true")
    ga.add_argument("--budget", type=int)
    ga.add_argument("--pop", type=int)
    ga.add_argument("--trials", type=int)
    ga.add_argument("--trace", action="store_true", help="also write a physics trace")

    parser = argparse.ArgumentParser(prog="qwop-evolve", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evolve", parents=[common, ga], help="run one GA configuration")
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("experiment", parents=[common, ga],
                       help="run a preset (exp1..exp4) or an experiment spec file")
    p.add_argument("spec")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("seed-pool", parents=[common, ga], help="run Seeding(M,N) on its own")
    p.set_defaults(func=cmd_seed_pool)

    p = sub.add_parser("replay", parents=[common, ga], help="replay a genome file with tracing")
    p.add_argument("genome_file")
    p.add_argument("--index", type=int, default=0, help="which genome in the file")
    p.add_argument("--trace-file", help="trace output path (implies --trace)")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("stats", parents=[common], help="recompute statistics from histories")
    p.add_argument("history_dir")
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the PASS/FAIL lines are
printed even when output capture is on.
"""
import filecmp
import math
import time
from collections import Counter
from itertools import product

import numpy as np
import pytest

from qwop_evolve import cli
from qwop_evolve.engine import (
    GAConfig, alpha, mutation_rate, replacement_select_dynamic, replacement_select_static, run,
    tournament_select,
)
from qwop_evolve.evaluation import (
    FitnessRecord, Individual, LetterCountEvaluator, PhysicsEvaluator, evaluate, fitness,
)
from qwop_evolve.genome import (
    BITMASK_LETTERS, Genome, KeyMask, decode, letter_to_mask, mask_to_letter, random_genome,
    validate,
)
from qwop_evolve.harness import Arm, ExperimentSpec, run_experiment
from qwop_evolve.physics import WorldConfig, run_episode
from qwop_evolve.variation import (
    MUTATION_OPERATORS, VariationParams, apply_mutation, creep_duration, cut_and_splice,
    mutate, two_point_crossover,
)

REPS = ("ks", "kud", "bm", "bmd")
Q, W, O, P = KeyMask.Q, KeyMask.W, KeyMask.O, KeyMask.P
NONE = KeyMask.NONE


@pytest.fixture
def report(capsys):
    def emit(number, title, ok, detail=""):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number:2d}: {title}"
                  + (f" ({detail})" if detail else ""))
        assert ok, detail
    return emit


def test_criterion_01_fitness_formula(report):
    cases = [((9.9, 0.1), 9.9), ((9.9, 1.0), 9.9), ((9.9, 10.0), 9.9),
             ((10.0, 1.0), 20.0), ((50.0, 2.0), 75.0)]
    bad = [(args, fitness(*args), want) for args, want in cases
           if not math.isclose(fitness(*args), want, rel_tol=1e-15, abs_tol=0.0)]
    report(1, "fitness formula exactness", not bad, f"mismatches: {bad}" if bad else "5/5 exact")


def test_criterion_02_representation_decoding(report):
    problems = []

    def expect(rep, tokens, events, count=None):
        got = list(decode(Genome(rep, tokens)))
        if count is not None:
            got = got[:count]
        if got != events:
            problems.append((rep, got, events))

    # keystroke: each key held 150 ms, then released for a 50 ms gap
    ks = "WWPQPWOOPQW"
    expect("ks", ks, [e for k in ks for e in ((letter_to_mask({"Q": "H", "W": "L", "O": "N", "P": "O"}[k]), 150), (NONE, 50))][:-1])
    expect("ks", ks, [(W, 150), (NONE, 50), (W, 150), (NONE, 50), (P, 150), (NONE, 50), (Q, 150)], 7)
    # keyup/keydown: running key state, every symbol lasts 150 ms
    expect("kud", "PpWQOw", [(P, 150), (NONE, 150), (W, 150), (Q | W, 150), (Q | W | O, 150), (Q | O, 150)])
    expect("kud", "Pp+", [(P, 150), (NONE, 150), (NONE, 150)])
    # bitmask: Q W O, then Q W, then all four, then O P, then nothing
    expect("bm", "BDAMP", [(Q | W | O, 150), (Q | W, 150), (Q | W | O | P, 150), (O | P, 150), (NONE, 150)])
    # bitmask-duration: W for 117 ms, then Q and O for 433 ms
    expect("bmd", (("L", 117), ("F", 433)), [(W, 117), (Q | O, 433)])

    rows = {"A": "1111", "B": "1110", "C": "1101", "D": "1100", "E": "1011", "F": "1010",
            "G": "1001", "H": "1000", "I": "0111", "J": "0110", "K": "0101", "L": "0100",
            "M": "0011", "N": "0010", "O": "0001", "P": "0000"}
    for letter, bits in rows.items():
        m = letter_to_mask(letter)
        if "".join("1" if flag else "0" for flag in (m.q, m.w, m.o, m.p)) != bits:
            problems.append(("table", letter, bits))
    images = {letter_to_mask(c) for c in BITMASK_LETTERS}
    if len(images) != 16 or any(letter_to_mask(mask_to_letter(i)) != i for i in range(16)):
        problems.append("bijectivity")
    report(2, "representation decoding and letter table", not problems,
           f"{problems}" if problems else "worked examples, 16 table rows, bijection")


def test_criterion_03_schedule_endpoints(report):
    T = 1000
    got = (mutation_rate(0, T, "dynamic"), mutation_rate(T, T, "dynamic"), alpha(0, T), alpha(T, T))
    want = (1.0, 0.15, 0.5, 2.0)
    ok = got == want
    report(3, "schedule endpoints", ok, f"m(0), m(T), a(0), a(T) = {got}")


def test_criterion_04_operator_properties(report):
    rng = np.random.default_rng(2024)
    n = 10_000
    violations = Counter()
    params = VariationParams()
    for rep in REPS:
        for _ in range(n):
            a, b = random_genome(rep, rng), random_genome(rep, rng)
            c1, c2 = cut_and_splice(a, b, rng)
            if validate(c1) or validate(c2):
                violations[(rep, "cut_and_splice closure")] += 1
            if Counter(c1.tokens) + Counter(c2.tokens) != Counter(a.tokens) + Counter(b.tokens):
                violations[(rep, "cut_and_splice conservation")] += 1
            c1, c2 = two_point_crossover(a, b, rng)
            if validate(c1) or validate(c2):
                violations[(rep, "two_point closure")] += 1
            if (len(c1), len(c2)) != (len(a), len(b)):
                violations[(rep, "two_point length")] += 1
        for op in MUTATION_OPERATORS:
            for _ in range(n):
                g = random_genome(rep, rng)
                out = apply_mutation(g, op, rng)
                if validate(out):
                    violations[(rep, f"{op} closure")] += 1
                if abs(len(out) - len(g)) > 1:
                    violations[(rep, f"{op} length")] += 1
        for _ in range(n):
            g = random_genome(rep, rng)
            out = mutate(g, params, rng, rate=1.0)
            if validate(out) or abs(len(out) - len(g)) > 1:
                violations[(rep, "mutate")] += 1
    for _ in range(n):
        g = random_genome("bmd", rng)
        out = creep_duration(g, int(rng.integers(len(g))), rng.normal(0, 200))
        if validate(out) or len(out) != len(g):
            violations[("bmd", "creep")] += 1
    report(4, "operator property suite", not violations,
           f"violations {dict(violations)}" if violations else f"{n} invocations per operator per representation, 0 violations")


def _pop(fits):
    return [Individual(Genome("bm", "A"), FitnessRecord(float(f), float(f), 1.0, None)) for f in fits]


def test_criterion_05_selection_distributions(report):
    rng = np.random.default_rng(77)
    draws = 10_000
    notes = []
    ok = True

    pop = _pop(np.random.default_rng(1).permutation(25))
    best = sum(tournament_select(pop, 6, rng).fitness == 24 for _ in range(draws)) / draws
    oracle = 1 - math.comb(24, 6) / math.comb(25, 6)
    ok &= abs(best - oracle) <= 0.02
    notes.append(f"tournament {best:.4f} vs {oracle:.4f}")

    fits = [p.fitness for p in pop]
    worst = sorted(range(25), key=lambda i: fits[i])[:5]
    counts = Counter(replacement_select_static(pop, rng) for _ in range(draws))
    freqs = [counts[i] / draws for i in worst]
    ok &= set(counts) == set(worst) and all(abs(f - 0.2) <= 0.02 for f in freqs)
    notes.append("worst-five " + ",".join(f"{f:.3f}" for f in freqs))

    fits = [float(f) for f in np.random.default_rng(2).uniform(0, 100, 25)]
    t, T = 300, 1000
    a = 0.5 + 1.5 * t / T
    total = sum(fits)  # the weight's denominator is the population's total fitness
    raw = [(1 - f / total) ** a for f in fits]
    expected = [w / sum(raw) for w in raw]
    counts = Counter(replacement_select_dynamic(_pop(fits), t, T, rng) for _ in range(draws))
    dev = max(abs(counts[i] / draws - expected[i]) for i in range(25))
    ok &= dev <= 0.02
    notes.append(f"dynamic max deviation {dev:.4f}")
    report(5, "selection and replacement distributions", bool(ok), "; ".join(notes))


def test_criterion_06_simulator_fuzz_and_determinism(report):
    rng = np.random.default_rng(6)
    cfg = WorldConfig()
    worst = np.zeros(3)
    nonfinite = 0
    for rep in REPS:
        for _ in range(2500):
            _, s = run_episode(decode(random_genome(rep, rng)), cfg, 45.0, stats=True)
            nonfinite += not s.finite
            worst = np.maximum(worst, (s.max_penetration, s.max_joint_gap, s.max_limit_overshoot))
    safe = (nonfinite == 0 and worst[0] <= cfg.contact_tolerance
            and worst[1] <= cfg.joint_tolerance and worst[2] <= cfg.limit_tolerance)

    genomes = [random_genome(REPS[i % 4], rng) for i in range(100)]
    first = [evaluate(g) for g in genomes]
    second = [evaluate(g) for g in genomes]
    with PhysicsEvaluator(workers=4) as ev:
        pooled = ev.evaluate_many(genomes)
    raw1 = [run_episode(decode(g)).torso_x for g in genomes]
    raw2 = [run_episode(decode(g)).torso_x for g in genomes]
    deterministic = first == second == pooled and raw1 == raw2
    report(6, "simulator safety fuzz and determinism", safe and deterministic,
           f"10000 episodes, nonfinite={nonfinite}, penetration={worst[0]:.4f} m, "
           f"joint gap={worst[1]:.2e} m, limit overshoot={worst[2]:.2e} rad, "
           f"deterministic={deterministic}")


def test_criterion_07_random_gaits_fail(report):
    rng = np.random.default_rng(7)
    short = sum(evaluate(random_genome("bm", rng)).distance_m < 10.0 for _ in range(500))
    report(7, "random bitmask gaits mostly fail", short / 500 >= 0.8, f"{short}/500 below 10 m")


def test_criterion_08_seeding_beats_random(report, tmp_path):
    base = GAConfig(population_size=10, eval_budget=200)
    spec = ExperimentSpec("seeding", (Arm("Random", base), Arm("Seeded", base.replace(seed_pool=200))),
                          trials=5, base_seed=0)
    res = run_experiment(spec, tmp_path)
    pairs = [(s.final_best, r.final_best) for s, r in zip(res["Seeded"].runs, res["Random"].runs)]
    wins = sum(s > r for s, r in pairs)
    report(8, "seeded initialization beats random (desk scale)", wins >= 4,
           f"{wins}/5 paired wins; seeded vs random " + ", ".join(f"{s:.1f}/{r:.1f}" for s, r in pairs))


def test_criterion_09_letter_count_benchmark(report):
    finals = {}
    for variant in ("ss", "gen", "cell"):
        res = run(GAConfig(variant=variant, eval_budget=1000, rng_seed=0), LetterCountEvaluator("A"))
        finals[variant] = res.final_best
    report(9, "engine benchmark on letter count", all(v >= 36 for v in finals.values()),
           ", ".join(f"{k}={v:.0f}" for k, v in finals.items()))


def test_criterion_10_performance(report):
    cfg = GAConfig(eval_budget=1000, seed_pool=500, rng_seed=0)
    start = time.perf_counter()
    with PhysicsEvaluator() as ev:
        res = run(cfg, ev)
        counted = ev.counter.value
    actual = time.perf_counter() - start

    # worst case: every evaluation lasts the full 45 simulated seconds
    idle = decode(Genome("bm", "P"))
    samples = []
    for _ in range(5):
        t0 = time.perf_counter()
        ep = run_episode(idle, time_limit_s=45.0)
        samples.append(time.perf_counter() - t0)
    full_length = ep.steps == 9000
    projected = 1000 * float(np.median(samples))
    ok = counted == 1000 and len(res.history) == 1000 and actual < 600 and projected < 600 and full_length
    report(10, "1000 evaluations within 10 minutes", ok,
           f"real run {actual:.1f} s; all-timeout projection {projected:.1f} s; "
           f"speedup over 6.5 h at least {23400 / max(actual, projected):.0f}x")


def test_criterion_11_reproducible_experiment(report, tmp_path):
    dirs = []
    for name in ("a", "b"):
        out = tmp_path / name
        code = cli.main(["experiment", "exp4", "--budget", "30", "--pop", "9", "--trials", "2",
                         "--seed", "5", "--out", str(out)])
        assert code == 0
        dirs.append(out / "exp4")

    def compare(cmp):
        if cmp.left_only or cmp.right_only or cmp.diff_files or cmp.funny_files:
            return False
        _, mismatch, errors = filecmp.cmpfiles(cmp.left, cmp.right, cmp.common_files, shallow=False)
        return not mismatch and not errors and all(compare(s) for s in cmp.subdirs.values())

    files = sorted(p.relative_to(dirs[0]) for p in dirs[0].rglob("*") if p.is_file())
    same = compare(filecmp.dircmp(*dirs)) and all(
        (dirs[0] / f).read_bytes() == (dirs[1] / f).read_bytes() for f in files)
    report(11, "byte-identical experiment output", same, f"{len(files)} files compared")

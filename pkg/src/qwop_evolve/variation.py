"""Crossover and mutation over variable-length genomes."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .genome import MIN_SPACING_MS, Genome, Representation, Token, random_token


@dataclass(frozen=True)
class VariationParams:
    p_crossover: float = 0.9
    p_mutation: float = 0.15
    creep_sigma: float = 25.0

    def __post_init__(self):
        for name in ("p_crossover", "p_mutation"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")
        if not self.creep_sigma > 0:
            raise ValueError(f"creep_sigma must be positive, got {self.creep_sigma}")


def _check_pair(a: Genome, b: Genome) -> None:
    if a.representation is not b.representation:
        raise ValueError(
            f"cannot cross {a.representation.value} with {b.representation.value} genomes")


def cut_and_splice(a: Genome, b: Genome, rng: np.random.Generator | None = None,
                   cuts: tuple[int, int] | None = None) -> tuple[Genome, Genome]:
    """One-point crossover with an independent cut in each parent.

    Cuts are drawn from ``[1, len - 1]`` so neither child can come out empty.
    A length-1 parent cannot be cut and is passed through as its own child.
    """
    _check_pair(a, b)
    if len(a) < 2 or len(b) < 2:
        return a, b
    if cuts is None:
        i = int(rng.integers(1, len(a)))
        j = int(rng.integers(1, len(b)))
    else:
        i, j = cuts
    ta, tb = a.tokens, b.tokens
    return a.with_tokens(ta[:i] + tb[j:]), b.with_tokens(tb[:j] + ta[i:])


def two_point_crossover(a: Genome, b: Genome, rng: np.random.Generator | None = None,
                        points: tuple[int, int] | None = None) -> tuple[Genome, Genome]:
    _check_pair(a, b)
    m = min(len(a), len(b))
    if points is None:
        i, j = sorted(int(x) for x in rng.choice(m + 1, size=2, replace=False))
    else:
        i, j = points
        if not 0 <= i <= j <= m:
            raise ValueError(f"crossover points ({i}, {j}) outside [0, {m}]")
    ta, tb = a.tokens, b.tokens
    return (a.with_tokens(ta[:i] + tb[i:j] + ta[j:]),
            b.with_tokens(tb[:i] + ta[i:j] + tb[j:]))


def crossover(a: Genome, b: Genome, params: VariationParams,
              rng: np.random.Generator) -> tuple[Genome, Genome]:
    _check_pair(a, b)
    if rng.random() >= params.p_crossover:
        return a, b
    if rng.integers(2) == 0:
        return cut_and_splice(a, b, rng)
    return two_point_crossover(a, b, rng)


# single-edit mutation operators; positions are explicit so callers and tests can pin them

def replace_token(g: Genome, index: int, token: Token) -> Genome:
    tokens = list(g.tokens)
    if g.representation is Representation.BITMASK_DURATION and isinstance(token, str):
        token = (token, tokens[index][1])
    tokens[index] = token
    return g.with_tokens(tokens)


def insert_token(g: Genome, index: int, token: Token) -> Genome:
    tokens = list(g.tokens)
    tokens.insert(index, token)
    return g.with_tokens(tokens)


def swap_tokens(g: Genome, i: int, j: int) -> Genome:
    tokens = list(g.tokens)
    tokens[i], tokens[j] = tokens[j], tokens[i]
    return g.with_tokens(tokens)


def delete_token(g: Genome, index: int) -> Genome:
    if len(g) <= 1:
        return g
    tokens = list(g.tokens)
    del tokens[index]
    return g.with_tokens(tokens)


def creep_duration(g: Genome, index: int, delta: float) -> Genome:
    letter, duration = g.tokens[index]
    new = max(MIN_SPACING_MS, int(round(duration + delta)))
    tokens = list(g.tokens)
    tokens[index] = (letter, new)
    return g.with_tokens(tokens)


MUTATION_OPERATORS = ("replace", "insert", "swap", "delete")


def _different_letter(current: str, alphabet: str, rng: np.random.Generator) -> str:
    choices = [c for c in alphabet if c != current]
    return choices[int(rng.integers(len(choices)))]


def apply_mutation(g: Genome, operator: str, rng: np.random.Generator) -> Genome:
    rep = g.representation
    n = len(g)
    if operator == "replace":
        i = int(rng.integers(n))
        current = g.tokens[i][0] if rep is Representation.BITMASK_DURATION else g.tokens[i]
        return replace_token(g, i, _different_letter(current, rep.alphabet, rng))
    if operator == "insert":
        return insert_token(g, int(rng.integers(n + 1)), random_token(rep, rng))
    if operator == "swap":
        if n < 2:
            return g
        i, j = (int(x) for x in rng.choice(n, size=2, replace=False))
        return swap_tokens(g, i, j)
    if operator == "delete":
        if n < 2:
            return g
        return delete_token(g, int(rng.integers(n)))
    raise ValueError(f"unknown mutation operator {operator!r}")


def mutate(g: Genome, params: VariationParams, rng: np.random.Generator,
           rate: float | None = None) -> Genome:
    """Mutate one child with probability ``rate`` (``params.p_mutation`` by default).

    When it fires, one of replace/insert/swap/delete is applied; duration
    genomes additionally get a Gaussian creep on one pair's hold time.
    """
    p = params.p_mutation if rate is None else rate
    if rng.random() >= p:
        return g
    operator = MUTATION_OPERATORS[int(rng.integers(len(MUTATION_OPERATORS)))]
    out = apply_mutation(g, operator, rng)
    if out.representation is Representation.BITMASK_DURATION:
        i = int(rng.integers(len(out)))
        out = creep_duration(out, i, rng.normal(0.0, params.creep_sigma))
    return out

"""Gait genotypes, their alphabets, and decoding into key-press timelines."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple, Sequence, Union

import numpy as np

KEY_HOLD_MS = 150
MIN_SPACING_MS = 50
INIT_LENGTH_RANGE = (20, 40)
INIT_DURATION_MEAN = 150.0
INIT_DURATION_SD = 25.0

BITMASK_LETTERS = "ABCDEFGHIJKLMNOP"


class KeyMask(enum.IntFlag):
    """Pressed state of the four keys, packed as a 4-bit integer (Q is the high bit)."""

    NONE = 0
    P = 1
    O = 2
    W = 4
    Q = 8

    @property
    def q(self) -> bool:
        return bool(self & KeyMask.Q)

    @property
    def w(self) -> bool:
        return bool(self & KeyMask.W)

    @property
    def o(self) -> bool:
        return bool(self & KeyMask.O)

    @property
    def p(self) -> bool:
        return bool(self & KeyMask.P)

    @classmethod
    def from_keys(cls, q: bool = False, w: bool = False, o: bool = False, p: bool = False) -> "KeyMask":
        return cls((8 if q else 0) | (4 if w else 0) | (2 if o else 0) | (1 if p else 0))

    def label(self) -> str:
        return "".join(k for k in "QWOP" if self & KeyMask[k]) or "-"


class Representation(str, enum.Enum):
    KEYSTROKE = "ks"
    KEYUP_KEYDOWN = "kud"
    BITMASK = "bm"
    BITMASK_DURATION = "bmd"

    @property
    def alphabet(self) -> str:
        return _ALPHABETS[self]


_ALPHABETS = {
    Representation.KEYSTROKE: "QWOP",
    Representation.KEYUP_KEYDOWN: "QWOPqwop+",
    Representation.BITMASK: BITMASK_LETTERS,
    Representation.BITMASK_DURATION: BITMASK_LETTERS,
}

Token = Union[str, tuple[str, int]]


class InvalidTokenError(ValueError):
    def __init__(self, index: int, token: object, reason: str = "not in alphabet"):
        super().__init__(f"invalid token {token!r} at index {index}: {reason}")
        self.index = index
        self.token = token


class GenomeParseError(ValueError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


def letter_to_mask(letter: str) -> KeyMask:
    """Map a bitmask letter A..P to its key state.

    A is every key held, P is every key released; the letter's offset from A
    is the bitwise complement of the QWOP mask.
    """
    idx = BITMASK_LETTERS.find(letter) if isinstance(letter, str) and len(letter) == 1 else -1
    if idx < 0:
        raise InvalidTokenError(0, letter, "not a bitmask letter")
    return KeyMask(15 - idx)


def mask_to_letter(mask: KeyMask | int) -> str:
    return BITMASK_LETTERS[15 - int(mask)]


@dataclass(frozen=True)
class Genome:
    representation: Representation
    tokens: tuple[Token, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "representation", Representation(self.representation))
        object.__setattr__(self, "tokens", tuple(self.tokens))

    def __len__(self) -> int:
        return len(self.tokens)

    def with_tokens(self, tokens: Sequence[Token]) -> "Genome":
        return Genome(self.representation, tuple(tokens))

    def __str__(self) -> str:
        return format_genome(self)


class ControlEvent(NamedTuple):
    mask: KeyMask
    duration_ms: int


@dataclass(frozen=True)
class ControlTimeline:
    events: tuple[ControlEvent, ...]

    @property
    def total_ms(self) -> int:
        return sum(e.duration_ms for e in self.events)

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self):
        return iter(self.events)


@dataclass(frozen=True)
class Violation:
    index: int | None
    message: str


def validate(genome: Genome) -> list[Violation]:
    """Return every rule the genome breaks; an empty list means it is valid."""
    problems: list[Violation] = []
    if len(genome.tokens) < 1:
        problems.append(Violation(None, "genome is empty"))
    alphabet = genome.representation.alphabet
    duration_rep = genome.representation is Representation.BITMASK_DURATION
    for i, tok in enumerate(genome.tokens):
        if duration_rep:
            if not (isinstance(tok, tuple) and len(tok) == 2):
                problems.append(Violation(i, f"expected (letter, duration) pair, got {tok!r}"))
                continue
            letter, duration = tok
            if not (isinstance(letter, str) and len(letter) == 1 and letter in alphabet):
                problems.append(Violation(i, f"letter {letter!r} not in alphabet"))
            if not isinstance(duration, (int, np.integer)) or isinstance(duration, bool):
                problems.append(Violation(i, f"duration {duration!r} is not an integer"))
            elif duration < MIN_SPACING_MS:
                problems.append(Violation(i, f"duration {duration} below {MIN_SPACING_MS} ms floor"))
        elif not (isinstance(tok, str) and len(tok) == 1 and tok in alphabet):
            problems.append(Violation(i, f"token {tok!r} not in alphabet"))
    return problems


def sample_duration(rng: np.random.Generator) -> int:
    return max(MIN_SPACING_MS, int(round(rng.normal(INIT_DURATION_MEAN, INIT_DURATION_SD))))


def random_token(rep: Representation, rng: np.random.Generator) -> Token:
    alphabet = rep.alphabet
    letter = alphabet[int(rng.integers(len(alphabet)))]
    if rep is Representation.BITMASK_DURATION:
        return (letter, sample_duration(rng))
    return letter


def random_genome(rep: Representation | str, rng: np.random.Generator) -> Genome:
    rep = Representation(rep)
    lo, hi = INIT_LENGTH_RANGE
    k = int(rng.integers(lo, hi + 1))
    return Genome(rep, tuple(random_token(rep, rng) for _ in range(k)))


def decode(genome: Genome) -> ControlTimeline:
    """Translate a genotype into the key-state schedule it plays."""
    rep = genome.representation
    bad = validate(genome)
    if bad:
        first = bad[0]
        index = first.index if first.index is not None else 0
        token = genome.tokens[index] if genome.tokens else None
        raise InvalidTokenError(index, token, first.message)

    events: list[ControlEvent] = []
    if rep is Representation.KEYSTROKE:
        for i, key in enumerate(genome.tokens):
            if i:
                events.append(ControlEvent(KeyMask.NONE, MIN_SPACING_MS))
            events.append(ControlEvent(KeyMask[key], KEY_HOLD_MS))
    elif rep is Representation.KEYUP_KEYDOWN:
        mask = KeyMask.NONE
        for tok in genome.tokens:
            if tok.isupper():
                mask |= KeyMask[tok]
            elif tok.islower():
                mask = KeyMask(mask & (15 ^ KeyMask[tok.upper()]))
            events.append(ControlEvent(KeyMask(mask), KEY_HOLD_MS))
    elif rep is Representation.BITMASK:
        events = [ControlEvent(letter_to_mask(t), KEY_HOLD_MS) for t in genome.tokens]
    else:
        events = [ControlEvent(letter_to_mask(t), int(d)) for t, d in genome.tokens]
    return ControlTimeline(tuple(events))


# text format: "<tag>:<tokens>", e.g. "bm:BDAMPD" or "bmd:L117,F433"

def format_genome(genome: Genome) -> str:
    rep = genome.representation
    if rep is Representation.BITMASK_DURATION:
        body = ",".join(f"{letter}{int(d)}" for letter, d in genome.tokens)
    else:
        body = "".join(genome.tokens)
    return f"{rep.value}:{body}"


def parse_genome(text: str, line: int = 1) -> Genome:
    text = text.strip()
    tag, sep, body = text.partition(":")
    if not sep:
        raise GenomeParseError("missing '<rep>:' prefix", line, 1)
    try:
        rep = Representation(tag.strip())
    except ValueError:
        raise GenomeParseError(f"unknown representation tag {tag!r}", line, 1) from None
    offset = len(tag) + 2  # 1-based column of first body character
    if not body:
        raise GenomeParseError("genome has no tokens", line, offset)

    tokens: list[Token] = []
    if rep is Representation.BITMASK_DURATION:
        col = offset
        for chunk in body.split(","):
            if len(chunk) < 2 or chunk[0] not in rep.alphabet or not chunk[1:].isdigit():
                raise GenomeParseError(f"malformed pair {chunk!r}", line, col)
            duration = int(chunk[1:])
            if duration < MIN_SPACING_MS:
                raise GenomeParseError(f"duration {duration} below {MIN_SPACING_MS} ms", line, col + 1)
            tokens.append((chunk[0], duration))
            col += len(chunk) + 1
    else:
        for i, ch in enumerate(body):
            if ch not in rep.alphabet:
                raise GenomeParseError(f"token {ch!r} not in {rep.value} alphabet", line, offset + i)
            tokens.append(ch)
    return Genome(rep, tuple(tokens))


def read_genomes(path) -> list[Genome]:
    """Read one genome per non-blank, non-comment line."""
    genomes = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            stripped = raw.strip()
            if not stripped or stripped.startswith("#"):
                continue
            genomes.append(parse_genome(stripped, line=lineno))
    return genomes

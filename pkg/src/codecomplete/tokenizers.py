"""String-to-unit machinery for the completion models.

Covers the four granularities a method name can be decomposed into (whole
token, identifier subtokens, learned byte-pair units, characters) plus the
hashing trick that replaces a stored subtoken vocabulary.
"""

from __future__ import annotations

import hashlib
import re
from collections import Counter
from dataclasses import dataclass, field

UNK = "<unk>"

_TOKEN_RE = re.compile(r"""
      [A-Za-z_][A-Za-z0-9_]*        # identifier / keyword
    | \d+\.\d+ | \d+                # number (dot only eaten between digits)
    | "(?:\\.|[^"\\])*"             # double-quoted string
    | '(?:\\.|[^'\\])*'             # single-quoted string
    | \S                            # any other punctuation char, one token
""", re.VERBOSE)

_SUBTOKEN_BOUNDARY = re.compile(r"(?<=[a-z0-9])(?=[A-Z])")


def tokenize_source(text: str) -> list[str]:
    """Heuristic lexer for the interactive path; datasets arrive pre-tokenized."""
    return _TOKEN_RE.findall(text)


def split_subtokens(token: str) -> list[str]:
    """Split an identifier on underscores and case boundaries, lowercased.

    Digits ride along with the run they follow ("array1" stays whole).  Falls
    back to the whole token so the result is never empty.
    """
    parts = []
    for piece in token.split("_"):
        for sub in _SUBTOKEN_BOUNDARY.split(piece):
            if sub:
                parts.append(sub.lower())
    return parts or [token.lower()]


# ---------------------------------------------------------------------------
# byte-pair encoding
# ---------------------------------------------------------------------------

END_MARKER = "</w>"


@dataclass(frozen=True)
class BpeModel:
    """Ordered merge rules plus the alphabet they were learned over."""

    merges: list[tuple[str, str]]
    alphabet: frozenset[str]
    marker: str = END_MARKER


def bpe_train(corpus: Counter, merge_budget: int,
              marker: str = END_MARKER) -> BpeModel:
    """Learn greedy pair merges from a token multiset.

    Each token is a character sequence with a trailing end-of-token marker;
    the marker is never part of a merge.  Each round merges the single most
    frequent adjacent pair (at least 2 occurrences; ties broken by taking the
    lexicographically smallest pair) in every token simultaneously.
    """
    words: list[tuple[list[str], int]] = [
        (list(token) + [marker], count) for token, count in sorted(corpus.items())
    ]
    alphabet = frozenset(ch for token in corpus for ch in token)
    merges: list[tuple[str, str]] = []

    while len(merges) < merge_budget:
        counts: Counter = Counter()
        for units, count in words:
            for pair in zip(units, units[1:]):
                if pair[0] != marker and pair[1] != marker:
                    counts[pair] += count
        if not counts:
            break
        top = max(counts.values())
        if top < 2:
            break
        best = min(pair for pair, c in counts.items() if c == top)
        merges.append(best)
        merged = best[0] + best[1]
        for units, _ in words:
            i = 0
            while i < len(units) - 1:
                if units[i] == best[0] and units[i + 1] == best[1]:
                    units[i:i + 2] = [merged]
                else:
                    i += 1
    return BpeModel(merges=merges, alphabet=alphabet, marker=marker)


def bpe_apply(model: BpeModel, token: str) -> list[str]:
    """Segment a token by replaying the learned merges in training order.

    The trailing marker is internal only; returned units concatenate back to
    the original token.  Characters outside the training alphabet simply never
    merge.
    """
    if not token:
        return []
    units = list(token) + [model.marker]
    for left, right in model.merges:
        merged = left + right
        i = 0
        while i < len(units) - 1:
            if units[i] == left and units[i + 1] == right:
                units[i:i + 2] = [merged]
            else:
                i += 1
    return units[:-1]


# ---------------------------------------------------------------------------
# closed vocabularies
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Vocabulary:
    """Most-frequent-first unit list; id 0 is the catch-all unknown symbol."""

    units: list[str]
    _index: dict = field(repr=False, default=None)

    def __post_init__(self):
        object.__setattr__(self, "_index",
                           {u: i for i, u in enumerate(self.units)})

    def lookup(self, unit: str) -> int:
        return self._index.get(unit, 0)

    def __contains__(self, unit: str) -> bool:
        return unit in self._index

    def __len__(self) -> int:
        return len(self.units)


def build_vocab(counts: Counter, max_size: int) -> Vocabulary:
    if max_size < 1:
        raise ValueError("vocabulary needs room for at least the unknown symbol")
    ranked = sorted((u for u in counts if u != UNK),
                    key=lambda u: (-counts[u], u))
    return Vocabulary(units=[UNK] + ranked[:max_size - 1])


# ---------------------------------------------------------------------------
# character alphabet
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CharAlphabet:
    """Frequent characters get dense ids; everything else shares one id."""

    chars: list[str]
    _index: dict = field(repr=False, default=None)

    def __post_init__(self):
        object.__setattr__(self, "_index",
                           {c: i for i, c in enumerate(self.chars)})

    @property
    def ooa_id(self) -> int:
        return len(self.chars)

    def encode(self, char: str) -> int:
        return self._index.get(char, self.ooa_id)

    def __len__(self) -> int:
        # table size including the out-of-alphabet slot
        return len(self.chars) + 1


def build_char_alphabet(tokens: Counter, max_size: int) -> CharAlphabet:
    counts: Counter = Counter()
    for token, n in tokens.items():
        for ch in token:
            counts[ch] += n
    ranked = sorted(counts, key=lambda c: (-counts[c], c))
    return CharAlphabet(chars=ranked[:max_size])


# ---------------------------------------------------------------------------
# feature hashing
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HashingScheme:
    """Hash-bucket count for vocabulary-free subtoken ids."""

    modulus: int

    def __post_init__(self):
        if self.modulus < 2:
            raise ValueError("hashing needs at least 2 buckets")


def feature_hash(scheme: HashingScheme, unit: str) -> int:
    """MD5 of the UTF-8 bytes, read big-endian, reduced mod the bucket count."""
    digest = hashlib.md5(unit.encode("utf-8")).digest()
    return int.from_bytes(digest, "big") % scheme.modulus

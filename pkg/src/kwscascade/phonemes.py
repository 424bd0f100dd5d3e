"""Phoneme inventory, lexicon lookup, tokenization and fuzzy phoneme groups."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import (
    BlankInGroup,
    DuplicateSymbol,
    EmptyInventory,
    EmptyText,
    OovWord,
    OverlappingGroups,
    UnknownSymbol,
)

BLANK = "<blk>"

_DATA = resources.files("kwscascade") / "data"
DEFAULT_INVENTORY = _DATA / "phonemes.txt"
DEFAULT_LEXICON = _DATA / "lexicon.dict"
DEFAULT_FUZZY = _DATA / "fuzzy.txt"


@dataclass(frozen=True)
class PhonemeInventory:
    symbols: tuple[str, ...]
    blank_index: int = 0
    _lookup: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.symbols) < 2:
            raise EmptyInventory(f"need at least 2 symbols, got {len(self.symbols)}")
        lookup = {}
        for i, s in enumerate(self.symbols):
            if s in lookup:
                raise DuplicateSymbol(s)
            lookup[s] = i
        if self.symbols[self.blank_index] != BLANK:
            raise EmptyInventory(f"symbol {self.blank_index} must be {BLANK!r}")
        object.__setattr__(self, "_lookup", lookup)

    @property
    def size(self) -> int:
        return len(self.symbols)

    def index(self, symbol: str) -> int:
        try:
            return self._lookup[symbol]
        except KeyError:
            raise UnknownSymbol(symbol) from None

    def __contains__(self, symbol) -> bool:
        return symbol in self._lookup

    def __len__(self) -> int:
        return len(self.symbols)


@dataclass(frozen=True)
class PhonemeSeq:
    tokens: tuple[int, ...]
    source_text: str = ""

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(int(t) for t in self.tokens))
        if not self.tokens:
            raise EmptyText("phoneme sequence is empty")
        if min(self.tokens) < 1:
            raise ValueError("phoneme sequence may not contain the blank token")

    def __len__(self) -> int:
        return len(self.tokens)

    def symbols(self, inv: PhonemeInventory) -> list[str]:
        return [inv.symbols[t] for t in self.tokens]

    @classmethod
    def from_symbols(cls, symbols, inv: PhonemeInventory, source_text: str = "") -> "PhonemeSeq":
        syms = list(symbols)
        for s in syms:
            if s == BLANK:
                raise ValueError("phoneme sequence may not contain the blank token")
        return cls(tuple(inv.index(s) for s in syms), source_text or " ".join(syms))


@dataclass(frozen=True)
class Lexicon:
    entries: dict  # WORD -> tuple of phoneme symbols

    def __contains__(self, word) -> bool:
        return word in self.entries

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class FuzzyMap:
    groups: tuple[frozenset, ...]
    index: dict  # phoneme index -> group id, only for grouped phonemes

    def fuzzy_set(self, p: int) -> frozenset:
        gid = self.index.get(p)
        return frozenset((p,)) if gid is None else self.groups[gid]

    @classmethod
    def identity(cls) -> "FuzzyMap":
        return cls((), {})


def _content_lines(path):
    if isinstance(path, str):
        path = Path(path)
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            yield line


def load_inventory(path=DEFAULT_INVENTORY) -> PhonemeInventory:
    symbols = list(_content_lines(path))
    if not symbols:
        raise EmptyInventory(f"{path}: no symbols")
    return PhonemeInventory(tuple(symbols))


def load_lexicon(path=DEFAULT_LEXICON, inv: PhonemeInventory | None = None) -> Lexicon:
    """Read a CMU-dict style file, keeping the first pronunciation of each word.

    Alternate pronunciations (``WORD(2)``) and ``;;;`` comments are skipped.
    """
    entries = {}
    for line in _content_lines(path):
        if line.startswith(";;;"):
            continue
        parts = line.split()
        word, phones = parts[0].upper(), parts[1:]
        if re.search(r"\(\d+\)$", word) or word in entries:
            continue
        if not phones:
            raise UnknownSymbol(f"{word}: empty pronunciation")
        if inv is not None:
            for p in phones:
                if p not in inv or p == BLANK:
                    raise UnknownSymbol(f"{word}: {p}")
        entries[word] = tuple(phones)
    return Lexicon(entries)


def normalize_words(text: str) -> list[str]:
    words = []
    for raw in text.split():
        w = re.sub(r"[^A-Z0-9']", "", raw.upper())
        if w:
            words.append(w)
    return words


def tokenize(text: str, lex: Lexicon, inv: PhonemeInventory) -> PhonemeSeq:
    words = normalize_words(text)
    if not words:
        raise EmptyText("text is empty after normalization")
    symbols = []
    for w in words:
        if w not in lex.entries:
            raise OovWord(w)
        symbols.extend(lex.entries[w])
    return PhonemeSeq(tuple(inv.index(s) for s in symbols), text)


def load_fuzzy_map(path=DEFAULT_FUZZY, inv: PhonemeInventory | None = None) -> FuzzyMap:
    inv = inv if inv is not None else load_inventory()
    groups, index = [], {}
    for line in _content_lines(path):
        syms = line.split()
        if len(syms) < 2:
            raise UnknownSymbol(f"group needs at least two symbols: {line!r}")
        members = set()
        for s in syms:
            if s == inv.symbols[inv.blank_index]:
                raise BlankInGroup(line)
            members.add(inv.index(s))
        gid = len(groups)
        for m in members:
            if m in index:
                raise OverlappingGroups(f"{inv.symbols[m]} appears in more than one group")
            index[m] = gid
        groups.append(frozenset(members))
    return FuzzyMap(tuple(groups), index)

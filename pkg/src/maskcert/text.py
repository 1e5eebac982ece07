"""Token sequences, coordinate diff sets, and the masking operation.

Documents are ordered lists of word tokens; all perturbation bookkeeping is
done on 1-based coordinate indices. Masking replaces every position outside
a keep set with the reserved sentinel ``[MASK]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import EmptyText, IndexOutOfRange, LengthMismatch, SentinelCollision

MASK = "[MASK]"


@dataclass(frozen=True)
class TokenSeq:
    """An immutable tokenized text; ``len()`` is the coordinate count T."""

    tokens: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))

    def __len__(self):
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)

    def __getitem__(self, i):
        return self.tokens[i]

    def text(self) -> str:
        return " ".join(self.tokens)


@dataclass(frozen=True)
class IndexSet:
    """A sorted set of 1-based coordinate indices."""

    indices: tuple[int, ...]

    def __post_init__(self):
        uniq = tuple(sorted(set(int(i) for i in self.indices)))
        object.__setattr__(self, "indices", uniq)

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def __contains__(self, i):
        return i in set(self.indices)

    def intersects(self, other: "IndexSet") -> bool:
        return bool(set(self.indices) & set(other.indices))


@dataclass(frozen=True)
class MaskedSeq:
    """A TokenSeq with everything outside ``keep`` replaced by [MASK]."""

    tokens: tuple[str, ...]
    keep: IndexSet = field(compare=False)

    def __len__(self):
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)

    def __getitem__(self, i):
        return self.tokens[i]

    def text(self) -> str:
        return " ".join(self.tokens)


def tokenize(text: str, reject_sentinel: bool = False) -> TokenSeq:
    """Lowercase whitespace tokenization; punctuation stays attached.

    Raises EmptyText when no tokens survive trimming. With
    ``reject_sentinel`` set, an input containing the literal mask token is
    refused so documents can never collide with the sentinel.
    """
    tokens = text.lower().split()
    if not tokens:
        raise EmptyText("no tokens after trimming")
    if reject_sentinel and any(t == MASK.lower() or t == MASK for t in tokens):
        raise SentinelCollision(f"input contains reserved token {MASK}")
    return TokenSeq(tuple(tokens))


def detokenize(x: TokenSeq | MaskedSeq) -> str:
    return " ".join(x.tokens)


def diff_set(x: TokenSeq, x2: TokenSeq) -> IndexSet:
    """Coordinate indices where two equal-length sequences differ.

    The size of the result is the Hamming distance between the sequences;
    unequal lengths are an error because the substitution attack model is
    length-preserving.
    """
    if len(x) != len(x2):
        raise LengthMismatch(f"lengths differ: {len(x)} vs {len(x2)}")
    return IndexSet(tuple(t + 1 for t in range(len(x)) if x[t] != x2[t]))


def apply_mask(x: TokenSeq, keep: IndexSet) -> MaskedSeq:
    """Mask every position of ``x`` not listed in ``keep``."""
    T = len(x)
    for i in keep:
        if not 1 <= i <= T:
            raise IndexOutOfRange(f"keep index {i} outside [1, {T}]")
    kept = set(keep.indices)
    tokens = tuple(x[t] if (t + 1) in kept else MASK for t in range(T))
    return MaskedSeq(tokens, keep)

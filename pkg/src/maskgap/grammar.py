"""Prefix-checkable constraints with incremental matcher states.

Three bounded language families are supported: single-pair bracket (Dyck)
languages with depth and length limits, finite languages compiled to a
character trie, and fixed-length binary "budget" languages accepted by a
compact (position, ones) automaton.

Matcher states are small immutable values (tuples or ints): advancing
returns a fresh state and can never corrupt the original, so cloning is
plain assignment and states can be shipped between workers freely.

EOS is an ordinary vocabulary token whose validity means "the current
prefix is a complete string"; it never appears inside a string.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

from .errors import ConstraintViolationError, EnumerationLimitError
from .toylm import Vocab, binary_vocab

ENUMERATION_LIMIT = 10**7

State = tuple  # Dyck: (depth, length); Budget: (pos, ones); Trie: int node id

_DYCK_VOCAB = Vocab(glyphs=("(", ")", "$"), eos=2)


class Grammar:
    """Shared interface for the grammar variants."""

    vocab: Vocab

    def initial_state(self) -> State:
        """State of the empty prefix."""
        raise NotImplementedError

    def valid_next(self, state: State) -> tuple[int, ...]:
        """Exactly the tokens some completion can follow, in glyph order.

        Contains EOS iff the current prefix is itself a complete string.
        Never empty for a reachable state.
        """
        raise NotImplementedError

    def advance(self, state: State, token: int) -> State:
        """New state after consuming ``token``; ``state`` is unchanged."""
        if token not in self.valid_next(state):
            raise ConstraintViolationError(
                f"token {token} not valid in state {state!r}"
            )
        return self._advance(state, token)

    def _advance(self, state: State, token: int) -> State:
        raise NotImplementedError

    def max_string_length(self) -> int:
        """Upper bound on string length (tokens before EOS)."""
        raise NotImplementedError

    def max_completion_tokens(self, state: State) -> int:
        """Longest possible completion from ``state``, including the EOS."""
        raise NotImplementedError

    def state_count(self) -> int:
        raise ValueError(f"state_count unsupported for {type(self).__name__}")

    def is_complete(self, state: State) -> bool:
        return self.vocab.eos in self.valid_next(state)

    def replay(self, tokens: tuple[int, ...]) -> State:
        """Advance a fresh matcher along ``tokens`` (no EOS)."""
        state = self.initial_state()
        for t in tokens:
            state = self.advance(state, t)
        return state

    def contains(self, tokens: tuple[int, ...]) -> bool:
        """Whether ``tokens`` (without EOS) is a complete valid string."""
        try:
            return self.is_complete(self.replay(tokens))
        except ConstraintViolationError:
            return False

    def enumerate_language(
        self, cap: int | None = None, limit: int = ENUMERATION_LIMIT
    ) -> list[tuple[int, ...]]:
        """All complete valid strings of at most ``cap`` tokens before EOS.

        Lexicographic in glyph order (a prefix precedes its extensions).
        Raises EnumerationLimitError beyond ``limit`` strings; callers with
        large regular languages should use the grouped analytic path.
        """
        cap = self.max_string_length() if cap is None else cap
        eos = self.vocab.eos
        out: list[tuple[int, ...]] = []

        def visit(state: State, prefix: tuple[int, ...]) -> None:
            candidates = self.valid_next(state)
            if eos in candidates:
                if len(out) >= limit:
                    raise EnumerationLimitError(
                        f"language exceeds the enumeration limit of {limit}"
                    )
                out.append(prefix)
            if len(prefix) == cap:
                return
            for tok in sorted(
                (t for t in candidates if t != eos),
                key=lambda t: self.vocab.glyphs[t],
            ):
                visit(self._advance(state, tok), prefix + (tok,))

        visit(self.initial_state(), ())
        return out


@dataclass(frozen=True)
class DyckGrammar(Grammar):
    """Balanced single-pair bracket strings with bounded depth and length.

    A string is valid when brackets match, nesting depth never exceeds
    ``max_depth`` and total length is at most ``max_length``. The empty
    string is valid. Matcher state is (open depth, consumed length), and
    validity is answered in O(1): a close needs depth > 0, an open needs
    spare depth and enough remaining budget to re-close
    (``max_length - length >= depth + 2``), EOS needs depth 0.
    """

    max_depth: int
    max_length: int

    OPEN = 0
    CLOSE = 1
    EOS = 2

    def __post_init__(self) -> None:
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.max_length < 2:
            raise ValueError("max_length must be >= 2")

    @property
    def vocab(self) -> Vocab:
        return _DYCK_VOCAB

    def initial_state(self) -> State:
        return (0, 0)

    def valid_next(self, state: State) -> tuple[int, ...]:
        depth, length = state
        out = []
        if depth < self.max_depth and self.max_length - length >= depth + 2:
            out.append(self.OPEN)
        if depth > 0:
            out.append(self.CLOSE)
        if depth == 0:
            out.append(self.EOS)
        return tuple(out)

    def _advance(self, state: State, token: int) -> State:
        depth, length = state
        if token == self.OPEN:
            return (depth + 1, length + 1)
        return (depth - 1, length + 1)

    def max_string_length(self) -> int:
        return self.max_length

    def max_completion_tokens(self, state: State) -> int:
        return self.max_length - state[1] + 1

    def state_count(self) -> int:
        seen = {self.initial_state()}
        frontier = [self.initial_state()]
        while frontier:
            state = frontier.pop()
            for tok in self.valid_next(state):
                if tok == self.EOS:
                    continue
                nxt = self._advance(state, tok)
                if nxt not in seen:
                    seen.add(nxt)
                    frontier.append(nxt)
        return len(seen)


class _TrieTable:
    """Flat trie: per-node child map, terminal flag and longest suffix."""

    def __init__(self, sequences: list[tuple[int, ...]]) -> None:
        self.children: list[dict[int, int]] = [{}]
        self.terminal: list[bool] = [False]
        for seq in sequences:
            node = 0
            for tok in seq:
                nxt = self.children[node].get(tok)
                if nxt is None:
                    nxt = len(self.children)
                    self.children[node][tok] = nxt
                    self.children.append({})
                    self.terminal.append(False)
                node = nxt
            self.terminal[node] = True
        self.max_suffix = [0] * len(self.children)
        for node in reversed(range(len(self.children))):  # children have larger ids
            longest = 0
            for child in self.children[node].values():
                longest = max(longest, 1 + self.max_suffix[child])
            self.max_suffix[node] = longest


@dataclass(frozen=True)
class TrieGrammar(Grammar):
    """A finite language given explicitly, matched by walking its trie.

    Strings are character-tokenized; the vocabulary is the sorted set of
    characters appearing in the strings plus the EOS glyph ``$``.
    """

    strings: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.strings:
            raise ValueError("finite language needs at least one string")
        if len(set(self.strings)) != len(self.strings):
            raise ValueError("duplicate strings")
        if any(not s for s in self.strings):
            raise ValueError("empty string not supported in finite tries")
        if any("$" in s for s in self.strings):
            raise ValueError("'$' is reserved for EOS")

    @cached_property
    def vocab(self) -> Vocab:
        glyphs = sorted({ch for s in self.strings for ch in s})
        return Vocab(glyphs=tuple(glyphs) + ("$",), eos=len(glyphs))

    @cached_property
    def _trie(self) -> _TrieTable:
        return _TrieTable([self.vocab.encode(s) for s in self.strings])

    def initial_state(self) -> State:
        return 0

    def valid_next(self, state: State) -> tuple[int, ...]:
        trie = self._trie
        out = sorted(trie.children[state], key=lambda t: self.vocab.glyphs[t])
        if trie.terminal[state]:
            out.append(self.vocab.eos)
        return tuple(out)

    def _advance(self, state: State, token: int) -> State:
        return self._trie.children[state][token]

    def max_string_length(self) -> int:
        return max(len(s) for s in self.strings)

    def max_completion_tokens(self, state: State) -> int:
        return self._trie.max_suffix[state] + 1


@dataclass(frozen=True)
class BudgetGrammar(Grammar):
    """Binary strings of exact length ``length`` with at most ``max_ones`` ones.

    The compact automaton state is (position, ones used); once the ones
    budget saturates, every remaining position is forced to zero.
    """

    length: int
    max_ones: int

    ZERO = 0
    ONE = 1
    EOS = 2

    def __post_init__(self) -> None:
        if self.length < 1:
            raise ValueError("length must be >= 1")
        if not 0 <= self.max_ones <= self.length:
            raise ValueError("max_ones must lie in [0, length]")

    @property
    def vocab(self) -> Vocab:
        return binary_vocab()

    def initial_state(self) -> State:
        return (0, 0)

    def valid_next(self, state: State) -> tuple[int, ...]:
        pos, ones = state
        if pos == self.length:
            return (self.EOS,)
        if ones < self.max_ones:
            return (self.ZERO, self.ONE)
        return (self.ZERO,)

    def _advance(self, state: State, token: int) -> State:
        pos, ones = state
        return (pos + 1, ones + (1 if token == self.ONE else 0))

    def max_string_length(self) -> int:
        return self.length

    def max_completion_tokens(self, state: State) -> int:
        return self.length - state[0] + 1

    def state_count(self) -> int:
        # Full (position, ones) grid of the compact automaton.
        return (self.length + 1) * (self.max_ones + 1)

    def language_size(self) -> int:
        return sum(math.comb(self.length, j) for j in range(self.max_ones + 1))


def grammar_to_config(g: Grammar) -> dict:
    if isinstance(g, DyckGrammar):
        return {"variant": "dyck", "max_depth": g.max_depth, "max_length": g.max_length}
    if isinstance(g, TrieGrammar):
        return {"variant": "finite", "strings": list(g.strings)}
    if isinstance(g, BudgetGrammar):
        return {"variant": "budget", "length": g.length, "max_ones": g.max_ones}
    raise ValueError(f"cannot serialize {type(g).__name__}")


def grammar_from_config(cfg: dict) -> Grammar:
    variant = cfg["variant"]
    if variant == "dyck":
        return DyckGrammar(max_depth=int(cfg["max_depth"]), max_length=int(cfg["max_length"]))
    if variant == "finite":
        return TrieGrammar(strings=tuple(cfg["strings"]))
    if variant == "budget":
        return BudgetGrammar(length=int(cfg["length"]), max_ones=int(cfg["max_ones"]))
    if variant == "schema":
        from .schemas import finite_schema

        return finite_schema(cfg["name"])
    raise ValueError(f"unknown grammar variant {variant!r}")

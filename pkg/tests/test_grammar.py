import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maskgap.errors import ConstraintViolationError, EnumerationLimitError
from maskgap.grammar import (
    BudgetGrammar,
    DyckGrammar,
    TrieGrammar,
    grammar_from_config,
    grammar_to_config,
)


def balanced_within(s: str, d: int, L: int) -> bool:
    """Independent recursive bracket checker (oracle for Dyck membership)."""
    if len(s) > L:
        return False
    depth = 0
    for ch in s:
        depth += 1 if ch == "(" else -1
        if depth < 0 or depth > d:
            return False
    return depth == 0


def test_dyck_language_counts():
    assert len(DyckGrammar(3, 12).enumerate_language()) == 145
    assert len(DyckGrammar(3, 16).enumerate_language()) == 988


def test_dyck_membership_against_recursive_oracle():
    g = DyckGrammar(2, 8)
    enumerated = {g.vocab.decode(t) for t in g.enumerate_language()}
    assert all(balanced_within(s, 2, 8) for s in enumerated)
    # every balanced bounded bracket string up to length 8 appears
    for n in range(9):
        for mask in range(2**n):
            s = "".join("(" if (mask >> i) & 1 else ")" for i in range(n))
            assert (s in enumerated) == balanced_within(s, 2, 8)


def test_dyck_empty_prefix_valid_set():
    g = DyckGrammar(3, 16)
    assert g.valid_next(g.initial_state()) == (g.OPEN, g.EOS)


def test_dyck_advance_and_states():
    g = DyckGrammar(3, 16)
    s = g.initial_state()
    assert s == (0, 0)
    s1 = g.advance(s, g.OPEN)
    assert s1 == (1, 1) and s == (0, 0)  # original untouched
    with pytest.raises(ConstraintViolationError):
        g.advance(s, g.CLOSE)


def test_dyck_enumeration_is_lexicographic_with_prefix_first():
    g = DyckGrammar(2, 6)
    decoded = [g.vocab.decode(t) for t in g.enumerate_language()]
    assert decoded[0] == ""
    assert decoded == sorted(decoded)


def test_prefix_closure():
    g = DyckGrammar(3, 10)
    for tokens in g.enumerate_language():
        state = g.initial_state()
        for tok in tokens:
            valid = g.valid_next(state)
            assert valid and tok in valid
            state = g.advance(state, tok)
        assert g.is_complete(state)


def test_clone_independence():
    g = BudgetGrammar(length=6, max_ones=3)
    s = (2, 1)
    clone = s
    advanced = g.advance(clone, g.ONE)
    assert advanced == (3, 2)
    assert g.valid_next(s) == (g.ZERO, g.ONE)  # s unaffected by the clone's move


def test_budget_initial_and_saturation():
    g = BudgetGrammar(length=20, max_ones=10)
    assert g.initial_state() == (0, 0)
    assert g.valid_next((5, 10)) == (g.ZERO,)  # budget saturated: zeros forced
    assert g.valid_next((20, 7)) == (g.EOS,)
    assert g.advance((5, 3), g.ONE) == (6, 4)


def test_budget_counts_match_binomials():
    for n, k in [(8, 4), (10, 3), (14, 14), (12, 0)]:
        g = BudgetGrammar(length=n, max_ones=k)
        expected = sum(math.comb(n, j) for j in range(k + 1))
        assert len(g.enumerate_language()) == expected
        assert g.language_size() == expected


def test_budget_state_counts():
    assert BudgetGrammar(20, 10).state_count() == 231
    assert BudgetGrammar(30, 15).state_count() == 496
    assert BudgetGrammar(1, 0).state_count() == 2


def test_trie_basics():
    g = TrieGrammar(strings=("ab", "ac"))
    root = g.initial_state()
    after_a = g.advance(root, g.vocab.encode("a")[0])
    b, c = g.vocab.encode("b")[0], g.vocab.encode("c")[0]
    assert g.valid_next(after_a) == (b, c)
    with pytest.raises(ConstraintViolationError):
        g.advance(after_a, g.vocab.encode("a")[0])
    assert [g.vocab.decode(t) for t in g.enumerate_language()] == ["ab", "ac"]


def test_trie_prefix_string_is_complete_but_extendable():
    g = TrieGrammar(strings=("a", "ab"))
    after_a = g.advance(g.initial_state(), g.vocab.encode("a")[0])
    assert g.is_complete(after_a)
    assert len(g.valid_next(after_a)) == 2


def test_trie_validation():
    with pytest.raises(ValueError):
        TrieGrammar(strings=())
    with pytest.raises(ValueError):
        TrieGrammar(strings=("a", "a"))
    with pytest.raises(ValueError):
        TrieGrammar(strings=("a$b",))


def test_state_count_unsupported_for_tries():
    with pytest.raises(ValueError):
        TrieGrammar(strings=("ab",)).state_count()


def test_enumeration_limit():
    g = BudgetGrammar(length=12, max_ones=12)
    with pytest.raises(EnumerationLimitError):
        g.enumerate_language(limit=100)


def test_enumeration_cap_filters_long_strings():
    g = DyckGrammar(3, 8)
    short = g.enumerate_language(cap=4)
    assert {g.vocab.decode(t) for t in short} == {"", "()", "(())", "()()"}


def test_contains_and_replay():
    g = DyckGrammar(2, 6)
    assert g.contains(g.vocab.encode("(())"))
    assert not g.contains(g.vocab.encode("(("))
    assert not g.contains(g.vocab.encode(")("))
    assert g.replay(g.vocab.encode("(()")) == (1, 3)


def test_max_completion_tokens():
    g = DyckGrammar(3, 8)
    assert g.max_completion_tokens(g.initial_state()) == 9
    b = BudgetGrammar(8, 4)
    assert b.max_completion_tokens((3, 2)) == 6
    t = TrieGrammar(strings=("ab", "abcd"))
    assert t.max_completion_tokens(t.initial_state()) == 5


def test_config_round_trip():
    for g in (
        DyckGrammar(3, 12),
        TrieGrammar(strings=("ab", "ac")),
        BudgetGrammar(20, 10),
    ):
        assert grammar_from_config(grammar_to_config(g)) == g


def test_schema_config_variant():
    g = grammar_from_config({"variant": "schema", "name": "status"})
    assert len(g.strings) == 3


@settings(max_examples=40, deadline=None)
@given(
    n=st.integers(min_value=1, max_value=10),
    k=st.integers(min_value=0, max_value=10),
)
def test_budget_enumeration_matches_binomials_property(n, k):
    k = min(k, n)
    g = BudgetGrammar(length=n, max_ones=k)
    strings = g.enumerate_language()
    assert len(strings) == sum(math.comb(n, j) for j in range(k + 1))
    assert all(sum(t) <= k and len(t) == n for t in strings)


@settings(max_examples=30, deadline=None)
@given(d=st.integers(min_value=1, max_value=4), L=st.integers(min_value=2, max_value=10))
def test_dyck_enumeration_matches_oracle_property(d, L):
    g = DyckGrammar(d, L)
    enumerated = {g.vocab.decode(t) for t in g.enumerate_language()}
    assert all(balanced_within(s, d, L) for s in enumerated)
    assert "" in enumerated

import math

import numpy as np
import pytest

from maskgap.errors import CoverageError, StateGraphLimitError
from maskgap.grammar import BudgetGrammar, DyckGrammar, TrieGrammar
from maskgap.laws import (
    budget_grouped_tv,
    conditional_law,
    future_validity_table,
    projected_law,
    reweighted_law,
)
from maskgap.metrics import tv
from maskgap.schemas import finite_schema
from maskgap.toylm import BernoulliLm, BigramCharLm, SeededLogitLm

BUDGET_TABLE_ROWS = [
    # (n, K, p_one, TV(projected, conditional), valid strings, automaton states)
    (20, 10, 0.62, 0.670, 616_666, 231),
    (22, 11, 0.65, 0.755, 2_449_868, 276),
    (24, 12, 0.68, 0.836, 9_740_686, 325),
    (24, 10, 0.65, 0.884, 4_540_386, 275),
    (24, 8, 0.70, 0.961, 1_271_626, 225),
    (26, 13, 0.68, 0.851, 38_754_732, 378),
    (28, 14, 0.68, 0.864, 154_276_028, 435),
    (30, 15, 0.70, 0.909, 614_429_672, 496),
]


def dyck_lm(seed=3, max_length=8):
    g = DyckGrammar(3, max_length)
    return g, SeededLogitLm(vocab=g.vocab, seed=seed)


def test_recursion_residual_small_everywhere():
    for g, lm in [
        dyck_lm(),
        (BudgetGrammar(8, 4), BernoulliLm(p_one=0.55)),
        (finite_schema("type_value"), None),
    ]:
        if lm is None:
            lm = SeededLogitLm(vocab=g.vocab, seed=1)
        table = future_validity_table(g, lm)
        assert table.recursion_residual(g, lm) <= 1e-12


def test_eos_entries_are_one():
    g, lm = dyck_lm()
    table = future_validity_table(g, lm)
    for (key, token), log_value in table.log_values.items():
        if token == g.EOS:
            assert log_value == 0.0


def test_root_mass_equals_language_mass():
    g, lm = dyck_lm(seed=9)
    table = future_validity_table(g, lm)
    law = conditional_law(g, lm)
    assert abs(table.log_language_mass() - law.log_mass) <= 1e-12


def test_future_validity_against_independent_rollout_oracle():
    # Monte Carlo oracle, fully independent of the DP and estimator code:
    # free rollouts with its own RNG and an inline balance checker.
    g, lm = dyck_lm(seed=3, max_length=8)
    table = future_validity_table(g, lm)
    root_open = table.value(g.initial_state(), (), g.OPEN)
    assert table.value(g.initial_state(), (), g.EOS) == 1.0

    rng = np.random.default_rng(12345)
    k = 40_000
    hits = 0
    for _ in range(k):
        depth, length, tail = 1, 1, (g.OPEN,)
        for _ in range(lm.length_cap - 2):
            cum = np.cumsum(lm.dist_for_context(tail))
            tok = int(np.searchsorted(cum, rng.random(), side="right"))
            if tok == g.EOS:
                hits += depth == 0
                break
            depth += 1 if tok == g.OPEN else -1
            length += 1
            if depth < 0 or depth > 3 or length > 8:
                break
            tail = (tok,)
        # falling out of the loop without EOS is a miss
    estimate = hits / k
    sigma = math.sqrt(max(root_open * (1 - root_open), 1e-6) / k)
    assert abs(estimate - root_open) <= 3 * sigma


def test_conditional_law_single_string():
    g = TrieGrammar(strings=("ab",))
    lm = SeededLogitLm(vocab=g.vocab, seed=0)
    law = conditional_law(g, lm)
    assert abs(law.prob("ab") - 1.0) <= 1e-12


def test_conditional_law_budget_mass_matches_binomial_oracle():
    n, K, p = 20, 10, 0.62
    lm = BernoulliLm(p_one=p)
    law = conditional_law(BudgetGrammar(n, K), lm, cap=n + 1)
    binom = sum(math.comb(n, j) * p**j * (1 - p) ** (n - j) for j in range(K + 1))
    expected = binom * (1.0 - lm.eos_prob) ** n * lm.eos_prob
    assert abs(math.exp(law.log_mass) - expected) <= 1e-12


def test_uniform_lm_over_equal_length_strings_gives_uniform_law():
    g = TrieGrammar(strings=("ab", "ba", "aa", "bb"))
    lm = BigramCharLm(vocab=g.vocab, table=((0.0,) * 3,) * 3)
    law = conditional_law(g, lm)
    for s in ("ab", "ba", "aa", "bb"):
        assert abs(law.prob(s) - 0.25) <= 1e-12


def test_unconstrained_budget_grammar_has_no_gap():
    # max_ones = length: the constraint never binds, so the projected law
    # equals the truncated base law exactly.
    g = BudgetGrammar(length=3, max_ones=3)
    lm = BernoulliLm(p_one=0.3)
    assert tv(projected_law(g, lm), conditional_law(g, lm)) <= 1e-12


def test_projected_law_trie_uniform_split():
    g = TrieGrammar(strings=("ab", "ac"))
    lm = BigramCharLm(vocab=g.vocab, table=((0.0,) * 4,) * 4)
    law = projected_law(g, lm)
    assert abs(law.prob("ab") - 0.5) <= 1e-12
    assert abs(law.prob("ac") - 0.5) <= 1e-12


def test_laws_normalized():
    g, lm = dyck_lm(seed=5, max_length=12)
    for law in (conditional_law(g, lm), projected_law(g, lm)):
        assert abs(law.total() - 1.0) <= 1e-10


def test_reweighted_with_uniform_scorer_equals_projected_exactly():
    g, lm = dyck_lm(seed=4, max_length=12)
    law = reweighted_law(g, lm, lambda s, p, c: np.ones(len(c)))
    assert tv(law, projected_law(g, lm)) == 0.0


def test_reweighted_with_exact_table_recovers_conditional():
    for g, lm in [
        dyck_lm(seed=7, max_length=12),
        (finite_schema("status"), None),
    ]:
        if lm is None:
            lm = SeededLogitLm(vocab=g.vocab, seed=2)
        table = future_validity_table(g, lm)
        law = reweighted_law(g, lm, table.scorer(g, lm))
        assert tv(law, conditional_law(g, lm)) <= 1e-12


def test_exactness_condition_constant_vs_varying_validity():
    # Constant future validity per state: no gap. Binding budget: gap > 0.
    lm = BernoulliLm(p_one=0.62)
    free = BudgetGrammar(length=4, max_ones=4)
    assert tv(projected_law(free, lm), conditional_law(free, lm)) <= 1e-12
    binding = BudgetGrammar(length=4, max_ones=2)
    assert tv(projected_law(binding, lm), conditional_law(binding, lm)) > 0.01


@pytest.mark.parametrize("n,k,p,expected_tv,count,states", BUDGET_TABLE_ROWS[:3])
def test_budget_grouped_rows(n, k, p, expected_tv, count, states):
    report = budget_grouped_tv(n, k, p)
    assert abs(report.tv_projected - expected_tv) <= 1e-3
    assert report.valid_count == count
    assert report.state_count == states
    assert report.tv_reweighted <= 1e-12


def test_budget_grouped_no_constraint_and_k_zero():
    assert budget_grouped_tv(10, 10, 0.37).tv_projected <= 1e-12
    zero = budget_grouped_tv(6, 0, 0.4)
    assert zero.tv_projected <= 1e-12
    assert zero.valid_count == 1


def test_budget_grouped_matches_enumeration():
    for n, k, p in [(12, 5, 0.62), (10, 4, 0.7), (14, 7, 0.5)]:
        grouped = budget_grouped_tv(n, k, p)
        g = BudgetGrammar(n, k)
        lm = BernoulliLm(p_one=p)
        enumerated_tv = tv(projected_law(g, lm, cap=n + 1), conditional_law(g, lm, cap=n + 1))
        assert abs(grouped.tv_projected - enumerated_tv) <= 1e-12


def test_budget_root_correction_example():
    report = budget_grouped_tv(30, 15, 0.70)
    assert abs(report.masked_root_p_one - 0.700) <= 1e-9
    assert abs(report.corrected_root_p_one - 0.482) <= 1e-3


def test_grouped_tv_invariant_to_eos_mass():
    a = budget_grouped_tv(12, 5, 0.62, eos_prob=0.05)
    b = budget_grouped_tv(12, 5, 0.62, eos_prob=0.3)
    assert abs(a.tv_projected - b.tv_projected) <= 1e-12
    assert abs(a.corrected_root_p_one - b.corrected_root_p_one) <= 1e-12


def test_capacity_checks():
    g, lm = dyck_lm(seed=0, max_length=12)
    with pytest.raises(StateGraphLimitError):
        future_validity_table(g, lm, state_limit=3)
    with pytest.raises(ValueError):
        future_validity_table(g, lm, cap=5)
    with pytest.raises(ValueError):
        budget_grouped_tv(80, 40, 0.5)


def test_table_coverage_error():
    g, lm = dyck_lm()
    table = future_validity_table(g, lm)
    with pytest.raises(CoverageError):
        table.value((9, 9), (), 0)


def test_table_lookup_uses_visible_context():
    g = DyckGrammar(2, 6)
    lm = SeededLogitLm(vocab=g.vocab, seed=8, context_order=2)
    table = future_validity_table(g, lm)
    # state (1, 3) is reachable via "(()" (visible tail "()") and "()("
    # (visible tail ")("): the model sees different contexts, so the same
    # matcher state carries different future validity.
    v1 = table.value((1, 3), g.vocab.encode("(()"), g.CLOSE)
    v2 = table.value((1, 3), g.vocab.encode("()("), g.CLOSE)
    assert v1 != v2

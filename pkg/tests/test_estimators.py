import math

import numpy as np
import pytest

from maskgap.errors import HorizonTooShortError
from maskgap.estimators import (
    ExactTable,
    GatedHybrid,
    MonteCarlo,
    OneStepCheap,
    OneStepTrue,
    Uniform,
    additive_error,
    estimate_future_validity,
    estimator_from_config,
    estimator_to_config,
    scorer_for,
    variation_guard,
)
from maskgap.grammar import BudgetGrammar, DyckGrammar
from maskgap.laws import future_validity_table
from maskgap.metrics import hoeffding_radius
from maskgap.toylm import BernoulliLm, SeededLogitLm


@pytest.fixture(scope="module")
def dyck_setup():
    g = DyckGrammar(3, 8)
    lm = SeededLogitLm(vocab=g.vocab, seed=3)
    return g, lm, future_validity_table(g, lm)


def all_positions(g, table):
    """(state, prefix-as-tail, candidates) for every reachable DP state."""
    for state, tail in table.state_lengths:
        yield state, tail, g.valid_next(state)


def test_uniform_is_all_ones_and_free(dyck_setup):
    g, lm, _ = dyck_setup
    est = estimate_future_validity(Uniform(), g, lm, g.initial_state(), (), g.valid_next(g.initial_state()))
    assert np.all(est.values == 1.0)
    assert est.lm_forwards == 0 and est.matcher_queries == 0


def test_cost_accounting(dyck_setup):
    g, lm, table = dyck_setup
    state, prefix = g.initial_state(), ()
    cands = g.valid_next(state)
    cheap = estimate_future_validity(OneStepCheap(), g, lm, state, prefix, cands)
    assert cheap.lm_forwards == 0 and cheap.matcher_queries == len(cands)
    true = estimate_future_validity(OneStepTrue(), g, lm, state, prefix, cands)
    assert true.lm_forwards == len(cands) - 1  # EOS candidate needs no forward
    mc = estimate_future_validity(MonteCarlo(rollouts=5, seed=1), g, lm, state, prefix, cands)
    horizon = lm.length_cap - 1
    assert mc.lm_forwards <= 5 * horizon * len(cands)


def test_onestep_cheap_uses_supplied_distribution(dyck_setup):
    g, lm, _ = dyck_setup
    state, prefix = g.initial_state(), ()
    cands = g.valid_next(state)
    dist = lm.next_token_dist(prefix)
    a = estimate_future_validity(OneStepCheap(), g, lm, state, prefix, cands, current_dist=dist)
    b = estimate_future_validity(OneStepCheap(), g, lm, state, prefix, cands)
    assert np.array_equal(a.values, b.values)


def test_onestep_error_identity_on_small_dyck():
    g = DyckGrammar(3, 4)
    lm = SeededLogitLm(vocab=g.vocab, seed=11)
    table = future_validity_table(g, lm)
    for state, tail, cands in all_positions(g, table):
        est = estimate_future_validity(OneStepTrue(), g, lm, state, tail, cands)
        for i, y in enumerate(cands):
            if y == g.EOS:
                continue
            child = g.advance(state, y)
            child_prefix = tail + (y,)
            dist = lm.next_token_dist(child_prefix)
            expected_gap = sum(
                dist[u] * (1.0 - table.value(child, child_prefix, u))
                for u in g.valid_next(child)
            )
            actual_gap = est.values[i] - table.value(state, tail, y)
            assert abs(actual_gap - expected_gap) <= 1e-10
            assert actual_gap >= -1e-12  # one-step lookahead never underestimates


def test_onestep_true_dominates_exact(dyck_setup):
    g, lm, table = dyck_setup
    for state, tail, cands in all_positions(g, table):
        est = estimate_future_validity(OneStepTrue(), g, lm, state, tail, cands)
        truth = table.values(state, tail, cands)
        assert np.all(est.values - truth >= -1e-12)


def test_exact_lookup_matches_table(dyck_setup):
    g, lm, table = dyck_setup
    state, prefix = g.initial_state(), ()
    cands = g.valid_next(state)
    est = estimate_future_validity(ExactTable(table), g, lm, state, prefix, cands)
    assert np.array_equal(est.values, table.values(state, prefix, cands))
    assert additive_error(est, table) == 0.0


def test_mc_deterministic_given_seed():
    g = BudgetGrammar(8, 4)
    lm = BernoulliLm(p_one=0.55, length_cap=10)
    state, prefix = g.initial_state(), ()
    cands = g.valid_next(state)
    spec = MonteCarlo(rollouts=16, seed=9)
    a = estimate_future_validity(spec, g, lm, state, prefix, cands)
    b = estimate_future_validity(spec, g, lm, state, prefix, cands)
    assert np.array_equal(a.values, b.values)


def test_mc_unbiased():
    g = BudgetGrammar(6, 3)
    lm = BernoulliLm(p_one=0.5, eos_prob=0.2, length_cap=8)
    table = future_validity_table(g, lm)
    state, prefix = g.initial_state(), ()
    truth = table.value(state, prefix, g.ONE)
    trials = 1000
    estimates = [
        estimate_future_validity(
            MonteCarlo(rollouts=1, seed=t), g, lm, state, prefix, g.valid_next(state)
        ).values[1]
        for t in range(trials)
    ]
    sigma_mean = math.sqrt(truth * (1 - truth) / trials)
    assert abs(float(np.mean(estimates)) - truth) <= 4 * sigma_mean


def test_mc_hoeffding_calibration_quick():
    g = BudgetGrammar(8, 4)
    lm = BernoulliLm(p_one=0.55, eos_prob=0.1, length_cap=10)
    table = future_validity_table(g, lm)
    state, prefix = g.initial_state(), ()
    cands = g.valid_next(state)
    truth = table.values(state, prefix, cands)
    k = 8
    radius, _ = hoeffding_radius(k, alpha=0.05)
    hits = 0
    trials = 60
    for t in range(trials):
        est = estimate_future_validity(MonteCarlo(rollouts=k, seed=t), g, lm, state, prefix, cands)
        hits += bool(np.all(np.abs(est.values - truth) <= radius))
    assert hits / trials >= 0.9


def test_mc_horizon_too_short():
    g = BudgetGrammar(8, 4)
    lm = BernoulliLm(p_one=0.5, length_cap=12)
    with pytest.raises(HorizonTooShortError):
        estimate_future_validity(
            MonteCarlo(rollouts=2, horizon=3), g, lm, g.initial_state(), (), g.valid_next(g.initial_state())
        )


def test_precondition_errors(dyck_setup):
    g, lm, _ = dyck_setup
    with pytest.raises(ValueError):
        estimate_future_validity(Uniform(), g, lm, g.initial_state(), (), ())
    with pytest.raises(ValueError):
        estimate_future_validity(Uniform(), g, lm, g.initial_state(), (), (g.CLOSE,))


def test_variation_guard():
    base = dict(state=(0, 0), prefix=())
    from maskgap.estimators import ValidityEstimate

    constant = ValidityEstimate((0, 1, 2), np.array([0.3, 0.3, 0.3]), "onestep_cheap", **base)
    assert not variation_guard(constant)
    varied = ValidityEstimate((0, 1), np.array([0.3, 0.7]), "onestep_cheap", **base)
    assert variation_guard(varied)
    ones = ValidityEstimate((0, 1, 2), np.ones(3), "uniform", **base)
    assert variation_guard(ones)  # the baseline tier is allowed to be flat
    single = ValidityEstimate((0,), np.array([0.4]), "exact", **base)
    assert variation_guard(single)  # one candidate: nothing to correct


def test_uniform_additive_error_is_one_minus_min_validity(dyck_setup):
    g, lm, table = dyck_setup
    state, prefix = g.initial_state(), ()
    cands = g.valid_next(state)
    est = estimate_future_validity(Uniform(), g, lm, state, prefix, cands)
    truth = table.values(state, prefix, cands)
    assert abs(additive_error(est, table) - (1.0 - float(truth.min()))) <= 1e-12


def test_gated_hybrid_escalates_on_dispersion(dyck_setup):
    g, lm, table = dyck_setup
    spec = GatedHybrid(primary=OneStepCheap(), escalate=ExactTable(table), dispersion_threshold=0.1)
    state, prefix = g.initial_state(), ()
    cands = g.valid_next(state)
    est = estimate_future_validity(spec, g, lm, state, prefix, cands)
    assert est.tier == "hybrid"
    assert np.array_equal(est.values, table.values(state, prefix, cands))
    lax = GatedHybrid(primary=OneStepCheap(), escalate=ExactTable(table), dispersion_threshold=1e9)
    est2 = estimate_future_validity(lax, g, lm, state, prefix, cands)
    cheap = estimate_future_validity(OneStepCheap(), g, lm, state, prefix, cands)
    assert np.array_equal(est2.values, cheap.values)


def test_scorer_caches_and_counts(dyck_setup):
    g, lm, _ = dyck_setup
    scorer = scorer_for(OneStepTrue(), g, lm)
    state, prefix = g.initial_state(), ()
    cands = g.valid_next(state)
    first = scorer(state, prefix, cands)
    forwards = scorer.lm_forwards
    second = scorer(state, prefix, cands)
    assert np.array_equal(first, second)
    assert scorer.lm_forwards == forwards  # cached: no extra cost


def test_config_round_trip(dyck_setup):
    _, _, table = dyck_setup
    specs = [
        Uniform(),
        OneStepCheap(),
        OneStepTrue(),
        MonteCarlo(rollouts=4, horizon=9, seed=2),
        GatedHybrid(primary=OneStepCheap(), escalate=MonteCarlo(rollouts=8), dispersion_threshold=1.5),
    ]
    for spec in specs:
        rebuilt = estimator_from_config(estimator_to_config(spec))
        assert estimator_to_config(rebuilt) == estimator_to_config(spec)
    exact = estimator_from_config({"variant": "exact"}, exact_table=table)
    assert isinstance(exact, ExactTable)
    with pytest.raises(ValueError):
        estimator_from_config({"variant": "exact"})
    with pytest.raises(ValueError):
        estimator_from_config(
            {"variant": "hybrid", "primary": {"variant": "uniform"}, "escalate": {"variant": "uniform"}}
        )

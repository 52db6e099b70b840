"""Exact future-validity tables and exact terminal laws.

Future validity of a candidate token is the probability, under the
unconstrained base model, that the prefix extended by that token still
completes to a valid string. It satisfies a backward recursion over the
prefix graph and is computed here by dynamic programming in log-space,
iterating states longest-consumed first.

Three terminal laws over complete strings are computed analytically:

* the grammar-conditional law: full-sequence base-model probability
  restricted to the language and renormalized by the language mass;
* the locally projected law: the product of per-step masked-renormalized
  conditionals (what local vocabulary masking actually samples);
* the reweighted law: per-step kernels proportional to base probability
  times a future-validity estimate (a Doob h-transform of the base model;
  with exact validity values it reproduces the conditional law).

Because the base model may condition on recent tokens, DP states pair the
matcher state with the suffix of the prefix the model can see.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import (
    CoverageError,
    DegenerateGrammarError,
    EstimatorDegeneracyError,
    NonDegeneracyError,
    StateGraphLimitError,
)
from .grammar import ENUMERATION_LIMIT, BudgetGrammar, Grammar, State
from .toylm import BernoulliLm, ToyLm

STATE_GRAPH_LIMIT = 200_000

NEG_INF = float("-inf")

Key = tuple  # (matcher state, model-visible suffix of the prefix)

# scorer(state, prefix, candidates) -> per-candidate validity estimates
Scorer = Callable[[State, tuple, tuple], np.ndarray]


def _logsumexp(values: np.ndarray) -> float:
    m = float(np.max(values)) if len(values) else NEG_INF
    if m == NEG_INF:
        return NEG_INF
    return m + math.log(float(np.exp(values - m).sum()))


def step_log_kernel(
    lm: ToyLm,
    tail: tuple[int, ...],
    candidates: tuple[int, ...],
    values: np.ndarray | None = None,
) -> np.ndarray:
    """Normalized log step kernel over ``candidates``.

    Without ``values`` this is the masked-renormalized base conditional;
    with ``values`` each candidate is additionally weighted by its
    future-validity estimate before renormalizing.
    """
    lp = lm.log_dist_for_context(tail)[list(candidates)]
    if _logsumexp(lp) == NEG_INF:
        raise NonDegeneracyError(f"no base-model mass on valid tokens {candidates}")
    if values is not None:
        vals = np.asarray(values, dtype=np.float64)
        if np.any(vals < 0.0) or not np.all(np.isfinite(vals)):
            raise ValueError("validity estimates must be finite and non-negative")
        if not np.any(vals > 0.0):
            raise EstimatorDegeneracyError("estimate is zero on every valid token")
        with np.errstate(divide="ignore"):
            lp = lp + np.log(vals)
    return lp - _logsumexp(lp)


@dataclass
class TerminalLaw:
    """A probability law over complete strings, stored in log-space.

    ``log_mass`` is the log of the unnormalized base-model mass of the
    language (only meaningful for the conditional law).
    """

    log_probs: dict[str, float]
    log_mass: float | None = None

    def prob(self, s: str) -> float:
        lp = self.log_probs.get(s)
        return 0.0 if lp is None else math.exp(lp)

    def support(self) -> set[str]:
        return set(self.log_probs)

    def as_dict(self) -> dict[str, float]:
        return {s: math.exp(lp) for s, lp in self.log_probs.items()}

    def total(self) -> float:
        return sum(math.exp(lp) for lp in self.log_probs.values())

    def mean_length(self) -> float:
        return sum(len(s) * math.exp(lp) for s, lp in self.log_probs.items())


@dataclass
class FutureValidityTable:
    """Exact per-(state, candidate) future validity, keyed by DP state.

    A DP state is ``(matcher_state, tail)`` where ``tail`` is the last
    ``context_order`` tokens of the prefix. ``log_state_totals`` holds, per
    state, the log of the expected validity of the next free token; at the
    root this equals the log base-model mass of the whole language.
    """

    context_order: int
    eos: int
    log_values: dict[tuple[Key, int], float]
    log_state_totals: dict[Key, float]
    state_lengths: dict[Key, int]

    def key(self, state: State, prefix: tuple[int, ...]) -> Key:
        k = self.context_order
        return (state, tuple(prefix[-k:]) if k > 0 else ())

    def log_value(self, state: State, prefix: tuple[int, ...], token: int) -> float:
        try:
            return self.log_values[(self.key(state, prefix), token)]
        except KeyError:
            raise CoverageError(
                f"no exact entry for state {state!r}, token {token}"
            ) from None

    def value(self, state: State, prefix: tuple[int, ...], token: int) -> float:
        return math.exp(self.log_value(state, prefix, token))

    def values(
        self, state: State, prefix: tuple[int, ...], candidates: tuple[int, ...]
    ) -> np.ndarray:
        return np.array(
            [math.exp(self.log_value(state, prefix, y)) for y in candidates]
        )

    def log_language_mass(self) -> float:
        root = min(self.state_lengths, key=lambda k: self.state_lengths[k])
        return self.log_state_totals[root]

    def scorer(self, g: Grammar, lm: ToyLm):
        """Exact-lookup scorer usable wherever an estimator is expected."""

        def score(state, prefix, candidates):
            return self.values(state, prefix, candidates)

        return score

    def recursion_residual(self, g: Grammar, lm: ToyLm) -> float:
        """Max linear-space defect of the backward recursion over all entries."""
        worst = 0.0
        for (key, y), logv in self.log_values.items():
            if y == self.eos:
                continue
            state, tail = key
            child = g.advance(state, y)
            child_tail = _next_tail(tail, y, self.context_order)
            dist = lm.dist_for_context(child_tail)
            total = 0.0
            for u in g.valid_next(child):
                total += dist[u] * math.exp(self.log_values[((child, child_tail), u)])
            worst = max(worst, abs(math.exp(logv) - total))
        return worst

    def items(self):
        """(state, tail, token, validity) rows for CSV export."""
        for (key, y), logv in sorted(
            self.log_values.items(), key=lambda kv: (self.state_lengths[kv[0][0]], str(kv[0]))
        ):
            state, tail = key
            yield state, tail, y, math.exp(logv)


def _next_tail(tail: tuple[int, ...], token: int, order: int) -> tuple[int, ...]:
    if order == 0:
        return ()
    return (tail + (token,))[-order:]


def future_validity_table(
    g: Grammar,
    lm: ToyLm,
    cap: int | None = None,
    state_limit: int = STATE_GRAPH_LIMIT,
) -> FutureValidityTable:
    """Backward DP for exact future validity over the reachable state graph."""
    cap = lm.length_cap if cap is None else cap
    if g.max_string_length() >= cap:
        raise ValueError("length cap is smaller than the grammar's longest string")
    order = lm.context_order
    eos = g.vocab.eos

    root: Key = (g.initial_state(), ())
    lengths: dict[Key, int] = {root: 0}
    frontier = [root]
    while frontier:
        state, tail = frontier.pop()
        length = lengths[(state, tail)]
        for y in g.valid_next(state):
            if y == eos:
                continue
            child = ((g.advance(state, y)), _next_tail(tail, y, order))
            if child not in lengths:
                if len(lengths) >= state_limit:
                    raise StateGraphLimitError(
                        f"state graph exceeds the limit of {state_limit}"
                    )
                lengths[child] = length + 1
                frontier.append(child)

    log_values: dict[tuple[Key, int], float] = {}
    log_totals: dict[Key, float] = {}
    for key in sorted(lengths, key=lambda k: -lengths[k]):
        state, tail = key
        candidates = g.valid_next(state)
        for y in candidates:
            if y == eos:
                log_values[(key, y)] = 0.0
                continue
            child_state = g.advance(state, y)
            child_tail = _next_tail(tail, y, order)
            child_key = (child_state, child_tail)
            lp = lm.log_dist_for_context(child_tail)
            terms = np.array(
                [lp[u] + log_values[(child_key, u)] for u in g.valid_next(child_state)]
            )
            log_values[(key, y)] = _logsumexp(terms)
        lp_here = lm.log_dist_for_context(tail)
        log_totals[key] = _logsumexp(
            np.array([lp_here[y] + log_values[(key, y)] for y in candidates])
        )

    return FutureValidityTable(
        context_order=order,
        eos=eos,
        log_values=log_values,
        log_state_totals=log_totals,
        state_lengths=lengths,
    )


def conditional_law(
    g: Grammar,
    lm: ToyLm,
    cap: int | None = None,
    limit: int = ENUMERATION_LIMIT,
) -> TerminalLaw:
    """Grammar-conditional law: base-model sequence probability, renormalized."""
    cap = lm.length_cap if cap is None else cap
    if g.max_string_length() >= cap:
        raise ValueError("length cap is smaller than the grammar's longest string")
    eos = g.vocab.eos
    entries: dict[str, float] = {}
    for tokens in g.enumerate_language(limit=limit):
        logp = 0.0
        for i, tok in enumerate(tokens):
            logp += float(lm.log_next_token_dist(tokens[:i])[tok])
        logp += float(lm.log_next_token_dist(tokens)[eos])
        entries[g.vocab.decode(tokens)] = logp
    log_mass = _logsumexp(np.array(list(entries.values())))
    if log_mass == NEG_INF or math.exp(log_mass) == 0.0:
        raise DegenerateGrammarError("language has zero base-model mass")
    return TerminalLaw(
        log_probs={s: lp - log_mass for s, lp in entries.items()},
        log_mass=log_mass,
    )


def _chained_law(g: Grammar, lm: ToyLm, cap: int, scorer=None) -> TerminalLaw:
    eos = g.vocab.eos
    order = lm.context_order
    out: dict[str, float] = {}

    def visit(state, prefix, tail, logw):
        if len(prefix) > cap:
            raise ValueError("walk exceeded the length cap")
        candidates = g.valid_next(state)
        values = scorer(state, prefix, candidates) if scorer is not None else None
        logk = step_log_kernel(lm, tail, candidates, values)
        for i, y in enumerate(candidates):
            if y == eos:
                out[g.vocab.decode(prefix)] = logw + float(logk[i])
            elif logk[i] > NEG_INF:
                visit(
                    g.advance(state, y),
                    prefix + (y,),
                    _next_tail(tail, y, order),
                    logw + float(logk[i]),
                )

    visit(g.initial_state(), (), (), 0.0)
    return TerminalLaw(log_probs=out)


def projected_law(g: Grammar, lm: ToyLm, cap: int | None = None) -> TerminalLaw:
    """Locally projected law: chained masked-renormalized conditionals."""
    cap = lm.length_cap if cap is None else cap
    if g.max_string_length() >= cap:
        raise ValueError("length cap is smaller than the grammar's longest string")
    return _chained_law(g, lm, cap)


def reweighted_law(g: Grammar, lm: ToyLm, scorer, cap: int | None = None) -> TerminalLaw:
    """Law of the validity-reweighted kernel chain.

    ``scorer(state, prefix, candidates)`` returns non-negative per-candidate
    future-validity estimates; exact values make this the conditional law,
    and any constant scorer reproduces the projected law exactly.
    """
    cap = lm.length_cap if cap is None else cap
    if g.max_string_length() >= cap:
        raise ValueError("length cap is smaller than the grammar's longest string")
    return _chained_law(g, lm, cap, scorer=scorer)


@dataclass(frozen=True)
class BudgetGapReport:
    """Grouped exact gap computation for a budget language (no sampling)."""

    length: int
    max_ones: int
    p_one: float
    valid_count: int
    state_count: int
    tv_projected: float
    tv_reweighted: float
    masked_root_p_one: float
    corrected_root_p_one: float


def _log_binom(n: int, j: int) -> float:
    return math.lgamma(n + 1) - math.lgamma(j + 1) - math.lgamma(n - j + 1)


def budget_grouped_tv(
    n: int, max_ones: int, p_one: float, eos_prob: float = 0.05
) -> BudgetGapReport:
    """Exact terminal-law gaps for the budget language, computed by grouping.

    Strings with fewer than ``max_ones`` ones share a projected/conditional
    ratio and are grouped by their ones count; saturated strings are grouped
    by the position where the last allowed one appears. Total variation is
    then a sum of binomially-counted group terms, so no string enumeration
    (and no sampling) is involved. The reweighted gap chains the exact DP
    kernel along one representative per group.
    """
    if n > 64:
        raise ValueError("budget grouping supports n <= 64")
    K = max_ones
    g = BudgetGrammar(length=n, max_ones=K)
    lm = BernoulliLm(p_one=p_one, eos_prob=eos_prob, length_cap=n + 2)
    table = future_validity_table(g, lm, cap=n + 1)

    lp1, lq = math.log(p_one), math.log(1.0 - p_one)
    log_z_terms = [_log_binom(n, j) + j * lp1 + (n - j) * lq for j in range(K + 1)]
    log_z = _logsumexp(np.array(log_z_terms))

    def group_rows():
        # (count, representative tokens, log projected mass, log conditional mass)
        for c in range(K):
            rep = (1,) * c + (0,) * (n - c)
            logp = c * lp1 + (n - c) * lq
            yield math.comb(n, c), rep, logp, logp - log_z
        for m in range(K, n + 1):
            if K == 0:
                # single all-zeros string; forced from the start
                yield 1, (0,) * n, 0.0, (n * lq) - log_z
                return
            rep = (1,) * (K - 1) + (0,) * (m - K) + (1,) + (0,) * (n - m)
            yield (
                math.comb(m - 1, K - 1),
                rep,
                K * lp1 + (m - K) * lq,
                K * lp1 + (n - K) * lq - log_z,
            )

    def chain_reweighted(tokens: tuple[int, ...]) -> float:
        state, prefix, logw = g.initial_state(), (), 0.0
        for tok in tokens + (g.EOS,):
            candidates = g.valid_next(state)
            vals = table.values(state, prefix, candidates)
            logk = step_log_kernel(lm, (), candidates, vals)  # iid model: empty tail
            logw += float(logk[candidates.index(tok)])
            if tok != g.EOS:
                state = g.advance(state, tok)
                prefix += (tok,)
        return logw

    tv_projected = 0.0
    tv_reweighted = 0.0
    for count, rep, log_proj, log_star in group_rows():
        star = math.exp(log_star)
        tv_projected += count * abs(math.exp(log_proj) - star)
        tv_reweighted += count * star * abs(math.expm1(chain_reweighted(rep) - log_star))

    if K == 0:
        masked, corrected = 0.0, 0.0  # token 1 is never valid
    else:
        root = g.initial_state()
        dist = lm.dist_for_context(())
        masked = float(dist[g.ONE] / (dist[g.ZERO] + dist[g.ONE]))
        root_kernel = step_log_kernel(
            lm, (), (g.ZERO, g.ONE), table.values(root, (), (g.ZERO, g.ONE))
        )
        corrected = math.exp(float(root_kernel[1]))

    return BudgetGapReport(
        length=n,
        max_ones=K,
        p_one=p_one,
        valid_count=g.language_size(),
        state_count=g.state_count(),
        tv_projected=0.5 * tv_projected,
        tv_reweighted=0.5 * tv_reweighted,
        masked_root_p_one=masked,
        corrected_root_p_one=corrected,
    )

"""Ancestral and speculative sampling loops.

Two step kernels are available: the local-mask kernel (masked-renormalized
base conditionals, yielding the locally projected law) and the reweighted
kernel (base conditionals weighted by future-validity estimates; with exact
values it yields the grammar-conditional law).

The speculative verifier uses the standard accept/reject rule: accept a
draft token with probability min(1, target/draft), otherwise commit a draw
from the normalized positive part of (target - draft). The rule preserves
whatever target kernel it is given, so the verifier changes throughput,
never the distribution. Draft proposals are always locally masked; both
sides then share the same support, and the residual covers the full target
support. A diagnostic "equality" verifier is also provided; it accepts on
agreement with an independent target sample and is deliberately biased.

Matcher states are immutable values, so draft speculation works on a
throwaway copy and rejection simply keeps the committed state. After every
rejection the loop audits that the kept state equals a fresh replay of the
committed prefix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grammar import Grammar, State
from .laws import Scorer, step_log_kernel
from .toylm import ToyLm


@dataclass
class AcceptStats:
    """Counters for one or many speculative decoding runs."""

    proposed: int = 0
    accepted: int = 0
    residual_draws: int = 0
    rounds: int = 0
    rollback_audits: int = 0

    @property
    def accept_rate(self) -> float:
        return self.accepted / self.proposed if self.proposed else 0.0

    def __add__(self, other: "AcceptStats") -> "AcceptStats":
        return AcceptStats(
            proposed=self.proposed + other.proposed,
            accepted=self.accepted + other.accepted,
            residual_draws=self.residual_draws + other.residual_draws,
            rounds=self.rounds + other.rounds,
            rollback_audits=self.rollback_audits + other.rollback_audits,
        )


@dataclass(frozen=True)
class SpecConfig:
    """Speculative-loop configuration: block length, draft model, target kind."""

    gamma: int
    draft_lm: ToyLm
    target: str = "local_mask"  # or "reweighted"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.gamma < 1:
            raise ValueError("gamma must be >= 1")
        if self.target not in ("local_mask", "reweighted"):
            raise ValueError(f"unknown target kernel {self.target!r}")


class StepKernel:
    """A per-step sampling kernel over the valid-token set.

    Distributions are cached by (state, model-visible context), so repeated
    sampling over the same prefix tree costs one kernel evaluation per node.
    Arrays handed out are shared; treat them as read-only.
    """

    def __init__(self, g: Grammar, lm: ToyLm, scorer: Scorer | None = None):
        self.grammar = g
        self.lm = lm
        self.scorer = scorer
        self.kind = "local_mask" if scorer is None else "reweighted"
        self._cache: dict = {}

    def dist(self, state: State, prefix: tuple[int, ...]):
        """Return (candidates, probabilities) at this position."""
        order = self.lm.context_order
        key = (state, tuple(prefix[-order:]) if order else ())
        hit = self._cache.get(key)
        if hit is None:
            candidates = self.grammar.valid_next(state)
            values = (
                self.scorer(state, prefix, candidates)
                if self.scorer is not None
                else None
            )
            probs = np.exp(step_log_kernel(self.lm, key[1], candidates, values))
            hit = (candidates, probs, tuple(np.cumsum(probs)))
            self._cache[key] = hit
        return hit[0], hit[1]

    def sample(self, state: State, prefix: tuple[int, ...], rng) -> int:
        order = self.lm.context_order
        key = (state, tuple(prefix[-order:]) if order else ())
        if key not in self._cache:
            self.dist(state, prefix)
        candidates, _, cumulative = self._cache[key]
        r = rng.random()
        for i, acc in enumerate(cumulative):
            if r < acc:
                return candidates[i]
        return candidates[-1]


def local_mask_kernel(g: Grammar, lm: ToyLm) -> StepKernel:
    return StepKernel(g, lm)


def reweighted_kernel(g: Grammar, lm: ToyLm, scorer: Scorer) -> StepKernel:
    return StepKernel(g, lm, scorer=scorer)


def ancestral_sample(kernel: StepKernel, rng) -> str:
    """One complete string sampled by chaining the kernel until EOS."""
    g = kernel.grammar
    eos = g.vocab.eos
    state, prefix = g.initial_state(), ()
    while True:
        token = kernel.sample(state, prefix, rng)
        if token == eos:
            return g.vocab.decode(prefix)
        state = g.advance(state, token)
        prefix += (token,)
        assert len(prefix) <= g.max_string_length(), "grammar bound violated"


def rejection_step(
    candidates: tuple[int, ...],
    target_probs: np.ndarray,
    draft_probs: np.ndarray,
    draft_token: int,
    rng,
) -> tuple[bool, int]:
    """One accept/reject verification step; the commit is target-distributed.

    Both distributions live on the same masked support ``candidates``.
    Returns (accepted, committed token).
    """
    i = candidates.index(draft_token)
    q = float(draft_probs[i])
    if q <= 0.0:
        raise ValueError("draft token has zero draft probability")
    p = float(target_probs[i])
    if rng.random() < min(1.0, p / q):
        return True, draft_token
    residual = np.maximum(np.asarray(target_probs) - np.asarray(draft_probs), 0.0)
    mass = float(residual.sum())
    if mass <= 0.0:
        # identical distributions up to rounding; any target draw is exact
        residual, mass = np.asarray(target_probs, dtype=float), 1.0
    r = rng.random() * mass
    acc = 0.0
    for j, w in enumerate(residual):
        acc += float(w)
        if r < acc:
            return False, candidates[j]
    return False, candidates[-1]


def speculative_decode(
    target: StepKernel, draft: StepKernel, gamma: int, rng
) -> tuple[str, AcceptStats]:
    """Block speculative decoding: draft gamma tokens, verify sequentially.

    On the first rejection the rest of the draft block is discarded and one
    residual token is committed. Returns the decoded string and counters.
    """
    if gamma < 1:
        raise ValueError("gamma must be >= 1")
    g = target.grammar
    eos = g.vocab.eos
    stats = AcceptStats()
    state, prefix = g.initial_state(), ()

    while True:
        stats.rounds += 1

        # Draft a block on a throwaway copy of the committed state.
        block: list[tuple[int, np.ndarray]] = []
        d_state, d_prefix = state, prefix
        for _ in range(gamma):
            candidates, probs = draft.dist(d_state, d_prefix)
            token = draft.sample(d_state, d_prefix, rng)
            block.append((token, probs))
            stats.proposed += 1
            if token == eos:
                break
            d_state = g.advance(d_state, token)
            d_prefix += (token,)

        # Verify in order against the target kernel on the committed prefix.
        for token, draft_probs in block:
            candidates, target_probs = target.dist(state, prefix)
            accepted, committed = rejection_step(
                candidates, target_probs, draft_probs, token, rng
            )
            if accepted:
                stats.accepted += 1
            else:
                stats.residual_draws += 1
            if committed != eos:
                state = g.advance(state, committed)
                prefix += (committed,)
            if not accepted:
                stats.rollback_audits += 1
                assert g.replay(prefix) == state, "rollback corrupted matcher state"
            if committed == eos:
                return g.vocab.decode(prefix), stats
            if not accepted:
                break  # discard the rest of the draft block


def equality_verifier_step(
    candidates: tuple[int, ...],
    target_probs: np.ndarray,
    draft_probs: np.ndarray,
    rng,
) -> int:
    """Diagnostic verifier: accept the draft iff it matches an independent
    target sample; otherwise commit a fresh target sample.

    Deliberately biased: the committed marginal is
    ``p_i * (1 + q_i - <p, q>)``, not the target itself.
    """

    def draw(probs) -> int:
        r = rng.random()
        acc = 0.0
        for i, p in enumerate(probs):
            acc += float(p)
            if r < acc:
                return i
        return len(probs) - 1

    d = draw(draft_probs)
    if d == draw(target_probs):
        return candidates[d]
    return candidates[draw(target_probs)]


def equality_verifier_marginal(
    target_probs: np.ndarray, draft_probs: np.ndarray
) -> np.ndarray:
    """Closed-form committed-token marginal of the equality verifier."""
    p = np.asarray(target_probs, dtype=float)
    q = np.asarray(draft_probs, dtype=float)
    return p * (1.0 + q - float(p @ q))

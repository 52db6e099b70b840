"""The future-validity estimator hierarchy.

Tiers, cheapest first:

* ``Uniform`` scores every candidate 1 and therefore reproduces the locally
  projected law at zero cost (the status quo of mask-only pipelines).
* ``OneStepCheap`` scores a candidate by the mass the *current* position's
  distribution puts on the valid tokens one step ahead; no extra model
  evaluations, one matcher query per candidate.
* ``OneStepTrue`` uses the properly conditioned next-position distribution,
  costing one extra model evaluation per candidate.
* ``MonteCarlo`` runs unmasked rollouts and counts the fraction that end
  inside the language.
* ``ExactTable`` looks values up from a backward-DP table.

Estimates are per-candidate vectors. A constant vector is a no-op after
renormalization (softmax shift invariance), so ``variation_guard`` rejects
constant output from any tier that claims to correct.

Costs are accounted as evaluations *beyond* the one distribution the
sampling loop already materializes at the position.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .errors import HorizonTooShortError
from .grammar import Grammar, State
from .laws import FutureValidityTable
from .toylm import ToyLm


@dataclass(frozen=True)
class Uniform:
    tier = "uniform"


@dataclass(frozen=True)
class OneStepCheap:
    tier = "onestep_cheap"


@dataclass(frozen=True)
class OneStepTrue:
    tier = "onestep_true"


@dataclass(frozen=True)
class MonteCarlo:
    """``rollouts`` unmasked rollouts per candidate, up to ``horizon`` tokens.

    ``horizon=None`` rolls out to the model's length cap. The per-call RNG
    is derived from (seed, state, context, candidate), so estimates are
    reproducible regardless of evaluation order.
    """

    rollouts: int
    horizon: int | None = None
    seed: int = 0

    tier = "monte_carlo"

    def __post_init__(self) -> None:
        if self.rollouts < 1:
            raise ValueError("rollouts must be >= 1")
        if self.horizon is not None and self.horizon < 1:
            raise ValueError("horizon must be >= 1")


@dataclass(frozen=True, eq=False)
class ExactTable:
    table: FutureValidityTable

    tier = "exact"


@dataclass(frozen=True, eq=False)
class GatedHybrid:
    """Escalate from ``primary`` to ``escalate`` on high dispersion.

    Escalates when the primary estimate's log(max/min) exceeds
    ``dispersion_threshold`` (a zero minimum always escalates). The
    threshold must be supplied explicitly; there is no tuned default.
    """

    primary: "EstimatorSpec"
    escalate: "EstimatorSpec"
    dispersion_threshold: float

    tier = "hybrid"


EstimatorSpec = Uniform | OneStepCheap | OneStepTrue | MonteCarlo | ExactTable | GatedHybrid


@dataclass
class ValidityEstimate:
    """Per-candidate future-validity estimates for one decoding position."""

    candidates: tuple[int, ...]
    values: np.ndarray
    tier: str
    state: State
    prefix: tuple[int, ...]
    lm_forwards: int = 0
    matcher_queries: int = 0

    def __post_init__(self) -> None:
        if len(self.candidates) != len(self.values):
            raise ValueError("candidates and values lengths differ")
        if not np.all(np.isfinite(self.values)) or np.any(self.values < 0.0):
            raise ValueError("estimates must be finite and non-negative")


def _rollout_rng(seed: int, key, token: int) -> np.random.Generator:
    digest = hashlib.blake2b(repr((key, token)).encode(), digest_size=16).digest()
    words = (int.from_bytes(digest[:8], "little"), int.from_bytes(digest[8:], "little"))
    return np.random.default_rng(np.random.SeedSequence((seed & 2**63 - 1,) + words))


def _draw(dist: np.ndarray, rng: np.random.Generator) -> int:
    r = rng.random()
    acc = 0.0
    for i, p in enumerate(dist):
        acc += p
        if r < acc:
            return i
    return len(dist) - 1


def _mc_candidate(
    spec: MonteCarlo,
    g: Grammar,
    lm: ToyLm,
    state: State,
    tail: tuple[int, ...],
    token: int,
    horizon: int,
) -> tuple[float, int]:
    order = lm.context_order
    eos = g.vocab.eos
    start_state = g.advance(state, token)
    start_tail = ((tail + (token,))[-order:]) if order else ()
    rng = _rollout_rng(spec.seed, (state, tail), token)
    hits = 0
    forwards = 0
    for _ in range(spec.rollouts):
        s, t = start_state, start_tail
        for _ in range(horizon):
            dist = lm.dist_for_context(t)
            forwards += 1
            tok = _draw(dist, rng)
            if tok == eos:
                hits += g.is_complete(s)
                break
            if tok not in g.valid_next(s):
                break  # left the valid-prefix tree: no continuation can recover
            s = g.advance(s, tok)
            t = ((t + (tok,))[-order:]) if order else ()
    return hits / spec.rollouts, forwards


def estimate_future_validity(
    spec: EstimatorSpec,
    g: Grammar,
    lm: ToyLm,
    state: State,
    prefix: tuple[int, ...],
    candidates: tuple[int, ...],
    current_dist: np.ndarray | None = None,
) -> ValidityEstimate:
    """Score each candidate's future validity with the requested tier.

    ``candidates`` must equal the matcher's valid-token set for ``state``.
    ``current_dist``, when given, is the unmasked distribution already
    materialized at this position (used by the cheap one-step tier).
    EOS candidates always score exactly 1: appending EOS to a complete
    prefix is a valid string with certainty.
    """
    candidates = tuple(candidates)
    if not candidates:
        raise ValueError("candidates must be non-empty")
    if candidates != g.valid_next(state):
        raise ValueError("candidates must equal the valid-token set of the state")
    eos = g.vocab.eos

    if isinstance(spec, Uniform):
        return ValidityEstimate(
            candidates, np.ones(len(candidates)), spec.tier, state, prefix
        )

    if isinstance(spec, OneStepCheap):
        dist = current_dist if current_dist is not None else lm.next_token_dist(prefix)
        values = np.empty(len(candidates))
        for i, y in enumerate(candidates):
            if y == eos:
                values[i] = 1.0
            else:
                nxt = g.advance(state, y)
                values[i] = float(sum(dist[u] for u in g.valid_next(nxt)))
        return ValidityEstimate(
            candidates, values, spec.tier, state, prefix,
            matcher_queries=len(candidates),
        )

    if isinstance(spec, OneStepTrue):
        values = np.empty(len(candidates))
        forwards = 0
        for i, y in enumerate(candidates):
            if y == eos:
                values[i] = 1.0
            else:
                dist = lm.next_token_dist(prefix + (y,))
                forwards += 1
                nxt = g.advance(state, y)
                values[i] = float(sum(dist[u] for u in g.valid_next(nxt)))
        return ValidityEstimate(
            candidates, values, spec.tier, state, prefix,
            lm_forwards=forwards, matcher_queries=len(candidates),
        )

    if isinstance(spec, MonteCarlo):
        order = lm.context_order
        tail = tuple(prefix[-order:]) if order else ()
        horizon = (
            spec.horizon
            if spec.horizon is not None
            else lm.length_cap - len(prefix) - 1
        )
        values = np.empty(len(candidates))
        forwards = 0
        for i, y in enumerate(candidates):
            if y == eos:
                values[i] = 1.0
                continue
            needed = g.max_completion_tokens(g.advance(state, y))
            if horizon < needed:
                raise HorizonTooShortError(
                    f"horizon {horizon} cannot cover completions needing {needed} tokens"
                )
            values[i], used = _mc_candidate(spec, g, lm, state, tail, y, horizon)
            forwards += used
        return ValidityEstimate(
            candidates, values, spec.tier, state, prefix,
            lm_forwards=forwards, matcher_queries=len(candidates),
        )

    if isinstance(spec, ExactTable):
        values = spec.table.values(state, prefix, candidates)
        return ValidityEstimate(candidates, values, spec.tier, state, prefix)

    if isinstance(spec, GatedHybrid):
        first = estimate_future_validity(
            spec.primary, g, lm, state, prefix, candidates, current_dist
        )
        low = float(np.min(first.values))
        high = float(np.max(first.values))
        dispersion = math.inf if low <= 0.0 else math.log(high / low) if high > 0 else 0.0
        if dispersion <= spec.dispersion_threshold:
            return first
        second = estimate_future_validity(
            spec.escalate, g, lm, state, prefix, candidates, current_dist
        )
        return ValidityEstimate(
            candidates, second.values, spec.tier, state, prefix,
            lm_forwards=first.lm_forwards + second.lm_forwards,
            matcher_queries=first.matcher_queries + second.matcher_queries,
        )

    raise TypeError(f"unknown estimator spec {type(spec).__name__}")


def variation_guard(estimate: ValidityEstimate) -> bool:
    """False iff a correcting tier produced a constant multi-candidate vector.

    A constant estimate renormalizes away and yields the projected law, so
    it signals a broken estimator unless the tier is the uniform baseline
    (or the position has a single valid token, where no correction exists).
    """
    if estimate.tier == "uniform" or len(estimate.candidates) <= 1:
        return True
    return bool(np.any(estimate.values != estimate.values[0]))


def additive_error(estimate: ValidityEstimate, exact: FutureValidityTable) -> float:
    """Max absolute deviation from the exact table over the candidates."""
    truth = exact.values(estimate.state, estimate.prefix, estimate.candidates)
    return float(np.max(np.abs(estimate.values - truth)))


class CachedScorer:
    """Adapter from an estimator spec to the scorer interface of law walks
    and reweighted kernels.

    Estimates are cached by (state, visible context) so that a law walk and
    a sampler sharing this scorer see identical values, and accumulated
    cost counters cover each position exactly once.
    """

    def __init__(self, spec: EstimatorSpec, g: Grammar, lm: ToyLm) -> None:
        self.spec = spec
        self.grammar = g
        self.lm = lm
        self.lm_forwards = 0
        self.matcher_queries = 0
        self._order = lm.context_order
        self._cache: dict = {}

    def __call__(self, state, prefix, candidates) -> np.ndarray:
        key = (state, tuple(prefix[-self._order:]) if self._order else ())
        values = self._cache.get(key)
        if values is None:
            estimate = estimate_future_validity(
                self.spec, self.grammar, self.lm, state, prefix, candidates
            )
            self.lm_forwards += estimate.lm_forwards
            self.matcher_queries += estimate.matcher_queries
            values = estimate.values
            self._cache[key] = values
        return values


def scorer_for(spec: EstimatorSpec, g: Grammar, lm: ToyLm) -> CachedScorer:
    return CachedScorer(spec, g, lm)


def estimator_to_config(spec: EstimatorSpec) -> dict:
    if isinstance(spec, Uniform):
        return {"variant": "uniform"}
    if isinstance(spec, OneStepCheap):
        return {"variant": "onestep_cheap"}
    if isinstance(spec, OneStepTrue):
        return {"variant": "onestep_true"}
    if isinstance(spec, MonteCarlo):
        return {
            "variant": "monte_carlo",
            "rollouts": spec.rollouts,
            "horizon": spec.horizon,
            "seed": spec.seed,
        }
    if isinstance(spec, ExactTable):
        return {"variant": "exact"}
    if isinstance(spec, GatedHybrid):
        return {
            "variant": "hybrid",
            "primary": estimator_to_config(spec.primary),
            "escalate": estimator_to_config(spec.escalate),
            "dispersion_threshold": spec.dispersion_threshold,
        }
    raise ValueError(f"cannot serialize {type(spec).__name__}")


def estimator_from_config(cfg: dict, exact_table: FutureValidityTable | None = None) -> EstimatorSpec:
    variant = cfg["variant"]
    if variant == "uniform":
        return Uniform()
    if variant == "onestep_cheap":
        return OneStepCheap()
    if variant == "onestep_true":
        return OneStepTrue()
    if variant == "monte_carlo":
        return MonteCarlo(
            rollouts=int(cfg["rollouts"]),
            horizon=cfg.get("horizon"),
            seed=int(cfg.get("seed", 0)),
        )
    if variant == "exact":
        if exact_table is None:
            raise ValueError("exact estimator needs a precomputed table")
        return ExactTable(table=exact_table)
    if variant == "hybrid":
        if "dispersion_threshold" not in cfg:
            raise ValueError("hybrid estimator requires an explicit dispersion_threshold")
        return GatedHybrid(
            primary=estimator_from_config(cfg["primary"], exact_table),
            escalate=estimator_from_config(cfg["escalate"], exact_table),
            dispersion_threshold=float(cfg["dispersion_threshold"]),
        )
    raise ValueError(f"unknown estimator variant {variant!r}")

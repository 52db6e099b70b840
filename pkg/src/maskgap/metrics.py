"""Distances, identities, error bounds, confidence intervals and cost model.

Total variation between terminal laws is half the L1 distance over the
union of supports, so an atom missing on one side contributes its full
mass. The KL identity cross-checks the direct per-step divergence between
the conditional and projected kernels against its closed form in terms of
future validity: the expectation under the conditional kernel of
log(validity / mean validity), with the mean taken under the projected
kernel. The additive fidelity bound is delta / (mean validity - delta)
and is vacuous when delta reaches the mean.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .estimators import ValidityEstimate, additive_error
from .grammar import DyckGrammar, Grammar
from .laws import FutureValidityTable, TerminalLaw


def tv(a, b) -> float:
    """Total variation distance between two laws or two aligned vectors."""
    if isinstance(a, TerminalLaw) and isinstance(b, TerminalLaw):
        keys = a.support() | b.support()
        return 0.5 * sum(abs(a.prob(s) - b.prob(s)) for s in keys)
    av, bv = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if av.shape != bv.shape:
        raise ValueError("vectors must be aligned on the same support")
    return 0.5 * float(np.abs(av - bv).sum())


def kl_identity_check(
    conditional: np.ndarray,
    projected: np.ndarray,
    validity: np.ndarray,
) -> tuple[float, float]:
    """Per-step KL(conditional || projected) via both routes.

    Returns (direct sum, closed form via future validity). Zero-mass
    conditional atoms are omitted; a projected zero under positive
    conditional mass cannot occur for an exact projection and is asserted.
    """
    mu_star = np.asarray(conditional, dtype=float)
    mu_proj = np.asarray(projected, dtype=float)
    phi = np.asarray(validity, dtype=float)
    mean_validity = float(mu_proj @ phi)
    direct = 0.0
    via = 0.0
    for i in range(len(mu_star)):
        if mu_star[i] <= 0.0:
            continue
        assert mu_proj[i] > 0.0, "projected kernel lost an atom of the conditional"
        direct += mu_star[i] * math.log(mu_star[i] / mu_proj[i])
        via += mu_star[i] * math.log(phi[i] / mean_validity)
    return direct, via


@dataclass(frozen=True)
class BoundReport:
    """Fidelity-bound summary for one decoding position.

    ``additive_bound`` is None when vacuous (error at least the mean
    validity). Relative fields are present only when every exact validity
    value at the position is positive.
    """

    delta: float
    validity_mean: float
    additive_bound: float | None
    relative_eps: float | None = None
    relative_bound: float | None = None


def fidelity_bounds(
    estimate: ValidityEstimate,
    exact: FutureValidityTable,
    projected: np.ndarray,
) -> BoundReport:
    """Additive (and, where defined, relative) per-step TV bounds."""
    truth = exact.values(estimate.state, estimate.prefix, estimate.candidates)
    delta = additive_error(estimate, exact)
    validity_mean = float(np.asarray(projected, dtype=float) @ truth)
    additive = delta / (validity_mean - delta) if delta < validity_mean else None

    relative_eps = None
    relative = None
    if np.all(truth > 0.0):
        ratios = estimate.values / truth
        relative_eps = float(np.max(np.abs(ratios - 1.0)))
        relative = (
            min(1.0, relative_eps / (1.0 - relative_eps))
            if relative_eps < 1.0
            else 1.0
        )
    return BoundReport(
        delta=delta,
        validity_mean=validity_mean,
        additive_bound=additive,
        relative_eps=relative_eps,
        relative_bound=relative,
    )


def empirical_law(samples: list[str]) -> TerminalLaw:
    """Empirical terminal law from complete-string samples."""
    if not samples:
        raise ValueError("samples must be non-empty")
    n = len(samples)
    counts = Counter(samples)
    return TerminalLaw(
        log_probs={s: math.log(c) - math.log(n) for s, c in counts.items()}
    )


def bootstrap_tv_ci(
    samples: list[str],
    reference: TerminalLaw,
    resamples: int = 500,
    rng: np.random.Generator | None = None,
) -> tuple[float, float, float]:
    """Point TV to a reference law plus a percentile 95% bootstrap CI.

    Resampling is with replacement at full sample size; deterministic for
    a given generator state.
    """
    if not samples:
        raise ValueError("samples must be non-empty")
    rng = np.random.default_rng(0) if rng is None else rng
    atoms = sorted(set(samples) | reference.support())
    index = {s: i for i, s in enumerate(atoms)}
    ref = np.array([reference.prob(s) for s in atoms])
    n = len(samples)
    sample_idx = np.fromiter((index[s] for s in samples), dtype=np.int64, count=n)
    counts = np.bincount(sample_idx, minlength=len(atoms))
    point = 0.5 * float(np.abs(counts / n - ref).sum())
    tvs = np.empty(resamples)
    for r in range(resamples):
        draw = sample_idx[rng.integers(0, n, size=n)]
        boot = np.bincount(draw, minlength=len(atoms)) / n
        tvs[r] = 0.5 * float(np.abs(boot - ref).sum())
    lo, hi = np.percentile(tvs, [2.5, 97.5])
    return point, float(lo), float(hi)


@dataclass(frozen=True)
class StructuralStats:
    """Length (and, for bracket grammars, nesting-depth) distributions."""

    length_hist: dict[int, float]
    mean_length: float
    depth_hist: dict[int, float] | None = None
    mean_depth: float | None = None


def _max_depth(s: str, open_glyph: str, close_glyph: str) -> int:
    depth = best = 0
    for ch in s:
        if ch == open_glyph:
            depth += 1
            best = max(best, depth)
        elif ch == close_glyph:
            depth -= 1
    return best


def structural_stats(law_or_samples, g: Grammar) -> StructuralStats:
    """Structure histograms of a law or a sample list over grammar ``g``."""
    if isinstance(law_or_samples, TerminalLaw):
        weighted = list(law_or_samples.as_dict().items())
    else:
        samples = list(law_or_samples)
        w = 1.0 / len(samples)
        weighted = [(s, c * w) for s, c in Counter(samples).items()]

    length_hist: dict[int, float] = {}
    for s, w in weighted:
        length_hist[len(s)] = length_hist.get(len(s), 0.0) + w
    mean_length = sum(k * v for k, v in length_hist.items())

    depth_hist = None
    mean_depth = None
    if isinstance(g, DyckGrammar):
        open_glyph = g.vocab.glyphs[g.OPEN]
        close_glyph = g.vocab.glyphs[g.CLOSE]
        depth_hist = {}
        for s, w in weighted:
            d = _max_depth(s, open_glyph, close_glyph)
            depth_hist[d] = depth_hist.get(d, 0.0) + w
        mean_depth = sum(k * v for k, v in depth_hist.items())

    return StructuralStats(
        length_hist=dict(sorted(length_hist.items())),
        mean_length=mean_length,
        depth_hist=dict(sorted(depth_hist.items())) if depth_hist is not None else None,
        mean_depth=mean_depth,
    )


def histogram_kl(a: dict[int, float], b: dict[int, float]) -> float:
    """KL(a || b) over integer histograms; +inf on a support violation."""
    out = 0.0
    for k, pa in a.items():
        if pa <= 0.0:
            continue
        pb = b.get(k, 0.0)
        if pb <= 0.0:
            return math.inf
        out += pa * math.log(pa / pb)
    return out


@dataclass(frozen=True)
class CostModelParams:
    """Analytic per-round timing model for the speculative loop."""

    t_verify_ms: float
    t_draft_ms: float
    t_forward_ms: float
    tokens_per_round: float
    overhead_forwards_per_round: float = 0.0
    overhead_fixed_ms: float = 0.0

    def __post_init__(self) -> None:
        if min(
            self.t_verify_ms,
            self.t_draft_ms,
            self.t_forward_ms,
            self.overhead_forwards_per_round,
            self.overhead_fixed_ms,
        ) < 0.0:
            raise ValueError("timings must be non-negative")
        if self.tokens_per_round <= 0.0:
            raise ValueError("tokens_per_round must be positive")


def cost_model(params: CostModelParams) -> float:
    """Modeled throughput in tokens per second."""
    round_ms = (
        params.t_verify_ms
        + params.t_draft_ms
        + params.overhead_fixed_ms
        + params.overhead_forwards_per_round * params.t_forward_ms
    )
    if round_ms <= 0.0:
        raise ValueError("round time must be positive")
    return 1000.0 * params.tokens_per_round / round_ms


def hoeffding_radius(k: int, alpha: float, num_candidates: int = 1) -> tuple[float, float]:
    """Per-candidate and union-bound Hoeffding radii for k-rollout estimates."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie strictly inside (0, 1)")
    if num_candidates < 1:
        raise ValueError("num_candidates must be >= 1")
    per = math.sqrt(math.log(2.0 / alpha) / (2.0 * k))
    union = math.sqrt(math.log(2.0 * num_candidates / alpha) / (2.0 * k))
    return per, union

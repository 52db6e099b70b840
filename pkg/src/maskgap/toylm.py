"""Deterministic toy language models over small character vocabularies.

Every model here is a pure function of (spec, prefix): identical inputs give
bitwise-identical next-token distributions, which makes experiments
reproducible and safe to evaluate from any number of workers. Distributions
are computed from logits in log-space and exponentiated once per vector.

A model only ever conditions on the last ``context_order`` tokens of the
prefix, so internal computations are keyed by that suffix ("tail"). The
public API still takes full prefixes and enforces the hard length cap.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

from .errors import LengthCapError

DEFAULT_LENGTH_CAP = 32

_TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class Vocab:
    """An ordered character vocabulary with a distinguished EOS token.

    Token ids are dense ``0..len(glyphs)-1``; glyph ``glyphs[i]`` has id
    ``i``. ``eos`` is the id of the end-of-string token.
    """

    glyphs: tuple[str, ...]
    eos: int

    def __post_init__(self) -> None:
        if len(self.glyphs) < 2:
            raise ValueError("vocabulary needs at least two tokens")
        if len(set(self.glyphs)) != len(self.glyphs):
            raise ValueError("duplicate glyphs in vocabulary")
        if not 0 <= self.eos < len(self.glyphs):
            raise ValueError("eos id outside vocabulary")

    def __len__(self) -> int:
        return len(self.glyphs)

    @cached_property
    def _ids(self) -> dict[str, int]:
        return {g: i for i, g in enumerate(self.glyphs)}

    def encode(self, text: str) -> tuple[int, ...]:
        """Map a glyph string to token ids (one glyph per token)."""
        try:
            return tuple(self._ids[ch] for ch in text)
        except KeyError as exc:
            raise ValueError(f"glyph {exc.args[0]!r} not in vocabulary") from None

    def decode(self, tokens: tuple[int, ...]) -> str:
        """Map token ids back to a glyph string (EOS is not special-cased)."""
        return "".join(self.glyphs[t] for t in tokens)


_BINARY_VOCAB = Vocab(glyphs=("0", "1", "$"), eos=2)


def binary_vocab() -> Vocab:
    """The {0, 1, EOS} vocabulary used by the iid Bernoulli model."""
    return _BINARY_VOCAB


def _hashed_unit_normal(seed: int, tail: tuple[int, ...], token: int) -> float:
    """Standard normal draw from a counter-based hash; stable across runs."""
    payload = seed.to_bytes(8, "little", signed=True)
    payload += len(tail).to_bytes(2, "little")
    for t in tail:
        payload += t.to_bytes(2, "little")
    payload += token.to_bytes(2, "little")
    digest = hashlib.blake2b(payload, digest_size=16).digest()
    a = int.from_bytes(digest[:8], "little")
    b = int.from_bytes(digest[8:], "little")
    # 53-bit uniforms; 1-u keeps the log argument strictly positive.
    u1 = (a >> 11) * 2.0**-53
    u2 = (b >> 11) * 2.0**-53
    return math.sqrt(-2.0 * math.log(1.0 - u1)) * math.cos(_TWO_PI * u2)


@lru_cache(maxsize=262144)
def _log_dist_for_tail(lm: "ToyLm", tail: tuple[int, ...]) -> np.ndarray:
    z = np.asarray(lm._raw_logits(tail), dtype=np.float64)
    z = z - z.max()
    log_dist = z - math.log(np.exp(z).sum())
    log_dist.flags.writeable = False
    return log_dist


@lru_cache(maxsize=262144)
def _dist_for_tail(lm: "ToyLm", tail: tuple[int, ...]) -> np.ndarray:
    dist = np.exp(_log_dist_for_tail(lm, tail))
    dist.flags.writeable = False
    return dist


class ToyLm:
    """Shared behaviour for the model variants.

    Subclasses are frozen dataclasses carrying ``vocab``, ``context_order``
    and ``length_cap`` fields plus whatever parameters they need, and
    implement ``_raw_logits(tail)``. Returned arrays are cached and marked
    read-only; callers must copy before mutating.
    """

    vocab: Vocab
    context_order: int
    length_cap: int

    def _raw_logits(self, tail: tuple[int, ...]) -> tuple[float, ...]:
        raise NotImplementedError

    def _tail(self, prefix: tuple[int, ...]) -> tuple[int, ...]:
        if len(prefix) >= self.length_cap:
            raise LengthCapError(
                f"prefix of length {len(prefix)} reached the cap {self.length_cap}"
            )
        k = self.context_order
        return tuple(prefix[-k:]) if k > 0 else ()

    def logits(self, prefix: tuple[int, ...]) -> np.ndarray:
        """Raw scores over the vocabulary; softmax gives the distribution."""
        self._tail(prefix)  # cap check
        k = self.context_order
        tail = tuple(prefix[-k:]) if k > 0 else ()
        return np.asarray(self._raw_logits(tail), dtype=np.float64)

    def next_token_dist(self, prefix: tuple[int, ...]) -> np.ndarray:
        """Next-token distribution given the prefix (read-only array)."""
        return _dist_for_tail(self, self._tail(prefix))

    def log_next_token_dist(self, prefix: tuple[int, ...]) -> np.ndarray:
        return _log_dist_for_tail(self, self._tail(prefix))

    # Tail-keyed variants for callers that track suffix context themselves
    # (the backward DP and rollout loops). No length-cap check here.

    def dist_for_context(self, tail: tuple[int, ...]) -> np.ndarray:
        return _dist_for_tail(self, tail)

    def log_dist_for_context(self, tail: tuple[int, ...]) -> np.ndarray:
        return _log_dist_for_tail(self, tail)


@dataclass(frozen=True)
class SeededLogitLm(ToyLm):
    """Logits drawn from a counter-based hash of (seed, context, token).

    Each logit is an independent N(0, 1.5^2) value determined by the seed,
    the last ``context_order`` prefix tokens, and the candidate token, so
    the model is reproducible without storing tables. ``token_bias`` adds a
    fixed per-token offset (e.g. to favour an opening bracket or EOS).
    """

    vocab: Vocab
    seed: int
    context_order: int = 1
    token_bias: tuple[float, ...] | None = None
    length_cap: int = DEFAULT_LENGTH_CAP

    def __post_init__(self) -> None:
        if self.context_order < 0:
            raise ValueError("context_order must be >= 0")
        if self.token_bias is not None and len(self.token_bias) != len(self.vocab):
            raise ValueError("token_bias length must match vocabulary size")

    def _raw_logits(self, tail: tuple[int, ...]) -> tuple[float, ...]:
        bias = self.token_bias or (0.0,) * len(self.vocab)
        return tuple(
            1.5 * _hashed_unit_normal(self.seed, tail, y) + bias[y]
            for y in range(len(self.vocab))
        )


@dataclass(frozen=True)
class BernoulliLm(ToyLm):
    """Iid base model over {0, 1, EOS}.

    Conditioned on emitting a bit, P(1) = ``p_one``; the model also places
    ``eos_prob`` mass on EOS at every step so that complete strings have
    positive probability (the conditional and projected laws over any
    fixed-length language are invariant to ``eos_prob``).
    """

    p_one: float
    eos_prob: float = 0.05
    length_cap: int = DEFAULT_LENGTH_CAP

    context_order = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.p_one < 1.0:
            raise ValueError("p_one must lie in (0, 1)")
        if not 0.0 < self.eos_prob < 1.0:
            raise ValueError("eos_prob must lie in (0, 1)")

    @property
    def vocab(self) -> Vocab:
        return binary_vocab()

    def _raw_logits(self, tail: tuple[int, ...]) -> tuple[float, ...]:
        keep = 1.0 - self.eos_prob
        return (
            math.log((1.0 - self.p_one) * keep),
            math.log(self.p_one * keep),
            math.log(self.eos_prob),
        )


@dataclass(frozen=True)
class BigramCharLm(ToyLm):
    """Character bigram model: P(y | last) = softmax(table[last] / temperature).

    The EOS row doubles as the start row for the empty prefix.
    """

    vocab: Vocab
    table: tuple[tuple[float, ...], ...]
    temperature: float = 1.0
    length_cap: int = DEFAULT_LENGTH_CAP

    context_order = 1

    def __post_init__(self) -> None:
        n = len(self.vocab)
        if len(self.table) != n or any(len(row) != n for row in self.table):
            raise ValueError("table must be |V| x |V|")
        if any(not math.isfinite(w) for row in self.table for w in row):
            raise ValueError("table weights must be finite")
        if self.temperature <= 0.0:
            raise ValueError("temperature must be positive")

    def _raw_logits(self, tail: tuple[int, ...]) -> tuple[float, ...]:
        last = tail[-1] if tail else self.vocab.eos
        return tuple(w / self.temperature for w in self.table[last])


@dataclass(frozen=True)
class ShiftedLm(ToyLm):
    """Wrapper adding a constant to every logit of a base model.

    By shift invariance of the softmax this changes no distribution; the
    wrapper exists so that invariance is testable end to end.
    """

    base: ToyLm
    offset: float

    @property
    def vocab(self) -> Vocab:
        return self.base.vocab

    @property
    def context_order(self) -> int:
        return self.base.context_order

    @property
    def length_cap(self) -> int:
        return self.base.length_cap

    def _raw_logits(self, tail: tuple[int, ...]) -> tuple[float, ...]:
        return tuple(z + self.offset for z in self.base._raw_logits(tail))


def assert_distribution(vec: np.ndarray, tol: float = 1e-12) -> None:
    """Raise if ``vec`` is not a normalized non-negative probability vector."""
    if np.any(vec < 0.0):
        raise AssertionError("negative probability entry")
    if abs(float(vec.sum()) - 1.0) > tol:
        raise AssertionError(f"distribution sums to {float(vec.sum())!r}")


def lm_to_config(lm: ToyLm) -> dict:
    """Serialize a model spec to a JSON-ready dict (vocab is not included)."""
    if isinstance(lm, SeededLogitLm):
        cfg = {
            "variant": "seeded",
            "seed": lm.seed,
            "context_order": lm.context_order,
            "length_cap": lm.length_cap,
        }
        if lm.token_bias is not None:
            cfg["token_bias"] = list(lm.token_bias)
        return cfg
    if isinstance(lm, BernoulliLm):
        return {
            "variant": "bernoulli",
            "p_one": lm.p_one,
            "eos_prob": lm.eos_prob,
            "length_cap": lm.length_cap,
        }
    if isinstance(lm, BigramCharLm):
        return {
            "variant": "bigram",
            "table": [list(row) for row in lm.table],
            "temperature": lm.temperature,
            "length_cap": lm.length_cap,
        }
    raise ValueError(f"cannot serialize {type(lm).__name__}")


def lm_from_config(cfg: dict, vocab: Vocab) -> ToyLm:
    """Build a model from its config dict over the given vocabulary."""
    variant = cfg["variant"]
    cap = int(cfg.get("length_cap", DEFAULT_LENGTH_CAP))
    if variant == "seeded":
        bias = cfg.get("token_bias")
        return SeededLogitLm(
            vocab=vocab,
            seed=int(cfg["seed"]),
            context_order=int(cfg.get("context_order", 1)),
            token_bias=tuple(float(b) for b in bias) if bias is not None else None,
            length_cap=cap,
        )
    if variant == "bernoulli":
        return BernoulliLm(
            p_one=float(cfg["p_one"]),
            eos_prob=float(cfg.get("eos_prob", 0.05)),
            length_cap=cap,
        )
    if variant == "bigram":
        return BigramCharLm(
            vocab=vocab,
            table=tuple(tuple(float(w) for w in row) for row in cfg["table"]),
            temperature=float(cfg.get("temperature", 1.0)),
            length_cap=cap,
        )
    raise ValueError(f"unknown lm variant {variant!r}")

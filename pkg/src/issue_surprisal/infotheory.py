"""Self-information, entropy, and literal cross-entropy, all in bits."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Mapping

from .errors import DomainError, SupportError

_SUM_TOLERANCE = 1e-9


@dataclass(frozen=True)
class ProbabilityDistribution:
    """A finite distribution: symbol -> probability, summing to one."""

    probabilities: Mapping[str, float]

    def __post_init__(self):
        probs = dict(self.probabilities)
        object.__setattr__(self, "probabilities", probs)
        for symbol, p in probs.items():
            if p < 0 or p > 1:
                raise DomainError(f"P({symbol!r}) = {p} outside [0, 1]")
        total = math.fsum(probs.values())
        if abs(total - 1.0) > _SUM_TOLERANCE:
            raise DomainError(f"probabilities sum to {total}, not 1")

    @property
    def support(self):
        return frozenset(s for s, p in self.probabilities.items() if p > 0)

    def __getitem__(self, symbol: str) -> float:
        return self.probabilities.get(symbol, 0.0)

    @classmethod
    def from_counts(cls, counts: Mapping[str, int]) -> "ProbabilityDistribution":
        total = sum(counts.values())
        if total <= 0:
            raise DomainError("cannot build a distribution from empty counts")
        return cls({s: c / total for s, c in counts.items()})


def self_information(p: float) -> float:
    """-log2(p): bits of information gained from observing an event of
    probability p. Zero-probability events are infinitely surprising."""
    if p < 0 or p > 1:
        raise DomainError(f"probability {p} outside [0, 1]")
    if p == 0:
        return math.inf
    return -math.log2(p)


def entropy(dist: ProbabilityDistribution) -> float:
    """Average bits to encode one event, with the 0*log(0) = 0 convention."""
    return -math.fsum(p * math.log2(p) for p in dist.probabilities.values() if p > 0)


def cross_entropy_literal(observed: ProbabilityDistribution,
                          truth: ProbabilityDistribution) -> float:
    """Average bits to encode `observed` events under a code optimized for
    `truth`. Equals entropy(observed) when the two distributions agree."""
    terms = []
    for symbol in observed.support:
        q = truth[symbol]
        if q <= 0:
            raise SupportError(f"reference distribution gives zero probability to {symbol!r}")
        terms.append(observed[symbol] * math.log2(q))
    return -math.fsum(terms)

"""N-gram language models with modified Kneser-Ney smoothing.

The model houses the reference ("true") word distribution used for
surprisal scoring. Training counts every k-gram (k = 1..order) over
boundary-padded token sequences; lower-order distributions use
continuation counts; discounts are estimated from counts-of-counts with
a fixed fallback for degenerate corpora. All log quantities are base 2.

A fitted model is immutable and safe for concurrent queries.
"""
from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from sklearn.base import BaseEstimator

from .errors import DomainError, EmptyCorpus, EmptyDocument, UnknownToken
from .infotheory import ProbabilityDistribution, cross_entropy_literal
from .textprep import TokenSequence

BOS = "<s>"
EOS = "</s>"

SMOOTHING_MKN = "modified_kneser_ney"
SMOOTHING_NONE = "none"

FALLBACK_DISCOUNTS = (0.5, 1.0, 1.5)

Gram = Tuple[str, ...]


@dataclass(frozen=True)
class SurprisalScore:
    repo: str
    number: int
    cross_entropy_bits_per_token: float
    token_count: int
    mode: str
    kind: str = ""

    def __post_init__(self):
        if self.cross_entropy_bits_per_token < 0:
            raise ValueError("cross entropy must be nonnegative")
        if self.token_count < 1:
            raise ValueError("token_count must be positive")

    @property
    def source(self) -> Tuple[str, int]:
        return (self.repo, self.number)


def estimate_discounts(counts_of_counts: Sequence[int]) -> Tuple[float, float, float]:
    """Count-dependent discounts (D1, D2, D3+) from (n1, n2, n3, n4).

    Any zero among n1..n4 makes the closed-form estimate undefined or
    unstable, so those levels fall back to fixed discounts, keeping tiny
    corpora trainable.
    """
    n1, n2, n3, n4 = counts_of_counts
    if n1 == 0 or n2 == 0 or n3 == 0 or n4 == 0:
        return FALLBACK_DISCOUNTS
    y = n1 / (n1 + 2.0 * n2)
    d1 = 1.0 - 2.0 * y * n2 / n1
    d2 = 2.0 - 3.0 * y * n3 / n2
    d3 = 3.0 - 4.0 * y * n4 / n3
    return (min(max(d1, 0.0), 1.0), min(max(d2, 0.0), 2.0), min(max(d3, 0.0), 3.0))


class NGramCounts:
    """Raw and continuation counts for every level of an n-gram model."""

    def __init__(self, order: int, sequences: Sequence[Sequence[str]], pad: bool):
        if order < 1:
            raise DomainError(f"order must be >= 1, got {order}")
        self.order = order
        self.pad = pad
        self.counts: Dict[int, Counter] = {k: Counter() for k in range(1, order + 1)}
        vocab = set()
        total = 0
        for seq in sequences:
            tokens = list(seq)
            vocab.update(tokens)
            total += len(tokens)
            padded = ([BOS] * (order - 1) + tokens + [EOS]) if pad else tokens
            for k in range(1, order + 1):
                level = self.counts[k]
                for i in range(len(padded) - k + 1):
                    level[tuple(padded[i:i + k])] += 1
        vocab.discard(BOS)
        vocab.discard(EOS)
        self.vocabulary = frozenset(vocab)
        self.total_tokens = total
        # Continuation counts: distinct left extensions of each k-gram.
        self.continuation_counts: Dict[int, Counter] = {k: Counter() for k in range(1, order)}
        for k in range(1, order):
            cont = self.continuation_counts[k]
            for gram in self.counts[k + 1]:
                cont[gram[1:]] += 1

    def counts_of_counts(self, level: int) -> Tuple[int, int, int, int]:
        """(n1..n4) over k-grams that are predictable events (not BOS-final)."""
        buckets = [0, 0, 0, 0]
        for gram, c in self.counts[level].items():
            if gram[-1] == BOS:
                continue
            if 1 <= c <= 4:
                buckets[c - 1] += 1
        return tuple(buckets)


class KneserNeyModel:
    """A trained model; query via prob() / sequence_cross_entropy()."""

    def __init__(self, counts: NGramCounts, smoothing: str = SMOOTHING_MKN,
                 config_fingerprint: str = ""):
        if smoothing not in (SMOOTHING_MKN, SMOOTHING_NONE):
            raise DomainError(f"unknown smoothing {smoothing!r}")
        self.counts = counts
        self.order = counts.order
        self.smoothing = smoothing
        self.vocabulary = counts.vocabulary
        self.config_fingerprint = config_fingerprint
        self.predictable = frozenset(counts.vocabulary | {EOS}) if counts.pad else counts.vocabulary
        self.discounts: Dict[int, Tuple[float, float, float]] = {
            k: estimate_discounts(counts.counts_of_counts(k)) for k in range(1, self.order + 1)
        }
        self._build_tables()

    # -- tables ------------------------------------------------------------

    def _build_tables(self):
        order = self.order
        # Per-level event-count table: raw at the top, continuation below.
        self._events: Dict[int, Mapping[Gram, int]] = {order: self.counts.counts[order]}
        for k in range(1, order):
            self._events[k] = self.counts.continuation_counts[k]
        # Per-context denominator and discount buckets.
        self._ctx: Dict[int, Dict[Gram, Tuple[int, int, int, int]]] = {}
        for k in range(1, order + 1):
            table: Dict[Gram, List[int]] = defaultdict(lambda: [0, 0, 0, 0])
            for gram, c in self._events[k].items():
                if c <= 0 or gram[-1] == BOS:
                    continue
                entry = table[gram[:-1]]
                entry[0] += c
                if c == 1:
                    entry[1] += 1
                elif c == 2:
                    entry[2] += 1
                else:
                    entry[3] += 1
            self._ctx[k] = {ctx: tuple(v) for ctx, v in table.items()}
        if order > 1:
            root = self._ctx[1].get((), (0, 0, 0, 0))
            self._continuation_total = root[0]

    # -- probabilities -----------------------------------------------------

    def prob(self, word: str, context: Sequence[str] = ()) -> float:
        """Interpolated probability of `word` after `context` (most recent
        last). Unseen contexts back off to shorter histories."""
        if word not in self.predictable:
            raise UnknownToken(word)
        ctx = tuple(context)
        if len(ctx) > self.order - 1:
            ctx = ctx[-(self.order - 1):]
        if self.smoothing == SMOOTHING_NONE:
            return self._prob_mle(word, ctx)
        return self._prob_mkn(word, ctx, len(ctx) + 1)

    def _prob_mle(self, word: str, ctx: Gram) -> float:
        level = len(ctx) + 1
        info = self._ctx.get(level, {}).get(ctx)
        if info is None or info[0] == 0:
            return 0.0
        return self._events[level].get(ctx + (word,), 0) / info[0]

    def _prob_mkn(self, word: str, ctx: Gram, level: int) -> float:
        if level == 1:
            if self.order == 1:
                info = self._ctx[1][()]
                denom = info[0]
                c = self._events[1].get((word,), 0)
                d1, d2, d3 = self.discounts[1]
                discounted = d1 * info[1] + d2 * info[2] + d3 * info[3]
                uniform = 1.0 / len(self.predictable)
                return max(c - self._discount_for(c, 1), 0.0) / denom + (discounted / denom) * uniform
            c = self._events[1].get((word,), 0)
            return c / self._continuation_total
        info = self._ctx[level].get(ctx)
        if info is None or info[0] == 0:
            return self._prob_mkn(word, ctx[1:], level - 1)
        denom = info[0]
        c = self._events[level].get(ctx + (word,), 0)
        d1, d2, d3 = self.discounts[level]
        gamma = (d1 * info[1] + d2 * info[2] + d3 * info[3]) / denom
        return (max(c - self._discount_for(c, level), 0.0) / denom
                + gamma * self._prob_mkn(word, ctx[1:], level - 1))

    def _discount_for(self, count: int, level: int) -> float:
        if count <= 0:
            return 0.0
        d1, d2, d3 = self.discounts[level]
        return d1 if count == 1 else d2 if count == 2 else d3

    def unigram_distribution(self) -> ProbabilityDistribution:
        """The model's distribution over single symbols."""
        return ProbabilityDistribution({w: self.prob(w) for w in sorted(self.predictable)})

    # -- scoring -----------------------------------------------------------

    def sequence_cross_entropy(self, seq: TokenSequence,
                               mode: str = "conditional_ngram",
                               skip_unknown: bool = False,
                               kind: str = "") -> SurprisalScore:
        """Average bits per token needed to encode `seq` under this model."""
        tokens = list(seq.tokens)
        if not tokens:
            raise EmptyDocument(f"empty sequence for {seq.source}")
        if mode == "conditional_ngram":
            history = ([BOS] * (self.order - 1) if self.counts.pad else []) + tokens
            offset = self.order - 1 if self.counts.pad else 0
            total_bits = 0.0
            scored = 0
            for t, word in enumerate(tokens):
                if word not in self.predictable:
                    if skip_unknown:
                        continue
                    raise UnknownToken(word)
                start = max(0, offset + t - (self.order - 1))
                p = self.prob(word, history[start:offset + t])
                total_bits += math.inf if p <= 0 else -math.log2(p)
                scored += 1
            if scored == 0:
                raise EmptyDocument(f"no scorable tokens for {seq.source}")
            bits = total_bits / scored
        elif mode == "literal_unigram":
            counts = Counter(t for t in tokens if t in self.predictable or not skip_unknown)
            if not counts:
                raise EmptyDocument(f"no scorable tokens for {seq.source}")
            observed = ProbabilityDistribution.from_counts(counts)
            truth = self.unigram_distribution()
            bits = cross_entropy_literal(observed, truth)
        else:
            raise DomainError(f"unknown scoring mode {mode!r}")
        return SurprisalScore(repo=seq.source[0], number=seq.source[1],
                              cross_entropy_bits_per_token=max(bits, 0.0),
                              token_count=len(tokens), mode=mode, kind=kind)

    def score_corpus(self, corpus: Sequence[TokenSequence],
                     mode: str = "conditional_ngram",
                     kinds: Optional[Mapping[Tuple[str, int], str]] = None,
                     skip_unknown: bool = False) -> List[SurprisalScore]:
        """One score per non-empty sequence, in input order."""
        kinds = kinds or {}
        out = []
        for seq in corpus:
            if not seq.tokens:
                continue
            out.append(self.sequence_cross_entropy(
                seq, mode=mode, skip_unknown=skip_unknown,
                kind=kinds.get(seq.source, "")))
        return out

    # -- serialization -----------------------------------------------------

    def save_tsv(self, path: Union[str, Path]) -> None:
        """Diff-stable text format: header, then one sorted line per n-gram."""
        lines = [
            "# issue-surprisal ngram model v1",
            f"order\t{self.order}",
            f"smoothing\t{self.smoothing}",
            f"pad\t{int(self.counts.pad)}",
            f"config_fingerprint\t{self.config_fingerprint}",
            f"total_tokens\t{self.counts.total_tokens}",
        ]
        for k in range(1, self.order + 1):
            d1, d2, d3 = self.discounts[k]
            lines.append(f"discounts\t{k}\t{d1!r}\t{d2!r}\t{d3!r}")
        rows = []
        for k in range(1, self.order + 1):
            cont = self.counts.continuation_counts.get(k, {})
            for gram in sorted(self.counts.counts[k]):
                rows.append((k, gram, self.counts.counts[k][gram], cont.get(gram, 0)))
        rows.sort(key=lambda r: (r[0], r[1]))
        for k, gram, count, cc in rows:
            lines.append(f"{k}\t" + "\t".join(gram) + f"\t{count}\t{cc}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load_tsv(cls, path: Union[str, Path]) -> "KneserNeyModel":
        text = Path(path).read_text(encoding="utf-8")
        order = None
        smoothing = SMOOTHING_MKN
        pad = True
        fingerprint = ""
        total_tokens = 0
        level_counts: Dict[int, Counter] = {}
        for line in text.splitlines():
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if parts[0] == "order":
                order = int(parts[1])
            elif parts[0] == "smoothing":
                smoothing = parts[1]
            elif parts[0] == "pad":
                pad = bool(int(parts[1]))
            elif parts[0] == "config_fingerprint":
                fingerprint = parts[1] if len(parts) > 1 else ""
            elif parts[0] == "total_tokens":
                total_tokens = int(parts[1])
            elif parts[0] == "discounts":
                continue  # recomputed from counts
            else:
                k = int(parts[0])
                gram = tuple(parts[1:1 + k])
                count = int(parts[1 + k])
                level_counts.setdefault(k, Counter())[gram] = count
        if order is None:
            raise DomainError(f"{path}: missing order header")
        counts = NGramCounts.__new__(NGramCounts)
        counts.order = order
        counts.pad = pad
        counts.counts = {k: level_counts.get(k, Counter()) for k in range(1, order + 1)}
        vocab = {g[0] for g in counts.counts[1]} - {BOS, EOS}
        counts.vocabulary = frozenset(vocab)
        counts.total_tokens = total_tokens
        counts.continuation_counts = {k: Counter() for k in range(1, order)}
        for k in range(1, order):
            for gram in counts.counts[k + 1]:
                counts.continuation_counts[k][gram[1:]] += 1
        return cls(counts, smoothing=smoothing, config_fingerprint=fingerprint)


# -- training entry points -------------------------------------------------

def train(corpus: Sequence[TokenSequence], order: int,
          smoothing: str = SMOOTHING_MKN, config_fingerprint: str = "") -> KneserNeyModel:
    """Train a model of the given order (1..10) on the whole corpus."""
    if not 1 <= order <= 10:
        raise DomainError(f"order must be in 1..10, got {order}")
    sequences = [seq.tokens for seq in corpus if seq.tokens]
    if not sequences:
        raise EmptyCorpus("cannot train on an empty corpus")
    pad = smoothing != SMOOTHING_NONE
    counts = NGramCounts(order, sequences, pad=pad)
    return KneserNeyModel(counts, smoothing=smoothing, config_fingerprint=config_fingerprint)


def train_excluding(corpus: Sequence[TokenSequence], order: int,
                    exclude_repo: Optional[str] = None,
                    exclude_issue: Optional[Tuple[str, int]] = None,
                    smoothing: str = SMOOTHING_MKN) -> KneserNeyModel:
    """Train on the corpus minus a repository or a single issue."""
    kept = [
        seq for seq in corpus
        if not (exclude_repo is not None and seq.source[0] == exclude_repo)
        and not (exclude_issue is not None and seq.source == tuple(exclude_issue))
    ]
    return train(kept, order, smoothing=smoothing)


class KneserNeyLanguageModel(BaseEstimator):
    """Estimator-style wrapper: fit on a corpus, then score sequences."""

    def __init__(self, order: int = 3, smoothing: str = SMOOTHING_MKN,
                 mode: str = "conditional_ngram"):
        self.order = order
        self.smoothing = smoothing
        self.mode = mode

    def fit(self, X: Sequence[TokenSequence], y=None) -> "KneserNeyLanguageModel":
        self.model_ = train(X, self.order, smoothing=self.smoothing)
        return self

    def score_samples(self, X: Sequence[TokenSequence]) -> List[float]:
        return [
            self.model_.sequence_cross_entropy(seq, mode=self.mode).cross_entropy_bits_per_token
            for seq in X
        ]

    def prob(self, word: str, context: Sequence[str] = ()) -> float:
        return self.model_.prob(word, context)

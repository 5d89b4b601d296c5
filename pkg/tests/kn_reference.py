"""Brute-force reference for modified Kneser-Ney probabilities.

Written independently of the package implementation: everything is
recomputed from the raw corpus with plain dictionaries on every query,
with no interning, caching, or precomputed context tables. Only suitable
for tiny corpora; used as the oracle in tests.
"""
from __future__ import annotations

BOS = "<s>"
EOS = "</s>"


def pad(sentence, order):
    return [BOS] * (order - 1) + list(sentence) + [EOS]


def raw_counts(corpus, order, k):
    """Occurrence counts of all k-grams over order-padded sentences."""
    counts = {}
    for sentence in corpus:
        padded = pad(sentence, order)
        for i in range(len(padded) - k + 1):
            gram = tuple(padded[i:i + k])
            counts[gram] = counts.get(gram, 0) + 1
    return counts


def continuation_counts(corpus, order, k):
    """Adjusted counts: number of distinct left extensions of each k-gram."""
    higher = raw_counts(corpus, order, k + 1)
    cont = {}
    for gram in higher:
        suffix = gram[1:]
        cont.setdefault(suffix, set()).add(gram[0])
    return {g: len(lefts) for g, lefts in cont.items()}


def counts_of_counts(corpus, order, k):
    """(n1..n4) over k-grams not ending in the begin marker."""
    buckets = [0, 0, 0, 0]
    for gram, c in raw_counts(corpus, order, k).items():
        if gram[-1] == BOS:
            continue
        if 1 <= c <= 4:
            buckets[c - 1] += 1
    return tuple(buckets)


def discounts(corpus, order, k):
    n1, n2, n3, n4 = counts_of_counts(corpus, order, k)
    if 0 in (n1, n2, n3, n4):
        return (0.5, 1.0, 1.5)
    y = n1 / (n1 + 2.0 * n2)
    d1 = 1.0 - 2.0 * y * n2 / n1
    d2 = 2.0 - 3.0 * y * n3 / n2
    d3 = 3.0 - 4.0 * y * n4 / n3
    return (min(max(d1, 0.0), 1.0), min(max(d2, 0.0), 2.0), min(max(d3, 0.0), 3.0))


def predictable_symbols(corpus):
    vocab = set()
    for sentence in corpus:
        vocab.update(sentence)
    vocab.discard(BOS)
    vocab.discard(EOS)
    return sorted(vocab) + [EOS]


def prob(corpus, order, word, context):
    """Interpolated modified-KN probability, evaluated term by term."""
    context = tuple(context)
    if len(context) > order - 1:
        context = context[-(order - 1):]
    return _level_prob(corpus, order, word, context, len(context) + 1)


def _event_counts(corpus, order, level):
    if level == order:
        return raw_counts(corpus, order, level)
    return continuation_counts(corpus, order, level)


def _level_prob(corpus, order, word, context, level):
    symbols = predictable_symbols(corpus)
    if level == 1:
        if order == 1:
            counts = raw_counts(corpus, order, 1)
            total = sum(c for g, c in counts.items() if g[0] != BOS)
            d1, d2, d3 = discounts(corpus, order, 1)
            held_back = 0.0
            for g, c in counts.items():
                if g[0] == BOS:
                    continue
                held_back += d1 if c == 1 else d2 if c == 2 else d3
            c = counts.get((word,), 0)
            d = 0.0 if c == 0 else (d1 if c == 1 else d2 if c == 2 else d3)
            return max(c - d, 0.0) / total + (held_back / total) * (1.0 / len(symbols))
        cont = continuation_counts(corpus, order, 1)
        total = sum(c for g, c in cont.items() if g[0] != BOS)
        return cont.get((word,), 0) / total

    events = _event_counts(corpus, order, level)
    extensions = {w: events.get(context + (w,), 0) for w in symbols}
    denom = sum(extensions.values())
    if denom == 0:
        return _level_prob(corpus, order, word, context[1:], level - 1)
    d1, d2, d3 = discounts(corpus, order, level)
    held_back = 0.0
    for c in extensions.values():
        if c == 1:
            held_back += d1
        elif c == 2:
            held_back += d2
        elif c >= 3:
            held_back += d3
    c = extensions.get(word, 0)
    d = 0.0 if c == 0 else (d1 if c == 1 else d2 if c == 2 else d3)
    lower = _level_prob(corpus, order, word, context[1:], level - 1)
    return max(c - d, 0.0) / denom + (held_back / denom) * lower

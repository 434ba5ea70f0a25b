"""Interpolated Kneser-Ney n-gram models over subword units.

The model supplies the perplexity signal used by the OCR-noise and
web-quality gates. Training is count-then-estimate: raw counts at the top
order, continuation counts below (except for grams starting with the
sentence-start marker), one absolute discount per order estimated from
count-of-counts as D = n1 / (n1 + 2*n2), and a uniform floor at the unigram
level so every vocabulary token keeps strictly positive mass whenever the
unigram discount is nonzero.

Order 1 is a degenerate pure-MLE unigram model without boundary markers, so
a single-token corpus yields P(token) = 1 and perplexity exactly 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Optional

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"

MAX_ORDER = 6


@dataclass(frozen=True)
class PerplexityScore:
    value: float
    token_count: int


@dataclass(frozen=True)
class SubwordSegmenter:
    """Deterministic text -> subword unit mapping.

    Two modes: a whitespace-lowercase fallback, and a tokenizer-backed mode
    wrapping any callable that returns token strings (byte fallback in the
    toolkit tokenizer guarantees no empty segmentation there either).
    """

    mode: str
    encode_fn: Optional[Callable] = None

    def segment(self, text: str) -> list:
        if self.mode == "whitespace_lowercase":
            units = text.lower().split()
            if not units and text:
                units = [text]
            return units
        units = list(self.encode_fn(text))
        if not units and text:
            units = [text]
        return units

    @classmethod
    def whitespace_lowercase(cls) -> "SubwordSegmenter":
        return cls(mode="whitespace_lowercase")

    @classmethod
    def from_tokenizer(cls, model) -> "SubwordSegmenter":
        from .tokenizer import encode, token_strings
        return cls(mode="tokenizer",
                   encode_fn=lambda text: token_strings(model, encode(model, text)))


def _sequences(texts: Iterable[str], segmenter: SubwordSegmenter):
    for text in texts:
        for line in text.split("\n"):
            units = segmenter.segment(line)
            if units:
                yield units


class KNModel:
    """Immutable interpolated Kneser-Ney model with collapsed tables.

    probs[k] maps k-gram tuples to already-interpolated probabilities;
    backoffs[k] maps (k-1)-gram contexts to their backoff weights. Lookup
    follows the usual walk: longest matching gram wins, otherwise multiply
    the context's backoff weight and recurse one order down.
    """

    def __init__(self, order, vocab, discounts, probs, backoffs,
                 segmenter: SubwordSegmenter):
        self.order = order
        self.vocab = frozenset(vocab)
        self.discounts = tuple(discounts)  # discounts[k-1] is order k
        self.probs = probs                 # probs[k] for k in 1..order
        self.backoffs = backoffs           # backoffs[k] for k in 2..order
        self.segmenter = segmenter

    def prob(self, token: str, context: tuple = ()) -> float:
        """P(token | context) with the context truncated to order-1 units."""
        if token not in self.vocab and token != UNK:
            token = UNK
        if self.order > 1:
            context = tuple(context)[-(self.order - 1):]
        else:
            context = ()
        return self._prob(token, context, len(context) + 1)

    def _prob(self, token, context, k):
        if k == 1:
            table = self.probs[1]
            return table.get(token, table.get(UNK, 0.0))
        gram = context + (token,)
        hit = self.probs[k].get(gram)
        if hit is not None:
            return hit
        weight = self.backoffs.get(k, {}).get(context, 1.0)
        return weight * self._prob(token, context[1:], k - 1)

    def logprob_sequence(self, units) -> float:
        """Sum of natural-log probabilities over one marker-wrapped sequence."""
        if self.order == 1:
            return sum(math.log(self.prob(u)) for u in units)
        total = 0.0
        context = (BOS,) * (self.order - 1)
        for unit in list(units) + [EOS]:
            total += math.log(self.prob(unit, context))
            context = context[1:] + ((unit if unit in self.vocab else UNK),)
        return total

    def context_distribution(self, context: tuple) -> dict:
        """P(w | context) for every vocabulary token plus UNK (brute force)."""
        out = {}
        for token in sorted(self.vocab | {UNK}):
            out[token] = self.prob(token, context)
        return out


def train_kn(corpus: Iterable[str], order: int = 5,
             segmenter: Optional[SubwordSegmenter] = None) -> KNModel:
    if not 1 <= order <= MAX_ORDER:
        raise ValueError("order must be within 1..%d, got %r" % (MAX_ORDER, order))
    segmenter = segmenter or SubwordSegmenter.whitespace_lowercase()
    sequences = list(_sequences(corpus, segmenter))
    if not sequences:
        raise ValueError("empty corpus")

    if order == 1:
        counts = {}
        for units in sequences:
            for unit in units:
                counts[unit] = counts.get(unit, 0) + 1
        total = sum(counts.values())
        probs = {1: {unit: c / total for unit, c in counts.items()}}
        return KNModel(1, set(counts), (0.0,), probs, {}, segmenter)

    # raw[k]: all k-gram window counts over marker-padded sequences
    raw = {k: {} for k in range(1, order + 1)}
    for units in sequences:
        padded = [BOS] * (order - 1) + units + [EOS]
        for k in range(1, order + 1):
            table = raw[k]
            for i in range(len(padded) - k + 1):
                gram = tuple(padded[i:i + k])
                table[gram] = table.get(gram, 0) + 1

    # counts[k]: the table used at order k -- continuation counts below the
    # top order, raw counts for grams anchored at the start marker. No gram
    # ever ends with the start marker (it is context only, never predicted).
    counts = {order: {g: c for g, c in raw[order].items() if g[-1] != BOS}}
    for k in range(order - 1, 0, -1):
        table = {}
        for gram in raw[k + 1]:
            suffix = gram[1:]
            if suffix[0] == BOS or suffix[-1] == BOS:
                continue
            table[suffix] = table.get(suffix, 0) + 1
        for gram, count in raw[k].items():
            if gram[0] == BOS and gram[-1] != BOS:
                table[gram] = count
        counts[k] = table

    discounts = []
    for k in range(1, order + 1):
        n1 = sum(1 for c in counts[k].values() if c == 1)
        n2 = sum(1 for c in counts[k].values() if c == 2)
        discounts.append(n1 / (n1 + 2 * n2) if (n1 + 2 * n2) else 0.0)

    unigrams = {gram[0]: c for gram, c in counts[1].items()}
    vocab = set(unigrams)
    total = sum(unigrams.values())
    d1 = discounts[0]
    types = len(unigrams)
    floor = d1 * types / total / (len(vocab) + 1)  # +1 covers UNK
    probs = {1: {}}
    for unit, count in unigrams.items():
        probs[1][unit] = max(count - d1, 0.0) / total + floor
    probs[1][UNK] = floor

    backoffs = {}
    model = KNModel(order, vocab, discounts, probs, backoffs, segmenter)
    for k in range(2, order + 1):
        dk = discounts[k - 1]
        context_totals = {}
        context_types = {}
        for gram, count in counts[k].items():
            head = gram[:-1]
            context_totals[head] = context_totals.get(head, 0) + count
            context_types[head] = context_types.get(head, 0) + 1
        backoffs[k] = {
            head: dk * context_types[head] / context_totals[head]
            for head in context_totals
        }
        table = {}
        for gram, count in counts[k].items():
            head, unit = gram[:-1], gram[-1]
            discounted = max(count - dk, 0.0) / context_totals[head]
            table[gram] = discounted + backoffs[k][head] * model._prob(
                unit, head[1:], k - 1)
        probs[k] = table
    return model


def perplexity(model: KNModel, text: str,
               mode: str = "document") -> PerplexityScore:
    """Perplexity of a text under the model.

    document: pools log-probabilities over all lines (token-weighted).
    mean_of_lines: arithmetic mean of per-line perplexities.
    """
    if mode not in ("document", "mean_of_lines"):
        raise ValueError("mode must be document or mean_of_lines")
    sequences = list(_sequences([text], model.segmenter))
    if not sequences:
        raise ValueError("empty text after segmentation")
    per_line = []
    for units in sequences:
        logprob = model.logprob_sequence(units)
        count = len(units) + (0 if model.order == 1 else 1)
        per_line.append((logprob, count))
    total_count = sum(c for _, c in per_line)
    if mode == "document":
        pooled = sum(lp for lp, _ in per_line)
        return PerplexityScore(math.exp(-pooled / total_count), total_count)
    mean = sum(math.exp(-lp / c) for lp, c in per_line) / len(per_line)
    return PerplexityScore(mean, total_count)


def _escape(unit: str) -> str:
    return (unit.replace("\\", "\\\\").replace(" ", "\\s")
                .replace("\t", "\\t").replace("\n", "\\n").replace("\r", "\\r"))


def _unescape(text: str) -> str:
    out = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == "\\" and i + 1 < len(text):
            nxt = text[i + 1]
            out.append({"\\": "\\", "s": " ", "t": "\t",
                        "n": "\n", "r": "\r"}.get(nxt, "\\" + nxt))
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def save_model(model: KNModel, path) -> None:
    """Sorted plain-text table of (gram, prob, backoff) with a header."""
    lines = ["kn-model v1",
             "order %d" % model.order,
             "segmenter %s" % model.segmenter.mode,
             "vocab_size %d" % len(model.vocab)]
    for k, d in enumerate(model.discounts, start=1):
        lines.append("discount %d %r" % (k, d))
    for k in range(1, model.order + 1):
        if k == 1:
            table = {(unit,): p for unit, p in model.probs[1].items()}
        else:
            table = model.probs[k]
        entries = {gram: [prob, None] for gram, prob in table.items()}
        for context, weight in model.backoffs.get(k + 1, {}).items():
            entries.setdefault(context, [None, None])[1] = weight
        lines.append("%d-grams: %d" % (k, len(entries)))
        for gram in sorted(entries):
            prob, backoff = entries[gram]
            lines.append("%s\t%s\t%s" % (
                "-inf" if prob is None else repr(prob),
                " ".join(_escape(unit) for unit in gram),
                "" if backoff is None else repr(backoff)))
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("\n".join(lines) + "\n")


def load_model(path, segmenter: Optional[SubwordSegmenter] = None) -> KNModel:
    with open(path, encoding="utf-8") as handle:
        lines = handle.read().splitlines()
    if not lines or lines[0] != "kn-model v1":
        raise ValueError("not a kn-model file: %s" % path)
    order = None
    mode = "whitespace_lowercase"
    discounts = []
    probs = {}
    backoffs = {}
    i = 1
    while i < len(lines):
        line = lines[i]
        if line.startswith("order "):
            order = int(line.split()[1])
        elif line.startswith("segmenter "):
            mode = line.split()[1]
        elif line.startswith("discount "):
            discounts.append(float(line.split()[2]))
        elif "-grams:" in line:
            k = int(line.split("-")[0])
            count = int(line.split()[1])
            table = {}
            backoff_table = {}
            for entry in lines[i + 1:i + 1 + count]:
                prob_text, gram_text, backoff_text = entry.split("\t")
                gram = tuple(_unescape(part) for part in gram_text.split(" "))
                if prob_text != "-inf":
                    table[gram] = float(prob_text)
                if backoff_text:
                    backoff_table[gram] = float(backoff_text)
            if k == 1:
                probs[1] = {gram[0]: p for gram, p in table.items()}
            else:
                probs[k] = table
            if backoff_table:
                backoffs[k + 1] = backoff_table
            i += count
        i += 1
    if order is None or 1 not in probs:
        raise ValueError("truncated kn-model file: %s" % path)
    vocab = set(probs[1]) - {UNK}
    if segmenter is None:
        if mode != "whitespace_lowercase":
            raise ValueError(
                "model was built with a %s segmenter; pass one to load_model" % mode)
        segmenter = SubwordSegmenter.whitespace_lowercase()
    return KNModel(order, vocab, tuple(discounts), probs, backoffs, segmenter)


__all__ = [
    "BOS", "EOS", "UNK", "MAX_ORDER",
    "PerplexityScore", "SubwordSegmenter", "KNModel",
    "train_kn", "perplexity", "save_model", "load_model",
]

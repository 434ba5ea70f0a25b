"""Heuristic web-quality rules: line cleanup, page drops, repetition checks.

Three rule families:
  - c4_rules: line-level terminal-punctuation cleanup plus page-level drops
    (badwords, sentence count, boilerplate markers).
  - gopher_rules: bulk statistics on words and lines.
  - repetition_filter: duplicate-line, duplicate-paragraph and top-2-gram
    character coverage.

All constants live in this module so an audit reads them in one place.
"""

import re
from typing import Iterable, Optional, Sequence

from .records import DocumentRecord, FilterDecision, drop_decision, keep_decision

# Line is kept only when it ends with one of these after trailing-space strip.
TERMINAL_PUNCT = ('.', '!', '?', '"', '”', '»')

POLICY_PHRASES = (
    "terms of use",
    "privacy policy",
    "cookie policy",
    "uses cookies",
    "use of cookies",
    "use cookies",
)

MIN_SENTENCES = 3

_SENTENCE_END_RE = re.compile(r"[.!?]+")

# Bulk-statistics bounds for gopher_rules.
WORD_COUNT_RANGE = (50, 100000)
MEAN_WORD_LENGTH_RANGE = (3.0, 10.0)
MAX_SYMBOL_RATIO = 0.1
MAX_BULLET_LINE_FRACTION = 0.9
MAX_ELLIPSIS_LINE_FRACTION = 0.3
MIN_ALPHA_WORD_FRACTION = 0.8
MIN_STOP_WORD_HITS = 2
BULLET_PREFIXES = ("•", "‣", "-", "*")
ELLIPSIS_SUFFIXES = ("...", "…")

STOP_WORDS = {
    "en": ("the", "be", "to", "of", "and", "that", "have", "with"),
    "fr": ("le", "la", "les", "de", "et", "que", "pour", "dans"),
    "de": ("der", "die", "das", "und", "von", "mit", "nicht", "auf"),
    "es": ("el", "la", "los", "de", "que", "y", "para", "con"),
    "it": ("il", "la", "di", "che", "e", "per", "con", "non"),
}

MAX_REPEATED_CHAR_FRACTION = 0.2


def c4_line_filter(text: str) -> tuple:
    """Drop lines without terminal punctuation. Returns (kept_text, n_removed)."""
    kept = []
    removed = 0
    for line in text.split("\n"):
        stripped = line.rstrip()
        if stripped and stripped.endswith(TERMINAL_PUNCT):
            kept.append(line)
        elif not stripped:
            kept.append(line)
        else:
            removed += 1
    return "\n".join(kept), removed


def _contains_badword(text: str, badwords: Sequence[str]) -> Optional[str]:
    words = set(re.findall(r"[\w'-]+", text.lower()))
    for bad in badwords:
        if bad.lower() in words:
            return bad
    return None


def c4_rules(doc: DocumentRecord,
             badwords: Sequence[str] = ()) -> FilterDecision:
    """Page-level verdict after line cleanup.

    The badword list is caller-supplied; it ships as an external file, never
    embedded here. Pass an empty sequence to skip that rule.
    """
    cleaned, removed = c4_line_filter(doc.text)
    lower = cleaned.lower()
    measurements = {"lines_removed": float(removed)}

    hit = _contains_badword(cleaned, badwords) if badwords else None
    if hit is not None:
        return drop_decision("badword", measurements,
                             "contains blocked term %r" % hit)

    n_sentences = len(_SENTENCE_END_RE.findall(cleaned))
    measurements["sentences"] = float(n_sentences)
    if n_sentences < MIN_SENTENCES:
        return drop_decision("sentence_count", measurements,
                             "%d sentences, need %d" % (n_sentences,
                                                        MIN_SENTENCES))
    if "lorem ipsum" in lower:
        return drop_decision("lorem_ipsum", measurements,
                             "placeholder text present")
    if "{" in cleaned:
        return drop_decision("curly_brace", measurements,
                             "curly brace suggests source code")
    for phrase in POLICY_PHRASES:
        if phrase in lower:
            return drop_decision("policy_phrase", measurements,
                                 "boilerplate phrase %r" % phrase)
    return keep_decision("c4", measurements)


def c4_apply(doc: DocumentRecord, badwords: Sequence[str] = ()) -> tuple:
    """(cleaned document or None, decision). The edit and verdict together."""
    decision = c4_rules(doc, badwords)
    if not decision.keep:
        return None, decision
    cleaned, _ = c4_line_filter(doc.text)
    if cleaned == doc.text:
        return doc, decision
    return doc.with_text(cleaned), decision


def _stop_word_list(language: str) -> Optional[tuple]:
    # pair tags like "fr,en" fall back to their first component
    code = language.split(",")[0].split(":")[0]
    return STOP_WORDS.get(code)


def gopher_rules(doc: DocumentRecord) -> FilterDecision:
    """Bulk-statistics verdict. First failing rule names the decision."""
    words = doc.text.split()
    n_words = len(words)
    lines = [ln for ln in doc.text.split("\n") if ln.strip()]
    n_lines = len(lines)

    mean_len = sum(len(w) for w in words) / n_words if n_words else 0.0
    hash_ratio = doc.text.count("#") / n_words if n_words else 0.0
    ellipsis_count = sum(doc.text.count(e) for e in ELLIPSIS_SUFFIXES)
    ellipsis_ratio = ellipsis_count / n_words if n_words else 0.0
    symbol_ratio = max(hash_ratio, ellipsis_ratio)
    bullet_fraction = (sum(1 for ln in lines
                           if ln.lstrip().startswith(BULLET_PREFIXES)) / n_lines
                       if n_lines else 0.0)
    ellipsis_fraction = (sum(1 for ln in lines
                             if ln.rstrip().endswith(ELLIPSIS_SUFFIXES))
                         / n_lines if n_lines else 0.0)
    alpha_fraction = (sum(1 for w in words
                          if any(ch.isalpha() for ch in w)) / n_words
                      if n_words else 0.0)
    stops = _stop_word_list(doc.language)
    if stops is None:
        stop_hits = MIN_STOP_WORD_HITS  # no list for this language: rule idle
    else:
        lower_words = set(w.lower().strip(".,;:!?\"'()") for w in words)
        stop_hits = sum(1 for s in stops if s in lower_words)

    measurements = {
        "word_count": float(n_words),
        "mean_word_length": mean_len,
        "symbol_ratio": symbol_ratio,
        "bullet_fraction": bullet_fraction,
        "ellipsis_fraction": ellipsis_fraction,
        "alpha_word_fraction": alpha_fraction,
        "stop_word_hits": float(stop_hits),
    }

    lo, hi = WORD_COUNT_RANGE
    if not lo <= n_words <= hi:
        return drop_decision("word_count", measurements,
                             "%d words outside [%d, %d]" % (n_words, lo, hi))
    mlo, mhi = MEAN_WORD_LENGTH_RANGE
    if not mlo <= mean_len <= mhi:
        return drop_decision("mean_word_length", measurements,
                             "mean word length %.2f outside [%g, %g]"
                             % (mean_len, mlo, mhi))
    if symbol_ratio > MAX_SYMBOL_RATIO:
        return drop_decision("symbol_ratio", measurements,
                             "symbol ratio %.3f over %g" % (symbol_ratio,
                                                            MAX_SYMBOL_RATIO))
    if bullet_fraction > MAX_BULLET_LINE_FRACTION:
        return drop_decision("bullet_fraction", measurements,
                             "bullet fraction %.3f over %g"
                             % (bullet_fraction, MAX_BULLET_LINE_FRACTION))
    if ellipsis_fraction > MAX_ELLIPSIS_LINE_FRACTION:
        return drop_decision("ellipsis_fraction", measurements,
                             "ellipsis fraction %.3f over %g"
                             % (ellipsis_fraction,
                                MAX_ELLIPSIS_LINE_FRACTION))
    if alpha_fraction < MIN_ALPHA_WORD_FRACTION:
        return drop_decision("alpha_fraction", measurements,
                             "alpha word fraction %.3f under %g"
                             % (alpha_fraction, MIN_ALPHA_WORD_FRACTION))
    if stop_hits < MIN_STOP_WORD_HITS:
        return drop_decision("stop_words", measurements,
                             "%d distinct stop words, need %d"
                             % (stop_hits, MIN_STOP_WORD_HITS))
    return keep_decision("gopher", measurements)


def _duplicate_char_fraction(units: Iterable[str]) -> float:
    """Characters in repeat occurrences over total characters.

    For a unit occurring k times with length L, (k - 1) * L characters count
    as duplicated, so ten copies of one line give fraction 0.9.
    """
    counts = {}
    total = 0
    for unit in units:
        counts[unit] = counts.get(unit, 0) + 1
        total += len(unit)
    if total == 0:
        return 0.0
    duplicated = sum((k - 1) * len(u) for u, k in counts.items() if k > 1)
    return duplicated / total


def _top_2gram_fraction(words: Sequence[str]) -> float:
    if len(words) < 2:
        return 0.0
    counts = {}
    for a, b in zip(words, words[1:]):
        counts[(a, b)] = counts.get((a, b), 0) + 1
    (a, b), top = max(counts.items(), key=lambda kv: kv[1])
    total = sum(len(w) for w in words)
    return min(1.0, top * (len(a) + len(b)) / total)


def repetition_filter(doc: DocumentRecord) -> FilterDecision:
    """Drop when any character-coverage repetition statistic passes 0.2."""
    lines = [ln.strip() for ln in doc.text.split("\n") if ln.strip()]
    paragraphs = [p.strip() for p in re.split(r"\n{2,}", doc.text)
                  if p.strip()]
    words = doc.text.split()

    line_fraction = _duplicate_char_fraction(lines)
    paragraph_fraction = _duplicate_char_fraction(paragraphs)
    gram_fraction = _top_2gram_fraction(words)
    measurements = {
        "dup_line_fraction": line_fraction,
        "dup_paragraph_fraction": paragraph_fraction,
        "top_2gram_fraction": gram_fraction,
    }
    if line_fraction > MAX_REPEATED_CHAR_FRACTION:
        return drop_decision("dup_line_fraction", measurements,
                             "duplicate lines cover %.3f of characters"
                             % line_fraction)
    if paragraph_fraction > MAX_REPEATED_CHAR_FRACTION:
        return drop_decision("dup_paragraph_fraction", measurements,
                             "duplicate paragraphs cover %.3f of characters"
                             % paragraph_fraction)
    if gram_fraction > MAX_REPEATED_CHAR_FRACTION:
        return drop_decision("top_2gram_fraction", measurements,
                             "top 2-gram covers %.3f of characters"
                             % gram_fraction)
    return keep_decision("repetition", measurements)

"""Bilingual passage pairs: detection, splitting, and prompt-style rendering.

Parallel corpora arrive in two shapes. Some records carry both passages
pre-tagged in their extra fields; others hold one string with the source
passage immediately followed by its translation and no marker in between.
This module recovers an ordered (source, target) pair from either shape and
renders pairs into flat training text through a fixed pool of templates that
can be inverted byte for byte.
"""

from __future__ import annotations

import json
import math
import random
import re
from collections import Counter
from dataclasses import dataclass
from importlib.resources import files
from typing import Callable, Dict, List, Optional, Tuple

from .records import DocumentRecord, parse_language_tag

LANGUAGE_NAMES = {
    "en": "English",
    "fr": "French",
    "de": "German",
    "es": "Spanish",
    "it": "Italian",
}

PREFIX_STYLES = ("language-name", "iso-code-bracket", "none")

SEPARATORS = ("\n", "\n\n", "\n###\n", "\t")


@dataclass(frozen=True)
class AlignedPair:
    """An ordered translation pair: text_1 precedes text_2 in training text."""

    text_1: str
    text_2: str
    lang_1: str
    lang_2: str

    def __post_init__(self):
        for name in ("lang_1", "lang_2"):
            code = getattr(self, name)
            if code not in LANGUAGE_NAMES:
                raise ValueError("unknown language code %r" % code)
        if self.lang_1 == self.lang_2:
            raise ValueError("pair languages must differ, both are %r" % self.lang_1)
        if not self.text_1 or not self.text_2:
            raise ValueError("pair passages must be non-empty")


@dataclass(frozen=True)
class PairTemplate:
    """One way of flattening a pair: a prefix style plus a separator."""

    id: int
    prefix_style: str
    separator: str

    def __post_init__(self):
        if self.prefix_style not in PREFIX_STYLES:
            raise ValueError("unknown prefix style %r" % self.prefix_style)
        if self.separator not in SEPARATORS:
            raise ValueError("unknown separator %r" % self.separator)

    def prefix_for(self, code: str) -> str:
        if self.prefix_style == "language-name":
            return LANGUAGE_NAMES[code] + ": "
        if self.prefix_style == "iso-code-bracket":
            return "[" + code + "] "
        return ""


# The full cross product, in a frozen order so ids are stable.
TEMPLATE_POOL = tuple(
    PairTemplate(id=i, prefix_style=style, separator=sep)
    for i, (style, sep) in enumerate(
        (style, sep) for style in PREFIX_STYLES for sep in SEPARATORS
    )
)


def get_template(template_id: int) -> PairTemplate:
    if not 0 <= template_id < len(TEMPLATE_POOL):
        raise ValueError(
            "template id %r outside 0..%d" % (template_id, len(TEMPLATE_POOL) - 1))
    return TEMPLATE_POOL[template_id]


def choose_template(seed: int) -> PairTemplate:
    """Pick a pool template from a seed; uniform across a stream of seeds."""
    return TEMPLATE_POOL[random.Random(seed).randrange(len(TEMPLATE_POOL))]


def render_pair(pair: AlignedPair, template: Optional[PairTemplate] = None,
                seed: int = 0) -> str:
    """Flatten a pair to training text. Source always comes before target.

    When no template is given one is drawn from the pool using the seed, so
    repeated calls with the same arguments give the same string. Raises if
    the separator-plus-prefix boundary also occurs inside the first passage,
    because the output could then not be split back unambiguously.
    """
    if template is None:
        template = choose_template(seed)
    first = template.prefix_for(pair.lang_1)
    boundary = template.separator + template.prefix_for(pair.lang_2)
    rendered = first + pair.text_1 + boundary + pair.text_2
    if rendered.find(boundary) != len(first) + len(pair.text_1):
        raise ValueError(
            "boundary %r collides with the first passage; "
            "pick a template with a different separator" % boundary)
    return rendered


def parse_rendered(text: str, template: PairTemplate, lang_1: str,
                   lang_2: str) -> AlignedPair:
    """Invert render_pair: recover both passages byte for byte."""
    first = template.prefix_for(lang_1)
    if not text.startswith(first):
        raise ValueError("text does not start with prefix %r" % first)
    body = text[len(first):]
    boundary = template.separator + template.prefix_for(lang_2)
    at = body.find(boundary)
    if at < 0:
        raise ValueError("boundary %r not found" % boundary)
    return AlignedPair(body[:at], body[at + len(boundary):], lang_1, lang_2)


def _trigrams(text: str) -> List[str]:
    squeezed = re.sub(r"\s+", " ", text.lower()).strip()
    padded = " " + squeezed + " "
    return [padded[i:i + 3] for i in range(len(padded) - 2)]


class TrigramClassifier:
    """Character-trigram scorer over the supported languages.

    Scores are mean log probabilities per trigram under an add-one smoothed
    model, so they are comparable across passages of different lengths.
    """

    def __init__(self, samples: Dict[str, str]):
        if not samples:
            raise ValueError("no training samples")
        tables = {code: Counter(_trigrams(text)) for code, text in samples.items()}
        vocab = set()
        for counts in tables.values():
            vocab.update(counts)
        smoothing_bins = len(vocab) + 1
        self._logp: Dict[str, Dict[str, float]] = {}
        self._unseen: Dict[str, float] = {}
        for code, counts in tables.items():
            denom = sum(counts.values()) + smoothing_bins
            self._logp[code] = {
                tri: math.log((n + 1) / denom) for tri, n in counts.items()
            }
            self._unseen[code] = math.log(1.0 / denom)

    def scores(self, text: str) -> Dict[str, float]:
        tris = _trigrams(text)
        if not tris:
            return {code: self._unseen[code] for code in self._logp}
        out = {}
        for code, table in self._logp.items():
            unseen = self._unseen[code]
            out[code] = sum(table.get(tri, unseen) for tri in tris) / len(tris)
        return out

    def __call__(self, text: str) -> Dict[str, float]:
        return self.scores(text)

    def best(self, text: str) -> str:
        ranked = sorted(self.scores(text).items(), key=lambda kv: (-kv[1], kv[0]))
        return ranked[0][0]


_default_classifier: Optional[TrigramClassifier] = None


def default_classifier() -> TrigramClassifier:
    """The classifier trained on the bundled per-language sample texts."""
    global _default_classifier
    if _default_classifier is None:
        samples = {}
        for code in LANGUAGE_NAMES:
            path = files("corpuscraft") / "data" / ("langseed_%s.txt" % code)
            samples[code] = path.read_text(encoding="utf-8")
        _default_classifier = TrigramClassifier(samples)
    return _default_classifier


@dataclass(frozen=True)
class SplitCandidate:
    """Diagnostics for one considered split point."""

    index: int
    lang_left: str
    lang_right: str
    margin: float
    scores_left: Dict[str, float]
    scores_right: Dict[str, float]


class SplitError(ValueError):
    """No confident bilingual split; carries every candidate considered."""

    def __init__(self, message: str, candidates: List[SplitCandidate]):
        super().__init__(message)
        self.candidates = candidates


# A split may only happen after sentence-final punctuation (plus any closing
# quotes or brackets) followed by whitespace, or at a newline.
_BOUNDARY_RE = re.compile(r"[.!?…]+[\"'»”)\]]*[ \t]+|\n+")


def _candidate_indices(text: str) -> List[int]:
    seen = []
    for match in _BOUNDARY_RE.finditer(text):
        at = match.end()
        if 0 < at < len(text):
            seen.append(at)
    return seen


def split_bilingual(text: str,
                    classifier: Optional[Callable[[str], Dict[str, float]]] = None,
                    min_margin: float = 0.05) -> AlignedPair:
    """Split source-then-translation text at the language transition.

    Every sentence boundary is scored on both sides; the winner is the
    boundary where the two halves are most confidently in two different
    languages (largest summed score margin). Raises SplitError with all
    candidate diagnostics when no boundary shows a language transition.
    """
    if classifier is None:
        classifier = default_classifier()
    candidates: List[SplitCandidate] = []
    best: Optional[Tuple[float, int, str, str]] = None
    for at in _candidate_indices(text):
        left = text[:at].strip()
        right = text[at:].strip()
        if not left or not right:
            continue
        scores_left = classifier(left)
        scores_right = classifier(right)
        lang_left = max(sorted(scores_left), key=lambda c: scores_left[c])
        lang_right = max(sorted(scores_right), key=lambda c: scores_right[c])
        margin = 0.0
        if lang_left != lang_right:
            margin = ((scores_left[lang_left] - scores_left[lang_right])
                      + (scores_right[lang_right] - scores_right[lang_left]))
        candidates.append(SplitCandidate(
            at, lang_left, lang_right, margin, scores_left, scores_right))
        if lang_left != lang_right and margin >= min_margin:
            key = (margin, -at, lang_left, lang_right)
            if best is None or key > (best[0], -best[1], best[2], best[3]):
                best = (margin, at, lang_left, lang_right)
    if best is None:
        raise SplitError(
            "no language transition found across %d candidate boundaries"
            % len(candidates), candidates)
    margin, at, lang_left, lang_right = best
    return AlignedPair(text[:at].strip(), text[at:].strip(), lang_left, lang_right)


def pair_from_record(doc: DocumentRecord) -> Optional[AlignedPair]:
    """Recover a pre-tagged pair from a record's extra fields.

    Two on-disk conventions are supported as-is rather than unified: numbered
    keys (text_1/text_2 with lang_1/lang_2) and per-language keys (text_fr,
    text_en, ...). Returns None when the record carries neither.
    """
    extra = doc.extra_fields()
    if {"text_1", "text_2", "lang_1", "lang_2"} <= set(extra):
        return AlignedPair(extra["text_1"], extra["text_2"],
                           extra["lang_1"], extra["lang_2"])
    coded = {k[len("text_"):]: v for k, v in extra.items()
             if re.fullmatch(r"text_[a-z]{2}", k)}
    if len(coded) == 2:
        if doc.language.kind == "pair":
            first, second = doc.language.pair
        else:
            first, second = sorted(coded)
        if {first, second} != set(coded):
            raise ValueError(
                "record language %s does not match extra text keys %s"
                % (doc.language, sorted(coded)))
        return AlignedPair(coded[first], coded[second], first, second)
    return None


def record_for_pair(pair: AlignedPair, source: str, doc_id: str,
                    convention: Optional[str] = None) -> DocumentRecord:
    """Store a pair back into a record under one of the two conventions.

    The record language is the ordered pair tag and the text payload is the
    plain newline concatenation; the extra fields keep the exact halves.
    """
    if convention is None:
        convention = "language-keys" if source == "CroissantAligned" else "numbered-keys"
    if convention == "language-keys":
        extra = {"text_" + pair.lang_1: pair.text_1,
                 "text_" + pair.lang_2: pair.text_2}
    elif convention == "numbered-keys":
        extra = {"text_1": pair.text_1, "text_2": pair.text_2,
                 "lang_1": pair.lang_1, "lang_2": pair.lang_2}
    else:
        raise ValueError("unknown extra-field convention %r" % convention)
    return DocumentRecord(
        text=pair.text_1 + "\n" + pair.text_2,
        language=parse_language_tag(pair.lang_1 + "," + pair.lang_2),
        source=source,
        id=doc_id,
        extra=json.dumps(extra, ensure_ascii=False, separators=(", ", ": ")),
    )

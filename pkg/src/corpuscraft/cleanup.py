"""Per-source cleanup rules.

clean_source_specific dispatches on the record's source and returns either a
cleaned DocumentRecord or a FilterDecision dropping it. Unknown sources pass
through unchanged. Rules never grow the text except through whitespace
normalization.
"""

import re
import unicodedata
from dataclasses import dataclass
from typing import Sequence, Union

from .records import DocumentRecord, FilterDecision, drop_decision

CleanResult = Union[DocumentRecord, FilterDecision]

# public-domain cutoffs, in years since the author's death
PUBLIC_DOMAIN_YEARS = 70
PUBLIC_DOMAIN_YEARS_FR = 80
REFERENCE_YEAR = 2024

MIN_THESIS_WORDS = 1000
MIN_THESIS_CHARS = 10000
# a page is junk when this fraction of its characters are control codes
MAX_CONTROL_CHAR_FRACTION = 0.05

_CID_RE = re.compile(r"[ \t]*\(cid:\d+\)[ \t]*")
_URL_LINE_RE = re.compile(r"^\s*(?:source\s*:\s*)?https?://\S+\s*$",
                          re.IGNORECASE)
_VIEWS_LINE_RE = re.compile(r"^\s*\(?\s*\d[\d\s.,]*\s*vues?\s*\)?\s*\.?\s*$",
                            re.IGNORECASE)
_GUTENBERG_START_RE = re.compile(
    r"^\s*\*{3}\s*START OF (?:THE|THIS) PROJECT GUTENBERG.*$",
    re.IGNORECASE | re.MULTILINE)
_GUTENBERG_END_RE = re.compile(
    r"^\s*\*{3}\s*END OF (?:THE|THIS) PROJECT GUTENBERG.*$",
    re.IGNORECASE | re.MULTILINE)
_BRACKET_NOTE_RE = re.compile(r"\[[^\][\n]{0,40}\]")
_CREDIT_RE = re.compile(
    r"subtitle[sd]?\s+by|sous-titr|amara\.org", re.IGNORECASE)
_IRC_CHANNEL_LANG_RE = re.compile(r"-([a-z]{2})$")


def _is_emoji(ch: str) -> bool:
    cp = ord(ch)
    return (0x1F000 <= cp <= 0x1FAFF or 0x2600 <= cp <= 0x27BF
            or cp in (0xFE0F, 0x200D) or 0x1F1E6 <= cp <= 0x1F1FF)


def _squeeze_spaces(line: str) -> str:
    return re.sub(r" {2,}", " ", line).rstrip()


def _clean_discours(doc: DocumentRecord) -> CleanResult:
    kept = [line for line in doc.text.split("\n")
            if not (_URL_LINE_RE.match(line) or _VIEWS_LINE_RE.match(line))]
    text = "\n".join(kept)
    return doc if text == doc.text else doc.with_text(text)


def _clean_eurovoc(doc: DocumentRecord) -> CleanResult:
    lines = []
    for line in doc.text.split("\n"):
        if "(cid:" in line:
            line = _squeeze_spaces(_CID_RE.sub(" ", line)).strip()
        lines.append(line)
    text = "\n".join(lines)
    return doc if text == doc.text else doc.with_text(text)


def _clean_gutenberg(doc: DocumentRecord) -> CleanResult:
    extra = doc.extra_fields()
    death_year = extra.get("author_death_year")
    if death_year is None:
        return drop_decision("author_death_year", {},
                             "no author death year recorded")
    is_french = doc.language.startswith("fr")
    cutoff = PUBLIC_DOMAIN_YEARS_FR if is_french else PUBLIC_DOMAIN_YEARS
    age = REFERENCE_YEAR - int(death_year)
    if age <= cutoff:
        return drop_decision(
            "public_domain", {"years_since_death": float(age)},
            "author died %d years ago, need more than %d" % (age, cutoff))
    text = doc.text
    start = _GUTENBERG_START_RE.search(text)
    if start:
        text = text[start.end():]
    end = _GUTENBERG_END_RE.search(text)
    if end:
        text = text[:end.start()]
    text = text.strip("\n")
    return doc if text == doc.text else doc.with_text(text)


def _clean_mathpile(doc: DocumentRecord) -> CleanResult:
    extra = doc.extra_fields()
    if "question" not in extra or "answers" not in extra:
        return doc
    # question body runs straight into the first answer; blank lines only
    # separate the answers from each other
    text = extra["question"]["Body"] + "\n\n".join(
        [answer["Body"] for answer in extra["answers"]]
    )
    return doc.with_text(text)


def _is_control(ch: str) -> bool:
    return unicodedata.category(ch) == "Cc" and ch not in "\n\t\r\f"


def _looks_like_hal_page(page: str) -> bool:
    return ("HAL Id:" in page or "archives-ouvertes" in page
            or "HAL is a multi-disciplinary open access" in page
            or "https://theses.hal.science" in page)


def _control_fraction(page: str) -> float:
    if not page:
        return 0.0
    return sum(1 for ch in page if _is_control(ch)) / len(page)


def _clean_theses(doc: DocumentRecord) -> CleanResult:
    pages = doc.text.split("\x0c")
    pages = [p for p in pages
             if not _looks_like_hal_page(p)
             and _control_fraction(p) <= MAX_CONTROL_CHAR_FRACTION]
    text = "\x0c".join(pages)
    seen = set()
    kept = []
    for line in text.split("\n"):
        key = line.strip()
        if key and key in seen:
            continue
        if key:
            seen.add(key)
        kept.append(line)
    text = "\n".join(kept)
    n_words = len(text.split())
    n_chars = len(text)
    if n_words < MIN_THESIS_WORDS or n_chars < MIN_THESIS_CHARS:
        return drop_decision(
            "thesis_length",
            {"word_count": float(n_words), "char_count": float(n_chars)},
            "%d words / %d chars under %d words / %d chars"
            % (n_words, n_chars, MIN_THESIS_WORDS, MIN_THESIS_CHARS))
    return doc if text == doc.text else doc.with_text(text)


TARGET_LANGUAGES = ("en", "fr", "de", "es", "it")


def _clean_pile(doc: DocumentRecord) -> CleanResult:
    extra = doc.extra_fields()
    channel = extra.get("channel")
    if channel:
        m = _IRC_CHANNEL_LANG_RE.search(channel)
        if m and m.group(1) not in TARGET_LANGUAGES:
            return drop_decision("channel_language", {},
                                 "channel %s is not in a target language"
                                 % channel)
    detected = extra.get("detected_language", doc.language)
    if detected.split(",")[0] not in TARGET_LANGUAGES:
        return drop_decision("language", {},
                             "detected language %r is not a target" % detected)
    return doc


def _clean_youtube(doc: DocumentRecord) -> CleanResult:
    lines = []
    for line in doc.text.split("\n"):
        line = _BRACKET_NOTE_RE.sub("", line)
        line = "".join(ch for ch in line if not _is_emoji(ch))
        lines.append(_squeeze_spaces(line).strip())
    while lines and (not lines[-1].strip()
                     or _CREDIT_RE.search(lines[-1])):
        lines.pop()
    text = "\n".join(lines)
    return doc if text == doc.text else doc.with_text(text)


_CLEANERS = {
    "DiscoursPublics": _clean_discours,
    "Eurovoc": _clean_eurovoc,
    "Gutenberg": _clean_gutenberg,
    "MathPile": _clean_mathpile,
    "Pile": _clean_pile,
    "Theses": _clean_theses,
    "YouTube": _clean_youtube,
}


def clean_source_specific(doc: DocumentRecord) -> CleanResult:
    """Apply the rule bundle for the record's source, if one exists."""
    cleaner = _CLEANERS.get(doc.source)
    if cleaner is None:
        return doc
    return cleaner(doc)


def clean_stream(docs: Sequence[DocumentRecord]) -> tuple:
    """Split a batch into (cleaned records, drop decisions with their docs)."""
    kept = []
    dropped = []
    for doc in docs:
        result = clean_source_specific(doc)
        if isinstance(result, FilterDecision):
            dropped.append((doc, result))
        else:
            kept.append(result)
    return kept, dropped

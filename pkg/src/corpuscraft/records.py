"""Canonical document records, language tags, and streaming JSONL I/O.

Every pipeline stage shares the same record shape: a text payload plus the
ten-field metadata schema (text, language, source, id, url, title, author,
date, quality_signals, extra). Records live one-per-line in JSON; the two
nested metadata payloads stay serialized strings and are parsed on demand so
that reading and re-writing a corpus preserves them byte for byte.
"""

from __future__ import annotations

import gzip
import io
import json
from dataclasses import dataclass, field, replace
from typing import Any, Iterable, Iterator, Optional

ISO_CODES = ("en", "fr", "de", "es", "it")

SOURCES = (
    "AmendementsParlement",
    "AmericanStories",
    "Claire",
    "CroissantAligned",
    "DiscoursPublics",
    "Europarl",
    "EuroparlAligned",
    "Eurovoc",
    "FineWebEdu",
    "GallicaMonographies",
    "GallicaPress",
    "Gutenberg",
    "HAL",
    "InterventionsParlement",
    "LEGI",
    "MathPile",
    "OpenData",
    "OpenEdition",
    "PeS2o",
    "Pile",
    "QuestionsEcritesParlement",
    "RedPajama",
    "STAC",
    "TheStack",
    "Theses",
    "Wikipedia",
    "Wikisource",
    "Wiktionary",
    "YouTube",
)

RECORD_FIELDS = (
    "text", "language", "source", "id", "url", "title", "author", "date",
    "quality_signals", "extra",
)

# quality_signals keys this toolkit reads; kept verbatim for compatibility
SIGNAL_KEYS = (
    "char_count", "word_count", "ccnet_language_score", "ccnet_perplexity",
    "fasttext_language",
)


class ValidationError(ValueError):
    """Raised for malformed tags, records, or record files."""


class RecordParseError(ValidationError):
    """A line that could not be parsed, with file diagnostics."""

    def __init__(self, message: str, line_no: int, byte_offset: int):
        super().__init__(f"line {line_no} (byte {byte_offset}): {message}")
        self.line_no = line_no
        self.byte_offset = byte_offset


@dataclass(frozen=True)
class LanguageTag:
    """A natural language, a programming language, or an ordered language pair."""

    kind: str  # natural | programming | pair
    code: Optional[str] = None        # natural: ISO 639-1 code
    name: Optional[str] = None        # programming: language name
    pair: Optional[tuple] = None      # pair: (code, code), order-significant

    def serialize(self) -> str:
        if self.kind == "natural":
            return self.code
        if self.kind == "programming":
            return "code:" + self.name
        return ",".join(self.pair)

    def __str__(self) -> str:
        return self.serialize()


def parse_language_tag(raw: str) -> LanguageTag:
    """Parse the textual tag grammar: ISO code | "code:"+name | "xx,yy"."""
    if not raw:
        raise ValidationError("empty language tag")
    if raw.startswith("code:"):
        name = raw[len("code:"):]
        if not name:
            raise ValidationError("empty programming-language name in %r" % raw)
        return LanguageTag(kind="programming", name=name)
    if "," in raw:
        parts = raw.split(",")
        if len(parts) != 2 or not all(parts):
            raise ValidationError("bad language pair syntax in %r" % raw)
        for part in parts:
            if part not in ISO_CODES:
                raise ValidationError(
                    "unknown ISO code %r in pair %r" % (part, raw))
        return LanguageTag(kind="pair", pair=(parts[0], parts[1]))
    if raw not in ISO_CODES:
        raise ValidationError("unknown ISO code %r" % raw)
    return LanguageTag(kind="natural", code=raw)


@dataclass(frozen=True)
class DocumentRecord:
    """One corpus sample. quality_signals/extra hold their raw serialized form."""

    text: str
    language: LanguageTag
    source: str
    id: str
    url: Optional[str] = None
    title: Optional[str] = None
    author: Optional[str] = None
    date: Optional[str] = None
    quality_signals: Optional[str] = None
    extra: Optional[str] = None
    line_no: Optional[int] = None  # reader diagnostic, never serialized

    def signals(self) -> dict:
        """Parse quality_signals on demand; empty dict when absent."""
        if not self.quality_signals:
            return {}
        return json.loads(self.quality_signals)

    def extra_fields(self) -> dict:
        if not self.extra:
            return {}
        return json.loads(self.extra)

    def with_text(self, text: str) -> "DocumentRecord":
        return replace(self, text=text)

    def to_json_obj(self) -> dict:
        obj = {
            "text": self.text,
            "language": self.language.serialize(),
            "source": self.source,
            "id": self.id,
        }
        for name in ("url", "title", "author", "date", "quality_signals", "extra"):
            value = getattr(self, name)
            if value is not None:
                obj[name] = value
        return obj


def pack_signals(signals: dict) -> str:
    """Serialize a signals/extra mapping to its on-disk nested-string form."""
    return json.dumps(signals, ensure_ascii=False, separators=(", ", ": "))


@dataclass(frozen=True)
class FilterDecision:
    """Keep/drop verdict with the rule that fired and what it measured."""

    verdict: str  # keep | drop
    rule_id: str
    measurements: dict = field(default_factory=dict)
    reason: str = ""

    @property
    def keep(self) -> bool:
        return self.verdict == "keep"

    def to_json_obj(self, record: Optional[DocumentRecord] = None) -> dict:
        obj = {}
        if record is not None:
            obj["source"] = record.source
            obj["id"] = record.id
        obj.update({
            "verdict": self.verdict,
            "rule_id": self.rule_id,
            "measurements": self.measurements,
            "reason": self.reason,
        })
        return obj


def keep_decision(rule_id: str, measurements: Optional[dict] = None,
                  reason: str = "") -> FilterDecision:
    return FilterDecision("keep", rule_id, measurements or {}, reason)


def drop_decision(rule_id: str, measurements: Optional[dict] = None,
                  reason: str = "") -> FilterDecision:
    return FilterDecision("drop", rule_id, measurements or {}, reason)


def record_from_obj(obj: dict) -> DocumentRecord:
    """Build a record from a parsed JSON object, rejecting unknown fields."""
    if not isinstance(obj, dict):
        raise ValidationError("record is not an object")
    unknown = [k for k in obj if k not in RECORD_FIELDS]
    if unknown:
        raise ValidationError("unknown record fields: %s" % ", ".join(sorted(unknown)))
    for name in ("text", "language", "source", "id"):
        if name not in obj:
            raise ValidationError("missing required field %r" % name)
        if not isinstance(obj[name], str):
            raise ValidationError("field %r is not a string" % name)
    language = parse_language_tag(obj["language"])
    for name in ("url", "title", "author", "date", "quality_signals", "extra"):
        if name in obj and not isinstance(obj[name], str):
            raise ValidationError("field %r is not a string" % name)
    return DocumentRecord(
        text=obj["text"],
        language=language,
        source=obj["source"],
        id=obj["id"],
        url=obj.get("url"),
        title=obj.get("title"),
        author=obj.get("author"),
        date=obj.get("date"),
        quality_signals=obj.get("quality_signals"),
        extra=obj.get("extra"),
    )


def validate_record(record: DocumentRecord) -> FilterDecision:
    """Check every type invariant; report all violations in one decision."""
    violations = []
    if not record.id:
        violations.append("missing_id")
    if record.source not in SOURCES:
        violations.append("unknown_source")
    try:
        parse_language_tag(record.language.serialize())
    except ValidationError:
        violations.append("bad_language")
    if "\r" in record.text or "\x00" in record.text:
        violations.append("control_chars")
    for rule, raw in (("bad_quality_signals", record.quality_signals),
                      ("bad_extra", record.extra)):
        if raw is None or raw == "":
            continue
        try:
            parsed = json.loads(raw)
        except json.JSONDecodeError:
            violations.append(rule)
            continue
        if not isinstance(parsed, dict):
            violations.append(rule)
        elif rule == "bad_quality_signals":
            scalar = (str, int, float, bool, type(None))
            if not all(isinstance(v, scalar) for v in parsed.values()):
                violations.append(rule)
    measurements = {"violations": float(len(violations))}
    if violations:
        return drop_decision(violations[0], measurements,
                             "invariants violated: " + "; ".join(violations))
    return keep_decision("schema", measurements)


def find_duplicate_keys(records: Iterable[DocumentRecord]) -> list:
    """(source, id) pairs seen more than once within one partition."""
    seen = set()
    dups = []
    for record in records:
        key = (record.source, record.id)
        if key in seen:
            dups.append(key)
        seen.add(key)
    return dups


def _open_binary(path, mode: str):
    path = str(path)
    if path.endswith(".gz"):
        return gzip.open(path, mode)
    return open(path, mode)


def read_records(path, mode: str = "strict",
                 errors: Optional[list] = None) -> Iterator[DocumentRecord]:
    """Stream records in file order, one JSON object per line.

    strict mode raises RecordParseError on the first bad line; skip mode
    appends the error to `errors` (when given) and keeps going. Line numbers
    and byte offsets always refer to the uncompressed stream.
    """
    if mode not in ("strict", "skip"):
        raise ValueError("mode must be strict or skip")
    offset = 0
    with _open_binary(path, "rb") as handle:
        for line_no, raw in enumerate(handle, start=1):
            line_offset = offset
            offset += len(raw)
            stripped = raw.strip()
            if not stripped:
                continue
            try:
                obj = json.loads(stripped.decode("utf-8"))
                record = record_from_obj(obj)
            except (ValidationError, ValueError) as exc:
                err = RecordParseError(str(exc), line_no, line_offset)
                if mode == "strict":
                    raise err from exc
                if errors is not None:
                    errors.append(err)
                continue
            yield replace(record, line_no=line_no)


def write_records(stream: Iterable[DocumentRecord], path,
                  mode: str = "strict") -> int:
    """Write records one per line; returns the count written.

    strict mode validates each record first and stops at the first invalid
    one (nothing after the failure point is emitted); the raised error
    carries the partial-write count.
    """
    count = 0
    with _open_binary(path, "wb") as handle:
        writer = io.TextIOWrapper(handle, encoding="utf-8", newline="\n")
        try:
            for record in stream:
                if mode == "strict":
                    decision = validate_record(record)
                    if not decision.keep:
                        raise ValidationError(
                            "invalid record %r after %d written: %s"
                            % (record.id, count, decision.reason))
                writer.write(json.dumps(record.to_json_obj(),
                                        ensure_ascii=False,
                                        separators=(", ", ": ")))
                writer.write("\n")
                count += 1
        finally:
            writer.flush()
            writer.detach()
    return count


def write_decisions(pairs, path) -> int:
    """Write (record, decision) pairs as a line-delimited filter report."""
    count = 0
    with _open_binary(path, "wb") as handle:
        writer = io.TextIOWrapper(handle, encoding="utf-8", newline="\n")
        for record, decision in pairs:
            writer.write(json.dumps(decision.to_json_obj(record),
                                    ensure_ascii=False))
            writer.write("\n")
            count += 1
        writer.flush()
        writer.detach()
    return count


__all__ = [
    "ISO_CODES", "SOURCES", "RECORD_FIELDS", "SIGNAL_KEYS",
    "ValidationError", "RecordParseError",
    "LanguageTag", "parse_language_tag",
    "DocumentRecord", "record_from_obj", "pack_signals",
    "FilterDecision", "keep_decision", "drop_decision",
    "validate_record", "find_duplicate_keys",
    "read_records", "write_records", "write_decisions",
]

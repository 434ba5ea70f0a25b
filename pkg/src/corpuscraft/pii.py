"""Seeded replacement of email addresses and IPv4 addresses.

Replacements are deliberately shaped so the detectors never match them
again: synthetic emails use a dotless domain and synthetic IPs carry a
final octet above 255. That makes redaction idempotent by construction.
IPv6 addresses are left alone.
"""

import hashlib
import random
import re

from .records import DocumentRecord

EMAIL_RE = re.compile(
    r"\b[A-Za-z0-9._%+-]+@[A-Za-z0-9-]+(?:\.[A-Za-z0-9-]+)*\.[A-Za-z]{2,}\b")

# Octet values are validated after the match; the lookarounds stop partial
# matches inside longer dotted runs like 1.2.3.4.5.
IPV4_RE = re.compile(r"(?<![\d.])(?:\d{1,3}\.){3}\d{1,3}(?![\d.])")

_FIRST_NAMES = ("alex", "sam", "lee", "dana", "kim", "pat", "noa", "luca")


def _valid_ipv4(span: str) -> bool:
    return all(0 <= int(part) <= 255 for part in span.split("."))


def find_pii(text: str) -> list:
    """(kind, start, end, span) for every detector match, left to right."""
    hits = []
    for m in EMAIL_RE.finditer(text):
        hits.append(("email", m.start(), m.end(), m.group()))
    for m in IPV4_RE.finditer(text):
        if _valid_ipv4(m.group()):
            hits.append(("ipv4", m.start(), m.end(), m.group()))
    hits.sort(key=lambda h: h[1])
    return hits


def _rng_for(seed: int, doc_id: str) -> random.Random:
    digest = hashlib.blake2b(("%d|%s" % (seed, doc_id)).encode("utf-8"),
                             digest_size=8).digest()
    return random.Random(int.from_bytes(digest, "big"))


def _synthetic_email(rng: random.Random) -> str:
    # dotless domain: EMAIL_RE requires a dot, so this can never rematch
    return "%s%03d@redacted-invalid" % (rng.choice(_FIRST_NAMES),
                                        rng.randint(0, 999))


def _synthetic_ipv4(rng: random.Random) -> str:
    # final octet over 255: IPV4_RE validation rejects it, so no rematch
    return "%d.%d.%d.%d" % (rng.randint(1, 254), rng.randint(0, 255),
                            rng.randint(0, 255), rng.randint(300, 399))


def redact_pii(doc: DocumentRecord, seed: int) -> DocumentRecord:
    """Replace each detected address, identically for repeated spans.

    Returns the record unchanged (same object) when nothing matches.
    """
    hits = find_pii(doc.text)
    if not hits:
        return doc
    rng = _rng_for(seed, doc.id)
    mapping = {}
    for kind, _, _, span in hits:
        if span in mapping:
            continue
        if kind == "email":
            mapping[span] = _synthetic_email(rng)
        else:
            mapping[span] = _synthetic_ipv4(rng)
    pieces = []
    cursor = 0
    for _, start, end, span in hits:
        pieces.append(doc.text[cursor:start])
        pieces.append(mapping[span])
        cursor = end
    pieces.append(doc.text[cursor:])
    return doc.with_text("".join(pieces))

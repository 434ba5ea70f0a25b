"""Constrained unicode-level BPE tokenizer with byte fallback.

Token constraints are enforced generatively: text is pre-segmented into
maximal runs of one character class (alphabetic, digit, punctuation,
whitespace) and merges never cross a segment boundary, digits stay atomic,
and whitespace is covered by a forced inventory of run tokens (spaces of
length 1-8, tabs 1-4, carriage returns 1-2, newlines 1-2). Any character
without a vocabulary entry encodes as its UTF-8 bytes over 256 reserved
byte tokens, so nothing is ever out of vocabulary.

Encoding applies a reversible preprocessing pair: after NFC and CR/NUL
stripping (canonicalization), one space is always inserted after each
trigger character whose next character is alphanumeric or an ASCII space;
decoding removes exactly one space in that position. On canonical text,
decode(encode(text)) == text exactly. The separate corpus-prep normalize()
keeps the published insert-only-when-absent behavior and is idempotent
instead of reversible.
"""

from __future__ import annotations

import json
import os
import re
import unicodedata
from dataclasses import dataclass, field
from heapq import heappop, heappush
from typing import Iterable, Optional

# characters that usually open a sentence or quotation; a space is managed
# after each of them when the next character is alphanumeric or a space
TRIGGERS = frozenset("\n\t([{/<'\u2019\"\u00ab\u201c\u2018\u201a\u2039\u2014\u2013\u2015")

WS_CAPS = {" ": 8, "\t": 4, "\r": 2, "\n": 2}

BASE_SPECIALS = ("<unk>", "<s>", "</s>", "<pad>")
BYTE_OFFSET = len(BASE_SPECIALS)
N_BYTES = 256

REFERENCE_VOCAB_SIZE = 65024
MAX_UINT16_VOCAB = 65535

_WS = "ws"
_DIGIT = "digit"
_ALPHA = "alpha"
_PUNCT = "punct"


def canonicalize(text: str) -> str:
    """NFC plus removal of carriage returns and NUL bytes."""
    text = unicodedata.normalize("NFC", text)
    return text.replace("\r", "").replace("\x00", "")


def _is_alnum_or_space(ch: str) -> bool:
    return ch == " " or ch.isalnum()


def _preprocess(text: str):
    """Always-insert trigger spacing over canonical text, with an offset map
    from preprocessed positions back to canonical positions (inserted spaces
    map to the trigger character that caused them)."""
    out = []
    omap = []
    last = len(text) - 1
    for i, ch in enumerate(text):
        out.append(ch)
        omap.append(i)
        if ch in TRIGGERS and i < last and _is_alnum_or_space(text[i + 1]):
            out.append(" ")
            omap.append(i)
    return "".join(out), omap


def _postprocess(text: str) -> str:
    """Exact inverse of _preprocess on its image."""
    out = []
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        out.append(ch)
        if ch in TRIGGERS and i + 1 < n and text[i + 1] == " ":
            i += 2
        else:
            i += 1
    return "".join(out)


@dataclass(frozen=True)
class NormalizationRules:
    nfc: bool = True
    strip_chars: tuple = ("\r", "\x00")
    triggers: frozenset = TRIGGERS
    leading_space: bool = True


def normalize(text: str, rules: Optional[NormalizationRules] = None) -> str:
    """Corpus-prep normalization: canonicalize, then insert a space after each
    trigger followed by an alphanumeric, and one at the start of the string,
    in both cases only when no space is already there. Idempotent."""
    rules = rules or NormalizationRules()
    if rules.nfc:
        text = unicodedata.normalize("NFC", text)
    for ch in rules.strip_chars:
        text = text.replace(ch, "")
    out = []
    last = len(text) - 1
    for i, ch in enumerate(text):
        out.append(ch)
        if ch in rules.triggers and i < last and text[i + 1] != " " \
                and text[i + 1].isalnum():
            out.append(" ")
    text = "".join(out)
    if rules.leading_space and text and not text.startswith(" "):
        text = " " + text
    return text


def _char_class(ch: str) -> str:
    if ch.isspace():
        return _WS
    if ch.isdigit():
        return _DIGIT
    if ch.isalpha() or unicodedata.category(ch) in ("Mn", "Mc", "Me"):
        return _ALPHA
    return _PUNCT


def _segments(pre: str):
    """Maximal same-class runs; whitespace additionally split per character."""
    i = 0
    n = len(pre)
    while i < n:
        cls = _char_class(pre[i])
        j = i + 1
        if cls == _WS:
            while j < n and pre[j] == pre[i]:
                j += 1
        else:
            while j < n and _char_class(pre[j]) == cls:
                j += 1
        yield cls, i, j
        i = j


def _escape(token: str) -> str:
    return (token.replace("\\", "\\\\").replace(" ", "\\s")
                 .replace("\t", "\\t").replace("\n", "\\n").replace("\r", "\\r"))


def _unescape(text: str) -> str:
    out = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == "\\" and i + 1 < len(text):
            out.append({"\\": "\\", "s": " ", "t": "\t",
                        "n": "\n", "r": "\r"}.get(text[i + 1], "\\" + text[i + 1]))
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def forced_whitespace_tokens() -> list:
    tokens = [" " * k for k in range(1, WS_CAPS[" "] + 1)]
    tokens += ["\t" * k for k in range(1, WS_CAPS["\t"] + 1)]
    tokens += ["\r" * k for k in range(1, WS_CAPS["\r"] + 1)]
    tokens += ["\n" * k for k in range(1, WS_CAPS["\n"] + 1)]
    return tokens


class TokenizerModel:
    """Immutable tokenizer: vocabulary, merge ranks, and special tokens.

    Vocabulary layout: base specials, 256 byte tokens (as <0xNN> markers),
    forced whitespace-run tokens, the ten ASCII digits, single-character
    seeds, merged tokens, then any specials appended later (ids of earlier
    tokens never move).
    """

    def __init__(self, vocab, merges, specials, ws_caps=None,
                 target_vocab_size: Optional[int] = None):
        self.vocab = tuple(vocab)
        self.merges = tuple(tuple(m) for m in merges)
        self.specials = tuple(specials)
        self.ws_caps = dict(ws_caps or WS_CAPS)
        self.target_vocab_size = target_vocab_size
        self.ranks = {pair: rank for rank, pair in enumerate(self.merges)}
        self.stoi = {}
        for idx, token in enumerate(self.vocab):
            if token in self.stoi:
                raise ValueError("duplicate token %r in vocabulary" % token)
            self.stoi[token] = idx
        self.pad_id = self.stoi["<pad>"]
        self.bos_id = self.stoi["<s>"]
        self._segment_cache = {}
        self._special_re = None
        if self.specials:
            ordered = sorted(self.specials, key=len, reverse=True)
            self._special_re = re.compile(
                "(" + "|".join(re.escape(s) for s in ordered) + ")")

    def __len__(self) -> int:
        return len(self.vocab)

    def is_byte_id(self, idx: int) -> bool:
        return BYTE_OFFSET <= idx < BYTE_OFFSET + N_BYTES

    def byte_id(self, value: int) -> int:
        return BYTE_OFFSET + value

    def token(self, idx: int) -> str:
        return self.vocab[idx]

    def add_special_tokens(self, tokens) -> "TokenizerModel":
        """New model with extra specials appended at the end of the vocab."""
        fresh = [t for t in tokens if t not in self.stoi]
        return TokenizerModel(self.vocab + tuple(fresh),
                              self.merges,
                              self.specials + tuple(fresh),
                              self.ws_caps,
                              self.target_vocab_size)


def _byte_marker(value: int) -> str:
    return "<0x%02X>" % value


def _base_vocab(specials=BASE_SPECIALS) -> list:
    vocab = list(specials)
    vocab += [_byte_marker(v) for v in range(N_BYTES)]
    vocab += forced_whitespace_tokens()
    # every ASCII digit is always a token, even if absent from the corpus
    vocab += [str(d) for d in range(10)]
    return vocab


def validate_vocab_size(n: int) -> bool:
    """Matrix-shape and uint16 storage constraints on a vocabulary size."""
    return n % 256 == 0 and n <= MAX_UINT16_VOCAB


def train_bpe(corpus: Iterable[str], vocab_size: int,
              min_pair_count: int = 2) -> TokenizerModel:
    """Greedy highest-frequency pair merging under the class constraints.

    Ties between equally frequent pairs break lexicographically, so training
    is deterministic with no seed. Digits and whitespace never merge; alpha
    and punctuation merge only within their own segments.
    """
    word_freq = {}
    alphabet = set()
    n_texts = 0
    for text in corpus:
        n_texts += 1
        pre, _ = _preprocess(canonicalize(text))
        for cls, i, j in _segments(pre):
            seg = pre[i:j]
            if cls in (_ALPHA, _PUNCT):
                word_freq[seg] = word_freq.get(seg, 0) + 1
                alphabet.update(seg)
            elif cls == _DIGIT:
                alphabet.update(seg)
    if n_texts == 0 or (not word_freq and not alphabet):
        raise ValueError("empty training corpus")

    vocab = _base_vocab()
    seeds = sorted(alphabet - set(vocab))
    base_size = len(vocab) + len(seeds)
    if vocab_size < base_size:
        raise ValueError(
            "vocab_size %d is too small: base inventory needs %d"
            % (vocab_size, base_size))
    vocab += seeds
    vocab_set = set(vocab)

    words = {word: [list(word), freq] for word, freq in word_freq.items()}
    pair_counts = {}
    pair_words = {}
    for word, (symbols, freq) in words.items():
        for a, b in zip(symbols, symbols[1:]):
            pair = (a, b)
            pair_counts[pair] = pair_counts.get(pair, 0) + freq
            pair_words.setdefault(pair, set()).add(word)

    heap = []
    for pair, count in pair_counts.items():
        heappush(heap, (-count, pair))

    merges = []
    while len(vocab) < vocab_size and heap:
        neg_count, pair = heappop(heap)
        count = pair_counts.get(pair, 0)
        if count != -neg_count or count < min_pair_count:
            if count >= min_pair_count:
                heappush(heap, (-count, pair))
            continue
        a, b = pair
        merged_sym = a + b
        merges.append(pair)
        # two merge paths can yield the same surface string; share the id
        if merged_sym not in vocab_set:
            vocab.append(merged_sym)
            vocab_set.add(merged_sym)
        for word in list(pair_words.get(pair, ())):
            symbols, freq = words[word]
            i = 0
            while i < len(symbols) - 1:
                if symbols[i] == a and symbols[i + 1] == b:
                    left = symbols[i - 1] if i > 0 else None
                    right = symbols[i + 2] if i + 2 < len(symbols) else None
                    for old in ((left, a) if left else None,
                                (a, b),
                                (b, right) if right else None):
                        if old:
                            pair_counts[old] -= freq
                            if pair_counts[old] <= 0:
                                pair_counts.pop(old, None)
                                pair_words.pop(old, None)
                            else:
                                heappush(heap, (-pair_counts[old], old))
                    symbols[i:i + 2] = [merged_sym]
                    for new in ((left, merged_sym) if left else None,
                                (merged_sym, right) if right else None):
                        if new:
                            pair_counts[new] = pair_counts.get(new, 0) + freq
                            pair_words.setdefault(new, set()).add(word)
                            heappush(heap, (-pair_counts[new], new))
                else:
                    i += 1
        pair_counts.pop(pair, None)
        pair_words.pop(pair, None)
    return TokenizerModel(vocab, merges, BASE_SPECIALS,
                          target_vocab_size=vocab_size)


def _bpe_units(model: TokenizerModel, seg: str):
    """Apply merges inside one alpha/punct segment.

    Units are (string, rel_start, rel_end, known); unknown characters sit
    outside the merge process and later expand to byte tokens.
    """
    units = [(ch, k, k + 1, ch in model.stoi) for k, ch in enumerate(seg)]
    while len(units) > 1:
        best = None
        for idx in range(len(units) - 1):
            a, b = units[idx], units[idx + 1]
            if a[3] and b[3]:
                rank = model.ranks.get((a[0], b[0]))
                if rank is not None and (best is None or rank < best[0]):
                    best = (rank, a[0], b[0])
        if best is None:
            break
        _, a_s, b_s = best
        out = []
        i = 0
        while i < len(units):
            if (i < len(units) - 1 and units[i][3] and units[i + 1][3]
                    and units[i][0] == a_s and units[i + 1][0] == b_s):
                out.append((a_s + b_s, units[i][1], units[i + 1][2], True))
                i += 2
            else:
                out.append(units[i])
                i += 1
        units = out
    return units


def _encode_segment(model: TokenizerModel, cls: str, seg: str):
    """(token id, rel_start, rel_end) triples for one segment, cached."""
    key = (cls, seg)
    hit = model._segment_cache.get(key)
    if hit is not None:
        return hit
    out = []
    if cls == _WS:
        cap = model.ws_caps.get(seg[0], 1)
        pos = 0
        while pos < len(seg):
            take = min(cap, len(seg) - pos)
            token = seg[0] * take
            while take > 1 and token not in model.stoi:
                take -= 1
                token = seg[0] * take
            idx = model.stoi.get(token)
            if idx is None:
                for value in token.encode("utf-8"):
                    out.append((model.byte_id(value), pos, pos + 1))
            else:
                out.append((idx, pos, pos + take))
            pos += take
    elif cls == _DIGIT:
        for k, ch in enumerate(seg):
            idx = model.stoi.get(ch)
            if idx is None:
                out.extend((model.byte_id(value), k, k + 1)
                           for value in ch.encode("utf-8"))
            else:
                out.append((idx, k, k + 1))
    else:
        for token, start, end, known in _bpe_units(model, seg):
            if known:
                out.append((model.stoi[token], start, end))
            else:
                out.extend((model.byte_id(value), start, end)
                           for value in token.encode("utf-8"))
    out = tuple(out)
    model._segment_cache[key] = out
    return out


def _encode_fragment(model: TokenizerModel, text: str):
    """Encode special-free canonical text; offsets refer to that text."""
    pre, omap = _preprocess(text)
    ids = []
    spans = []
    for cls, i, j in _segments(pre):
        for idx, rel_start, rel_end in _encode_segment(model, cls, pre[i:j]):
            ids.append(idx)
            covered = omap[i + rel_start:i + rel_end]
            spans.append((min(covered), max(covered) + 1))
    return ids, spans


def encode_with_offsets(model: TokenizerModel, text: str,
                        with_specials: bool = False):
    """Encode canonicalized text; returns (ids, character spans).

    Spans index into the canonicalized text. With with_specials on, literal
    special-token strings map to their single reserved ids.
    """
    text = canonicalize(text)
    if not with_specials or model._special_re is None:
        return _encode_fragment(model, text)
    ids = []
    spans = []
    offset = 0
    for part in model._special_re.split(text):
        if not part:
            continue
        if part in model.stoi and part in model.specials:
            ids.append(model.stoi[part])
            spans.append((offset, offset + len(part)))
        else:
            frag_ids, frag_spans = _encode_fragment(model, part)
            ids.extend(frag_ids)
            spans.extend((offset + s, offset + e) for s, e in frag_spans)
        offset += len(part)
    return ids, spans


def encode(model: TokenizerModel, text: str,
           with_specials: bool = False) -> list:
    return encode_with_offsets(model, text, with_specials)[0]


def count_tokens(model: TokenizerModel, text: str) -> int:
    return len(encode(model, text))


def token_strings(model: TokenizerModel, ids) -> list:
    """Vocabulary strings for ids; byte tokens keep their <0xNN> markers."""
    return [model.vocab[idx] for idx in ids]


def decode(model: TokenizerModel, ids) -> str:
    """Inverse of encode on canonical text. Byte-token runs decode as UTF-8;
    invalid sequences fall back to U+FFFD replacement characters."""
    parts = []
    pending = bytearray()
    for idx in ids:
        if not 0 <= idx < len(model.vocab):
            raise ValueError("token id %r out of range" % (idx,))
        if model.is_byte_id(idx):
            pending.append(idx - BYTE_OFFSET)
            continue
        if pending:
            parts.append(pending.decode("utf-8", errors="replace"))
            pending = bytearray()
        parts.append(model.vocab[idx])
    if pending:
        parts.append(pending.decode("utf-8", errors="replace"))
    return _postprocess("".join(parts))


def audit_vocabulary(model: TokenizerModel) -> dict:
    """Constraint scan over ordinary tokens; byte markers and specials are
    atomic ids, not learned strings, so they sit outside the class rules."""
    findings = {
        "digit_mixed": [],
        "punct_alpha_mixed": [],
        "ws_mixed": [],
        "ws_inventory_missing": [],
        "multi_char_digit": [],
    }
    skip = set(model.specials) | {_byte_marker(v) for v in range(N_BYTES)}
    for token in model.vocab:
        if token in skip:
            continue
        classes = {_char_class(ch) for ch in token}
        if _DIGIT in classes and len(token) > 1:
            findings["multi_char_digit"].append(token)
        if _DIGIT in classes and classes != {_DIGIT}:
            findings["digit_mixed"].append(token)
        if _ALPHA in classes and _PUNCT in classes:
            findings["punct_alpha_mixed"].append(token)
        if _WS in classes and (classes != {_WS} or len(set(token)) > 1):
            findings["ws_mixed"].append(token)
    for token in forced_whitespace_tokens():
        if token not in model.stoi:
            findings["ws_inventory_missing"].append(token)
    findings["byte_tokens_complete"] = all(
        model.vocab[model.byte_id(v)] == _byte_marker(v) for v in range(N_BYTES))
    findings["clean"] = (findings["byte_tokens_complete"]
                         and not any(findings[k] for k in (
                             "digit_mixed", "punct_alpha_mixed", "ws_mixed",
                             "ws_inventory_missing", "multi_char_digit")))
    return findings


def save_tokenizer(model: TokenizerModel, path) -> None:
    """Directory with a rules header, vocab.txt (id = line index), and
    merges.txt (rank = line index)."""
    os.makedirs(path, exist_ok=True)
    header = {
        "format": "bpe-tokenizer v1",
        "vocab_size": len(model.vocab),
        "target_vocab_size": model.target_vocab_size,
        "specials": list(model.specials),
        "ws_caps": {_escape(k): v for k, v in model.ws_caps.items()},
        "n_merges": len(model.merges),
    }
    with open(os.path.join(path, "header.json"), "w", encoding="utf-8") as fh:
        json.dump(header, fh, ensure_ascii=False, indent=2)
        fh.write("\n")
    with open(os.path.join(path, "vocab.txt"), "w", encoding="utf-8") as fh:
        for token in model.vocab:
            fh.write(_escape(token) + "\n")
    with open(os.path.join(path, "merges.txt"), "w", encoding="utf-8") as fh:
        for a, b in model.merges:
            fh.write(_escape(a) + " " + _escape(b) + "\n")


def load_tokenizer(path) -> TokenizerModel:
    """Load and refuse silently-inconsistent models."""
    with open(os.path.join(path, "header.json"), encoding="utf-8") as fh:
        header = json.load(fh)
    if header.get("format") != "bpe-tokenizer v1":
        raise ValueError("unrecognized tokenizer format in %s" % path)
    with open(os.path.join(path, "vocab.txt"), encoding="utf-8") as fh:
        vocab = [_unescape(line) for line in fh.read().split("\n")[:-1]]
    with open(os.path.join(path, "merges.txt"), encoding="utf-8") as fh:
        merges = []
        for line in fh.read().split("\n")[:-1]:
            a, _, b = line.partition(" ")
            merges.append((_unescape(a), _unescape(b)))
    if len(vocab) != header["vocab_size"]:
        raise ValueError("vocab.txt length disagrees with header")
    if len(merges) != header["n_merges"]:
        raise ValueError("merges.txt length disagrees with header")
    model = TokenizerModel(vocab, merges, header["specials"],
                           {_unescape(k): v
                            for k, v in header["ws_caps"].items()},
                           header.get("target_vocab_size"))
    for a, b in merges:
        for part in (a, b, a + b):
            if part not in model.stoi:
                raise ValueError("merge rule names unknown token %r" % part)
    findings = audit_vocabulary(model)
    if not findings["clean"]:
        problems = {k: v for k, v in findings.items() if v and k != "clean"}
        raise ValueError("vocabulary violates token constraints: %r" % problems)
    return model


@dataclass(frozen=True)
class FertilityRow:
    language: str
    corpus: str
    token_count: int
    word_count: int

    @property
    def tokens_per_word(self) -> float:
        return self.token_count / self.word_count


@dataclass(frozen=True)
class FertilityReport:
    rows: tuple

    def by_language(self) -> dict:
        totals = {}
        for row in self.rows:
            tokens, words = totals.get(row.language, (0, 0))
            totals[row.language] = (tokens + row.token_count,
                                    words + row.word_count)
        return {lang: tokens / words for lang, (tokens, words) in totals.items()}

    def overall(self) -> float:
        tokens = sum(r.token_count for r in self.rows)
        words = sum(r.word_count for r in self.rows)
        return tokens / words


def fertility(model: TokenizerModel, samples,
              word_rule: str = "whitespace") -> FertilityReport:
    """Tokens per word, grouped by (language, corpus).

    samples: iterable of (language, corpus_id, text) triples or
    DocumentRecord objects. The word rule is whitespace-delimited maximal
    non-space runs with punctuation attached. Whitespace-run tokens are
    word separators, not word content, so they stay out of the numerator;
    a corpus of single-character words then measures exactly 1.0.
    """
    if word_rule != "whitespace":
        raise ValueError("unknown word rule %r" % word_rule)
    groups = {}
    for sample in samples:
        if hasattr(sample, "language"):
            key = (sample.language.serialize(), sample.source)
            text = sample.text
        else:
            language, corpus_id, text = sample
            key = (language, corpus_id)
        strings = token_strings(model, encode(model, text))
        n_tokens = sum(1 for s in strings if not s.isspace())
        tokens, words = groups.get(key, (0, 0))
        groups[key] = (tokens + n_tokens, words + len(text.split()))
    rows = []
    for (language, corpus_id), (tokens, words) in sorted(groups.items()):
        if words == 0:
            raise ValueError("no words in corpus %r" % corpus_id)
        rows.append(FertilityRow(language, corpus_id, tokens, words))
    if not rows:
        raise ValueError("empty sample set")
    return FertilityReport(tuple(rows))


__all__ = [
    "TRIGGERS", "WS_CAPS", "BASE_SPECIALS", "REFERENCE_VOCAB_SIZE",
    "NormalizationRules", "TokenizerModel",
    "canonicalize", "normalize", "forced_whitespace_tokens",
    "validate_vocab_size", "train_bpe",
    "encode", "encode_with_offsets", "decode", "count_tokens",
    "token_strings", "audit_vocabulary",
    "save_tokenizer", "load_tokenizer",
    "FertilityRow", "FertilityReport", "fertility",
]

"""Instruction-data preparation: chat rendering, loss masks, fixed lengths.

A conversation is rendered into one flat string with special tokens marking
roles and turn ends, encoded, masked so the training loss only sees assistant
responses, and padded or truncated to a fixed sequence length. One
conversation per sequence; no packing.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple

from .keywords import FILTER_STRINGS, synthetic_keyword_filter
from .records import FilterDecision, drop_decision
from .tokenizer import TokenizerModel, canonicalize, encode_with_offsets

BOS = "<s>"
START_HEADER = "<|start_header_id|>"
END_HEADER = "<|end_header_id|>"
EOT = "<|eot_id|>"

CHAT_SPECIALS = (START_HEADER, END_HEADER, EOT)

ROLES = ("system", "user", "assistant")

SEQUENCE_LENGTH = 4096

SFT_LANGUAGES = ("en", "fr", "de", "es", "it")

# strings that may never appear inside turn content; they would collide with
# the rendered template markers
_RESERVED = (BOS, "</s>", "<unk>", "<pad>") + CHAT_SPECIALS


@dataclass(frozen=True)
class Turn:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError("unknown role %r" % self.role)
        for literal in _RESERVED:
            if literal in self.content:
                raise ValueError(
                    "turn content contains reserved token literal %r" % literal)


@dataclass(frozen=True)
class Conversation:
    turns: Tuple[Turn, ...]

    def __post_init__(self):
        if not self.turns:
            raise ValueError("conversation has no turns")

    def has_assistant_turn(self) -> bool:
        return any(turn.role == "assistant" for turn in self.turns)


def conversation(*pairs) -> Conversation:
    """Shorthand builder from (role, content) tuples."""
    return Conversation(tuple(Turn(role, content) for role, content in pairs))


def render_chat(conv: Conversation) -> str:
    """Flatten a conversation with the chat markers, byte for byte."""
    parts = [BOS]
    for turn in conv.turns:
        parts.append(START_HEADER + turn.role + END_HEADER + "\n\n"
                     + turn.content + "\n\n" + EOT)
    return "".join(parts)


def parse_chat(text: str) -> Conversation:
    """Exact inverse of render_chat on rendered blocks."""
    if not text.startswith(BOS):
        raise ValueError("rendered chat must start with %r" % BOS)
    pos = len(BOS)
    turns = []
    while pos < len(text):
        if not text.startswith(START_HEADER, pos):
            raise ValueError("expected %r at offset %d" % (START_HEADER, pos))
        pos += len(START_HEADER)
        end = text.find(END_HEADER, pos)
        if end < 0:
            raise ValueError("unterminated role header")
        role = text[pos:end]
        pos = end + len(END_HEADER)
        if not text.startswith("\n\n", pos):
            raise ValueError("missing blank line after role header")
        pos += 2
        eot = text.find(EOT, pos)
        if eot < 0:
            raise ValueError("missing end-of-turn marker")
        if eot - 2 < pos or text[eot - 2:eot] != "\n\n":
            raise ValueError("missing blank line before end-of-turn marker")
        turns.append(Turn(role, text[pos:eot - 2]))
        pos = eot + len(EOT)
    return Conversation(tuple(turns))


@dataclass(frozen=True)
class TurnSpan:
    """Character range of one turn's content and end marker in the render."""

    role: str
    content_start: int
    content_end: int
    eot_start: int
    eot_end: int


def render_chat_spans(conv: Conversation) -> Tuple[str, List[TurnSpan]]:
    """Render in canonical form and report per-turn character spans.

    Contents are canonicalized piecewise so the reported spans index into
    the same string the tokenizer sees.
    """
    parts = [BOS]
    length = len(BOS)
    spans = []
    for turn in conv.turns:
        head = START_HEADER + turn.role + END_HEADER + "\n\n"
        content = canonicalize(turn.content)
        start = length + len(head)
        content_end = start + len(content)
        eot_start = content_end + 2
        spans.append(TurnSpan(turn.role, start, content_end,
                              eot_start, eot_start + len(EOT)))
        piece = head + content + "\n\n" + EOT
        parts.append(piece)
        length += len(piece)
    text = "".join(parts)
    if canonicalize(text) != text:
        # a combining character at a piece boundary recomposed across the
        # join; spans would be off, so refuse rather than silently shift
        raise ValueError("rendered text is not canonicalization-stable")
    return text, spans


def loss_mask(token_spans: Sequence[Tuple[int, int]],
              turn_spans: Sequence[TurnSpan],
              include_eot: bool = True) -> List[int]:
    """1 for tokens in assistant content (and, by default, its end marker)."""
    if token_spans:
        covered = max(end for _, end in token_spans)
    else:
        covered = 0
    targets = []
    for span in turn_spans:
        if span.eot_end > covered:
            raise ValueError(
                "turn span ends at %d but tokens cover only %d characters"
                % (span.eot_end, covered))
        if span.role != "assistant":
            continue
        targets.append((span.content_start, span.content_end))
        if include_eot:
            targets.append((span.eot_start, span.eot_end))
    mask = []
    for start, end in token_spans:
        hit = any(start < t_end and end > t_start for t_start, t_end in targets)
        mask.append(1 if hit else 0)
    return mask


@dataclass(frozen=True)
class RenderedExample:
    """A fixed-length training sample: ids, mask, and provenance."""

    ids: Tuple[int, ...]
    loss_mask: Tuple[int, ...]
    source: str = ""
    language: str = ""
    truncated: bool = False

    def __post_init__(self):
        if len(self.ids) != len(self.loss_mask):
            raise ValueError("ids and mask lengths differ")
        if any(bit not in (0, 1) for bit in self.loss_mask):
            raise ValueError("mask values must be 0 or 1")

    @property
    def trainable(self) -> bool:
        return any(self.loss_mask)


def pad_truncate(ids: Sequence[int], mask: Sequence[int], pad_id: int,
                 length: int = SEQUENCE_LENGTH, source: str = "",
                 language: str = "") -> RenderedExample:
    """Force the pair to the fixed length; padding is never loss-masked."""
    if len(ids) != len(mask):
        raise ValueError("ids and mask lengths differ")
    if pad_id < 0:
        raise ValueError("pad id must be a reserved vocabulary id")
    if length < 1:
        raise ValueError("length must be positive")
    truncated = len(ids) > length
    out_ids = list(ids[:length])
    out_mask = list(mask[:length])
    missing = length - len(out_ids)
    out_ids.extend([pad_id] * missing)
    out_mask.extend([0] * missing)
    return RenderedExample(tuple(out_ids), tuple(out_mask), source, language,
                           truncated)


def prepare_chat_model(model: TokenizerModel) -> TokenizerModel:
    """Extend a tokenizer with the chat markers (ids appended, stable)."""
    return model.add_special_tokens(CHAT_SPECIALS)


def build_example(conv: Conversation, model: TokenizerModel,
                  length: int = SEQUENCE_LENGTH, include_eot: bool = True,
                  source: str = "", language: str = "") -> RenderedExample:
    """Render, encode, mask, and fix the length of one conversation."""
    for literal in CHAT_SPECIALS + (BOS,):
        if literal not in model.stoi:
            raise ValueError(
                "tokenizer lacks %r; wrap it with prepare_chat_model" % literal)
    text, spans = render_chat_spans(conv)
    ids, offsets = encode_with_offsets(model, text, with_specials=True)
    mask = loss_mask(offsets, spans, include_eot)
    return pad_truncate(ids, mask, model.pad_id, length, source, language)


@dataclass(frozen=True)
class SftExample:
    """A conversation plus the metadata the filters need."""

    conversation: Conversation
    language: Optional[str]
    source: str = ""


def sft_filter(example: SftExample,
               languages: Sequence[str] = SFT_LANGUAGES,
               strings: Sequence[str] = FILTER_STRINGS,
               case_sensitive: bool = True) -> FilterDecision:
    """Language allowlist, then the synthetic-keyword screen."""
    if not example.language:
        raise ValueError("example carries no language tag")
    if example.language not in languages:
        return drop_decision("language", {"language": example.language},
                             "language outside the training set")
    return synthetic_keyword_filter(example.conversation, strings,
                                    case_sensitive)

"""Keyword screening of synthetic instruction data.

Drops examples whose assistant responses mention competitor assistants or
their vendors, so a tuned model does not learn to claim it is one of them.
Only assistant turns are checked; user text may discuss these systems.
"""

from typing import Iterable, Sequence, Tuple

from .records import FilterDecision, drop_decision, keep_decision

FILTER_STRINGS = (
    "OpenAI", "Open AI", "ChatGPT", "Chat GPT",
    "GPT-3", "GPT3", "GPT 3", "GPT-4", "GPT4", "GPT 4",
    "GPT-3.5", "GPT3.5", "GPT 3.5",
    "BingChat", "Bing Chat", "LAION",
    "Open Assistant", "OpenAssistant",
    "BARD", "PaLM", "Gemini", "Gemma", "Google AI",
    "Anthropic", "Claude", "LLaMA", "Meta AI",
    "Mixtral", "Mistral",
)


def _iter_turns(example) -> Iterable[Tuple[str, str]]:
    turns = getattr(example, "turns", example)
    for turn in turns:
        if isinstance(turn, dict):
            yield turn["role"], turn["content"]
        elif isinstance(turn, (tuple, list)):
            role, content = turn
            yield role, content
        else:
            yield turn.role, turn.content


def synthetic_keyword_filter(example,
                             strings: Sequence[str] = FILTER_STRINGS,
                             case_sensitive: bool = True) -> FilterDecision:
    """Drop iff any assistant response contains any of the strings.

    Matching is plain substring containment, case-sensitive by default
    (so "gemma" in prose survives while the product name "Gemma" does not).
    """
    saw_assistant = False
    for role, content in _iter_turns(example):
        if role != "assistant":
            continue
        saw_assistant = True
        haystack = content if case_sensitive else content.lower()
        for needle in strings:
            probe = needle if case_sensitive else needle.lower()
            if probe in haystack:
                return drop_decision(
                    "keyword", {"matched": 1.0},
                    "assistant response contains %r" % needle)
    if not saw_assistant:
        raise ValueError("example has no assistant turn")
    return keep_decision("keyword")

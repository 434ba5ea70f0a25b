"""Corpus curation and tokenization toolkit.

Modules:
    records    document schema, language tags, streaming JSONL I/O
    ngram      interpolated Kneser-Ney n-gram models and perplexity
    gates      perplexity / OCR / language-confidence quality gates
    webrules   C4-style and Gopher-style heuristics, repetition filter
    pii        email and IPv4 redaction with seeded synthetic replacements
    cleanup    per-source cleaning rules
    keywords   synthetic-data keyword filter for instruction data
    webselect  URL selection: domain overlap, blacklists, robots opt-out
    dedup      MinHash/LSH near-duplicate detection per partition
    tokenizer  constrained BPE with byte fallback, fertility benchmarks
    align      parallel-data splitting and pair rendering
    mixplan    composition, epochs, upsampling, schedules, layouts
    sft        chat-template rendering, loss masks, fixed-length examples
    niah       needle-in-a-haystack probe generation and scoring
    pipeline   declarative multi-stage runs with manifests
    cli        command-line entry points
"""

__version__ = "0.1.0"

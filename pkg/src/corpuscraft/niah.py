"""Long-context retrieval probes: plant a known sentence in distractor text.

Builds prompts over a token-length by insertion-depth grid, exports them for
any model runner, and scores the returned completions by content-word recall.
No inference happens here; the harness only generates and grades.
"""

import json
import math
import random
import re
from dataclasses import dataclass
from importlib import resources
from typing import Iterable, Optional, Sequence, Tuple

from .tokenizer import TokenizerModel, count_tokens

NEEDLE = ("The best thing to do in San Francisco is eat a sandwich and "
          "sit in Dolores Park on a sunny day.")
EXPECTED = "eat a sandwich and sit in Dolores Park on a sunny day."
INSTRUCTION = ("\n\nBased only on the passage above, complete the following "
               "statement. The best thing to do in San Francisco is")

# 12 log-spaced lengths covering both the short and the extended context
# regimes, frozen so case ids stay stable across releases.
DEFAULT_LENGTHS = tuple(round(1000 * 36 ** (i / 11)) for i in range(12))
DEFAULT_DEPTHS = tuple(i / 10 for i in range(11))
DEFAULT_THRESHOLD = 0.8
LENGTH_TOLERANCE = 0.02

STOP_WORDS = frozenset("""
    a an the and or but if then than that this these those is are was were
    be been being am do does did done have has had having to of in on at by
    for with from as it its not no nor so such i you he she we they them
    him her his their our your my me us there here when where which who
    whom whose what why how all any both each few more most other some only
    own same too very can could will would shall should may might must
""".split())

_WORD_RE = re.compile(r"[A-Za-z0-9']+")
_SENTENCE_SPLIT_RE = re.compile(r"(?<=[.!?])\s+")


def _words(text: str) -> list:
    return [w.lower() for w in _WORD_RE.findall(text)]


def content_units(text: str, stop_words: frozenset = STOP_WORDS) -> tuple:
    """Distinct scoring units of a sentence: stop-words dropped, runs of
    adjacent capitalized words fused into one multi-word name unit.

    Each unit is a tuple of lowercased words; single words are 1-tuples.
    """
    raw = _WORD_RE.findall(text)
    units = []
    i = 0
    while i < len(raw):
        word = raw[i]
        if word[0].isupper() and word.lower() not in stop_words:
            j = i
            while (j < len(raw) and raw[j][0].isupper()
                   and raw[j].lower() not in stop_words):
                j += 1
            if j - i >= 2:
                units.append(tuple(w.lower() for w in raw[i:j]))
                i = j
                continue
        if word.lower() not in stop_words:
            units.append((word.lower(),))
        i += 1
    seen = set()
    distinct = []
    for unit in units:
        if unit not in seen:
            seen.add(unit)
            distinct.append(unit)
    return tuple(distinct)


def score(response: str, expected: str = EXPECTED,
          stop_words: frozenset = STOP_WORDS) -> float:
    """Recall of the expected answer's content units in the response.

    Order-insensitive and case-insensitive; a multi-word name counts only
    when its words appear adjacent in the response.
    """
    units = content_units(expected, stop_words)
    if not units:
        raise ValueError("expected answer has no content words to score")
    seq = _words(response)
    seen = set(seq)
    hits = 0
    for unit in units:
        if len(unit) == 1:
            if unit[0] in seen:
                hits += 1
        else:
            n = len(unit)
            if any(tuple(seq[k:k + n]) == unit
                   for k in range(len(seq) - n + 1)):
                hits += 1
    return hits / len(units)


def needle_words(needle: str = NEEDLE,
                 stop_words: frozenset = STOP_WORDS) -> frozenset:
    """Every word of every content unit; the filler screen bans these."""
    flat = set()
    for unit in content_units(needle, stop_words):
        flat.update(unit)
    return frozenset(flat)


@dataclass(frozen=True)
class NiahGrid:
    """Axes of the probe sweep plus the distractor corpus label."""
    lengths: tuple
    depths: tuple
    filler_source: str = "bundled-essays"

    def __post_init__(self):
        if not self.lengths or not self.depths:
            raise ValueError("grid axes must be non-empty")
        if list(self.lengths) != sorted(set(self.lengths)):
            raise ValueError("lengths must be strictly ascending")
        if list(self.depths) != sorted(set(self.depths)):
            raise ValueError("depths must be strictly ascending")
        for length in self.lengths:
            if not isinstance(length, int) or length < 1:
                raise ValueError("lengths must be positive integers")
        for depth in self.depths:
            if not 0.0 <= depth <= 1.0:
                raise ValueError("depths must lie in [0, 1]")
        object.__setattr__(self, "lengths", tuple(self.lengths))
        object.__setattr__(self, "depths", tuple(self.depths))


def default_grid() -> NiahGrid:
    return NiahGrid(DEFAULT_LENGTHS, DEFAULT_DEPTHS)


@dataclass(frozen=True)
class NiahCase:
    """One generated probe: a prompt hiding the needle at a known depth."""
    case_id: str
    context_length_tokens: int
    depth_fraction: float
    needle: str
    prompt: str
    expected: str

    def __post_init__(self):
        if not self.case_id:
            raise ValueError("case_id must be non-empty")
        if self.context_length_tokens < 1:
            raise ValueError("context_length_tokens must be positive")
        if not 0.0 <= self.depth_fraction <= 1.0:
            raise ValueError("depth_fraction must lie in [0, 1]")
        if not self.needle or not self.expected:
            raise ValueError("needle and expected must be non-empty")
        occurrences = self.prompt.count(self.needle)
        if occurrences != 1:
            raise ValueError("needle must occur exactly once in the prompt, "
                             "found %d" % occurrences)


def load_filler(path=None) -> str:
    """Bundled distractor essay, or any substitute text file."""
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            return fh.read()
    ref = resources.files("corpuscraft.data").joinpath("niah_filler.txt")
    return ref.read_text(encoding="utf-8")


def filler_sentences(filler: str, banned: Optional[frozenset] = None) -> tuple:
    """Sentence pool for haystacks: split, normalize spacing, and drop any
    sentence sharing a word with the needle's content units."""
    if banned is None:
        banned = needle_words()
    pool = []
    for line in filler.splitlines():
        for piece in _SENTENCE_SPLIT_RE.split(line):
            sentence = " ".join(piece.split())
            if not sentence or sentence[-1] not in ".!?":
                continue
            if set(_words(sentence)) & banned:
                continue
            pool.append(sentence)
    return tuple(pool)


def _case_id(length: int, depth: float) -> str:
    return "L%d-d%s" % (length, format(depth, "g"))


def build_case(filler, length: int, depth: float, model: TokenizerModel,
               seed=0, needle: str = NEEDLE, instruction: str = INSTRUCTION,
               expected: str = EXPECTED,
               tolerance: float = LENGTH_TOLERANCE) -> NiahCase:
    """Assemble a probe of ~length tokens with the needle at depth.

    Filler sentences are drawn in seeded shuffled passes (no sentence
    repeats until the whole pool has been used once) and the final gap is
    closed with the best-fitting sentence, so the measured prompt length
    stays within the tolerance band. The needle goes to the sentence
    boundary whose token offset is nearest depth * length.
    """
    if not 0.0 <= depth <= 1.0:
        raise ValueError("depth must lie in [0, 1]")
    if isinstance(filler, str):
        pool = filler_sentences(filler)
    else:
        pool = filler_sentences("\n".join(filler))
    if not pool:
        raise ValueError("filler has no usable sentences after screening")

    sep_cost = count_tokens(model, " ")
    costs = [count_tokens(model, s) for s in pool]
    overhead = count_tokens(model, needle) + count_tokens(model, instruction)
    budget = length - overhead
    if budget < 0:
        raise ValueError("context_length_tokens %d is smaller than needle "
                         "plus instruction (%d tokens)" % (length, overhead))

    rng = random.Random("%s|%d|%s" % (seed, length, format(depth, "g")))
    max_piece = max(costs) + sep_cost
    chosen = []
    total = 0
    order = []
    while True:
        gap = budget - total
        if gap <= 0:
            break
        if gap >= max_piece:
            if not order:
                order = list(range(len(pool)))
                rng.shuffle(order)
            idx = order.pop()
        else:
            idx = None
            best_miss = gap
            for j in range(len(pool)):
                miss = abs(gap - (costs[j] + sep_cost))
                if miss < best_miss:
                    idx = j
                    best_miss = miss
            if idx is None:
                break
        chosen.append(idx)
        total += costs[idx] + sep_cost

    target = depth * length
    insert_at = 0
    best_miss = target
    prefix = 0
    for i, idx in enumerate(chosen):
        prefix += costs[idx] + sep_cost
        if abs(prefix - target) < best_miss:
            best_miss = abs(prefix - target)
            insert_at = i + 1
    parts = ([pool[j] for j in chosen[:insert_at]] + [needle]
             + [pool[j] for j in chosen[insert_at:]])
    prompt = " ".join(parts) + instruction

    measured = count_tokens(model, prompt)
    low = math.ceil(length * (1 - tolerance))
    high = math.floor(length * (1 + tolerance))
    if not low <= measured <= high:
        raise ValueError("assembled prompt measures %d tokens, outside "
                         "[%d, %d] for target %d; filler too short or too "
                         "coarse" % (measured, low, high, length))
    return NiahCase(_case_id(length, depth), length, depth, needle,
                    prompt, expected)


def build_grid(filler, grid: NiahGrid, model: TokenizerModel,
               seed=0) -> tuple:
    """One case per (length, depth) cell, deterministic in the seed."""
    cases = []
    for length in grid.lengths:
        for depth in grid.depths:
            cases.append(build_case(filler, length, depth, model, seed=seed))
    return tuple(cases)


def export_cases(cases: Iterable[NiahCase], path) -> int:
    """Line-delimited prompt records for an external model runner."""
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for case in cases:
            obj = {"case_id": case.case_id,
                   "context_length_tokens": case.context_length_tokens,
                   "depth_fraction": case.depth_fraction,
                   "prompt": case.prompt,
                   "expected": case.expected}
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")
            n += 1
    return n


@dataclass(frozen=True)
class CaseRef:
    """What the scorer needs from an exported case; no prompt text."""
    case_id: str
    context_length_tokens: int
    depth_fraction: float
    expected: str


def load_cases(path) -> tuple:
    """Reload exported case records for scoring."""
    refs = []
    seen = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            try:
                ref = CaseRef(obj["case_id"], obj["context_length_tokens"],
                              obj["depth_fraction"], obj["expected"])
            except (KeyError, TypeError) as exc:
                raise ValueError("line %d: bad case record (%s)"
                                 % (lineno, exc))
            if ref.case_id in seen:
                raise ValueError("line %d: duplicate case_id %r"
                                 % (lineno, ref.case_id))
            seen.add(ref.case_id)
            refs.append(ref)
    return tuple(refs)


def grid_of_cases(cases: Sequence, filler_source: str = "imported") -> NiahGrid:
    """Smallest grid covering the cases' (length, depth) cells."""
    lengths = tuple(sorted({c.context_length_tokens for c in cases}))
    depths = tuple(sorted({c.depth_fraction for c in cases}))
    return NiahGrid(lengths, depths, filler_source)


def import_responses(path) -> dict:
    """case_id -> response text; extra fields are tolerated, duplicate ids
    are not."""
    responses = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            if not isinstance(obj, dict):
                raise ValueError("line %d: expected an object" % lineno)
            for key in ("case_id", "response"):
                if key not in obj or not isinstance(obj[key], str):
                    raise ValueError("line %d: missing string field %r"
                                     % (lineno, key))
            if obj["case_id"] in responses:
                raise ValueError("line %d: duplicate case_id %r"
                                 % (lineno, obj["case_id"]))
            responses[obj["case_id"]] = obj["response"]
    return responses


@dataclass(frozen=True)
class CaseScore:
    case_id: str
    context_length_tokens: int
    depth_fraction: float
    value: float

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ValueError("score must lie in [0, 1]")


def score_cases(cases: Sequence[NiahCase], responses: dict,
                stop_words: frozenset = STOP_WORDS) -> tuple:
    """Grade every case; a case without a response is an error."""
    missing = sorted(c.case_id for c in cases if c.case_id not in responses)
    if missing:
        raise ValueError("no response for cases: %s" % ", ".join(missing))
    out = []
    for case in cases:
        value = score(responses[case.case_id], case.expected, stop_words)
        out.append(CaseScore(case.case_id, case.context_length_tokens,
                             case.depth_fraction, value))
    return tuple(out)


@dataclass(frozen=True)
class Heatmap:
    """Mean score per grid cell; rows are lengths, columns are depths."""
    lengths: tuple
    depths: tuple
    values: tuple

    def __post_init__(self):
        if len(self.values) != len(self.lengths):
            raise ValueError("one value row per length required")
        for row in self.values:
            if len(row) != len(self.depths):
                raise ValueError("one value per depth required")

    def value_at(self, length: int, depth: float) -> float:
        return self.values[self.lengths.index(length)][
            self.depths.index(depth)]


def heatmap(results: Iterable[CaseScore], grid: NiahGrid) -> Heatmap:
    """Aggregate scores onto the grid; every cell must be populated."""
    cells = {}
    for result in results:
        key = (result.context_length_tokens, result.depth_fraction)
        if key[0] not in grid.lengths or key[1] not in grid.depths:
            raise ValueError("result for cell L=%d d=%s is outside the grid"
                             % (key[0], format(key[1], "g")))
        cells.setdefault(key, []).append(result.value)
    missing = [(length, depth) for length in grid.lengths
               for depth in grid.depths if (length, depth) not in cells]
    if missing:
        labels = ", ".join("L=%d d=%s" % (length, format(depth, "g"))
                           for length, depth in missing)
        raise ValueError("missing heatmap cells: %s" % labels)
    rows = tuple(tuple(sum(cells[(length, depth)]) / len(cells[(length, depth)])
                       for depth in grid.depths)
                 for length in grid.lengths)
    return Heatmap(grid.lengths, grid.depths, rows)


def write_heatmap_csv(hm: Heatmap, path) -> None:
    import csv
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["context_length_tokens"]
                        + [format(d, "g") for d in hm.depths])
        for length, row in zip(hm.lengths, hm.values):
            writer.writerow([length] + [format(v, ".6f") for v in row])


def effective_window(hm: Heatmap,
                     threshold: float = DEFAULT_THRESHOLD) -> int:
    """Largest length whose worst depth still clears the threshold.

    Returns 0 when no row passes.
    """
    passing = [length for length, row in zip(hm.lengths, hm.values)
               if min(row) >= threshold]
    return max(passing) if passing else 0

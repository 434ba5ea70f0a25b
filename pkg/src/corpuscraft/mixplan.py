"""Training-mix accounting and schedule planning.

Everything here is bookkeeping ahead of a training run: how many tokens each
corpus contributes, how often each corpus is repeated, how long documents are
upsampled, how the batch size ramps up, what the learning rate is at any
point, and how GPUs are factored into a 3D parallel layout. Token counts use
decimal arithmetic so published three-decimal figures reproduce exactly;
sampling shares use exact fractions.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction
from importlib.resources import files
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

ALLOWED_EPOCHS = (
    Decimal("1"), Decimal("1.5"), Decimal("2"), Decimal("2.5"), Decimal("3"),
)

# batch rampup defaults
BATCH_START = 256
BATCH_END = 1024
BATCH_STEP = 64
RAMPUP_HORIZON = 10_000_000  # samples

# learning-rate defaults for the three run phases
MAX_LR = 3e-4
FINAL_LR = 3e-5
WARMUP_SAMPLES = 2_000_000
CONTEXT_LR = 2e-5
ANNEAL_START_LR = 3e-5

_QUANTITIES = ("m_docs", "b_words", "b_tokens", "b_chars")


@dataclass(frozen=True)
class CompositionRow:
    """One corpus slice: counts in millions of docs and billions otherwise."""

    category: str
    dataset: str
    language: str
    m_docs: Decimal
    b_words: Decimal
    b_tokens: Decimal
    b_chars: Decimal

    def __post_init__(self):
        for name in _QUANTITIES:
            if getattr(self, name) < 0:
                raise ValueError(
                    "negative %s for %s/%s" % (name, self.dataset, self.language))


@dataclass(frozen=True)
class CompositionTable:
    rows: Tuple[CompositionRow, ...]

    def languages(self) -> List[str]:
        seen: List[str] = []
        for row in self.rows:
            if row.language not in seen:
                seen.append(row.language)
        return seen


def load_composition(path: Optional[str] = None) -> CompositionTable:
    """Load the composition CSV; the bundled table when no path is given."""
    if path is None:
        raw = (files("corpuscraft") / "data" / "composition.csv").read_text("utf-8")
    else:
        with open(path, "r", encoding="utf-8") as handle:
            raw = handle.read()
    rows = []
    for rec in csv.DictReader(io.StringIO(raw)):
        rows.append(CompositionRow(
            category=rec["category"],
            dataset=rec["dataset"],
            language=rec["language"],
            m_docs=Decimal(rec["M_docs"]),
            b_words=Decimal(rec["B_words"]),
            b_tokens=Decimal(rec["B_tokens"]),
            b_chars=Decimal(rec["B_chars"]),
        ))
    return CompositionTable(tuple(rows))


@dataclass(frozen=True)
class QuantityTotals:
    m_docs: Decimal = Decimal(0)
    b_words: Decimal = Decimal(0)
    b_tokens: Decimal = Decimal(0)
    b_chars: Decimal = Decimal(0)

    def add(self, row: CompositionRow) -> "QuantityTotals":
        return QuantityTotals(
            self.m_docs + row.m_docs,
            self.b_words + row.b_words,
            self.b_tokens + row.b_tokens,
            self.b_chars + row.b_chars,
        )


@dataclass(frozen=True)
class CompositionTotals:
    per_language: Dict[str, QuantityTotals]
    total: QuantityTotals


def aggregate_composition(table: CompositionTable) -> CompositionTotals:
    """Exact per-language and grand totals over the composition rows."""
    per_language: Dict[str, QuantityTotals] = {}
    total = QuantityTotals()
    for row in table.rows:
        per_language[row.language] = per_language.get(
            row.language, QuantityTotals()).add(row)
        total = total.add(row)
    return CompositionTotals(per_language, total)


@dataclass(frozen=True)
class EpochEntry:
    dataset: str
    language: Optional[str]  # None matches any language of the dataset
    epochs: Decimal

    def __post_init__(self):
        if self.epochs not in ALLOWED_EPOCHS:
            raise ValueError("epoch multiplier %s not one of %s"
                             % (self.epochs, [str(e) for e in ALLOWED_EPOCHS]))


@dataclass(frozen=True)
class EpochTable:
    entries: Tuple[EpochEntry, ...]

    def multiplier_for(self, dataset: str, language: str) -> Decimal:
        """Exact (dataset, language) entry first, then the dataset-wide one."""
        for entry in self.entries:
            if entry.dataset == dataset and entry.language == language:
                return entry.epochs
        for entry in self.entries:
            if entry.dataset == dataset and entry.language is None:
                return entry.epochs
        raise KeyError("no epoch multiplier for dataset %r" % dataset)


def load_epochs(path: Optional[str] = None) -> EpochTable:
    if path is None:
        raw = (files("corpuscraft") / "data" / "epochs.csv").read_text("utf-8")
    else:
        with open(path, "r", encoding="utf-8") as handle:
            raw = handle.read()
    entries = []
    for rec in csv.DictReader(io.StringIO(raw)):
        entries.append(EpochEntry(
            dataset=rec["dataset"],
            language=rec["language"] or None,
            epochs=Decimal(rec["epochs"]),
        ))
    return EpochTable(tuple(entries))


@dataclass(frozen=True)
class EffectiveRow:
    category: str
    dataset: str
    language: str
    raw_tokens: Decimal
    multiplier: Decimal
    effective_tokens: Decimal


@dataclass(frozen=True)
class EffectivePlan:
    rows: Tuple[EffectiveRow, ...]
    effective_total: Decimal


def apply_epochs(table: CompositionTable, epochs: EpochTable) -> EffectivePlan:
    """Scale every row's token count by its epoch multiplier."""
    rows = []
    total = Decimal(0)
    for row in table.rows:
        try:
            multiplier = epochs.multiplier_for(row.dataset, row.language)
        except KeyError:
            raise ValueError(
                "dataset %r (%s) has no epoch multiplier"
                % (row.dataset, row.language))
        effective = row.b_tokens * multiplier
        rows.append(EffectiveRow(row.category, row.dataset, row.language,
                                 row.b_tokens, multiplier, effective))
        total += effective
    return EffectivePlan(tuple(rows), total)


def write_epoch_plan(plan: EffectivePlan, path: str) -> None:
    """Dump the per-row plan with each row's share of the effective total."""
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["dataset", "language", "raw_tokens", "multiplier",
                         "effective_tokens", "share"])
        for row in plan.rows:
            share = (row.effective_tokens / plan.effective_total
                     if plan.effective_total else Decimal(0))
            writer.writerow([row.dataset, row.language, str(row.raw_tokens),
                             str(row.multiplier), str(row.effective_tokens),
                             str(share)])


@dataclass(frozen=True)
class LongDocSplit:
    """Token subtotals for one dataset, split at the context-length boundary."""

    dataset: str
    short_tokens: Decimal
    long_tokens: Decimal

    def __post_init__(self):
        if self.short_tokens < 0 or self.long_tokens < 0:
            raise ValueError("negative token subtotal for %r" % self.dataset)
        if self.short_tokens == 0 and self.long_tokens == 0:
            raise ValueError("dataset %r has no tokens at all" % self.dataset)


@dataclass(frozen=True)
class UpsampleBucket:
    dataset: str
    bucket: str  # short | long
    raw_tokens: Decimal
    factor: int
    weight: Fraction
    share_within: Fraction
    share_overall: Fraction


@dataclass(frozen=True)
class UpsamplePlan:
    buckets: Tuple[UpsampleBucket, ...]

    def dataset_share(self, dataset: str) -> Fraction:
        return sum((b.share_overall for b in self.buckets
                    if b.dataset == dataset), Fraction(0))


def long_doc_upsample(splits: Sequence[LongDocSplit],
                      factor: int = 10) -> UpsamplePlan:
    """Reweight sampling so documents past the context length count extra.

    Within each dataset the long bucket's token mass is multiplied by the
    factor; shares are then recomputed both within the dataset and over the
    whole corpus. A dataset with no long documents is left unchanged.
    """
    if factor < 1:
        raise ValueError("upsample factor must be at least 1")
    seen = set()
    for split in splits:
        if split.dataset in seen:
            raise ValueError("duplicate split for dataset %r" % split.dataset)
        seen.add(split.dataset)
    weights = []
    for split in splits:
        short_w = Fraction(split.short_tokens)
        long_w = Fraction(split.long_tokens) * factor
        weights.append((split, short_w, long_w))
    grand = sum(short_w + long_w for _, short_w, long_w in weights)
    buckets = []
    for split, short_w, long_w in weights:
        within_total = short_w + long_w
        for bucket, raw, weight in (("short", split.short_tokens, short_w),
                                    ("long", split.long_tokens, long_w)):
            buckets.append(UpsampleBucket(
                dataset=split.dataset,
                bucket=bucket,
                raw_tokens=raw,
                factor=1 if bucket == "short" else factor,
                weight=weight,
                share_within=weight / within_total,
                share_overall=weight / grand if grand else Fraction(0),
            ))
    return UpsamplePlan(tuple(buckets))


def batch_rampup(consumed_samples: int, start: int = BATCH_START,
                 end: int = BATCH_END, step: int = BATCH_STEP,
                 horizon: int = RAMPUP_HORIZON) -> int:
    """Staircase batch size: equal-duration increments of one step each.

    The increment count is (end-start)/step; increment k completes once
    k/n_steps of the horizon has been consumed, so the midpoint of the
    default ramp lands exactly on 640 and the end value holds from the
    horizon onward.
    """
    if start < 1 or end < start:
        raise ValueError("need 1 <= start <= end")
    if step < 1 or (end - start) % step != 0:
        raise ValueError(
            "batch range %d..%d is not a whole number of %d-size steps"
            % (start, end, step))
    if horizon < 1:
        raise ValueError("horizon must be positive")
    if consumed_samples < 0:
        raise ValueError("consumed sample count cannot be negative")
    n_steps = (end - start) // step
    if n_steps == 0:
        return start
    done = min(n_steps, consumed_samples * n_steps // horizon)
    return start + step * done


CURVE_KINDS = ("batch_rampup", "lr_warmup_cosine", "lr_constant", "lr_linear")


@dataclass(frozen=True)
class ScheduleCurve:
    """A piecewise schedule over consumed samples (or steps)."""

    kind: str
    horizon: int
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in CURVE_KINDS:
            raise ValueError("unknown curve kind %r" % self.kind)
        if self.horizon < 1:
            raise ValueError("curve horizon must be positive")

    def covers(self, position: int) -> bool:
        return 0 <= position <= self.horizon


def warmup_cosine_curve(horizon: int, max_lr: float = MAX_LR,
                        final_lr: float = FINAL_LR,
                        warmup: int = WARMUP_SAMPLES) -> ScheduleCurve:
    if not 0 < warmup < horizon:
        raise ValueError("warmup must fall strictly inside the horizon")
    return ScheduleCurve("lr_warmup_cosine", horizon,
                         {"max_lr": max_lr, "final_lr": final_lr,
                          "warmup": warmup})


def constant_curve(horizon: int, lr: float = CONTEXT_LR) -> ScheduleCurve:
    return ScheduleCurve("lr_constant", horizon, {"lr": lr})


def linear_anneal_curve(horizon: int, start_lr: float = ANNEAL_START_LR,
                        end_lr: float = 0.0) -> ScheduleCurve:
    return ScheduleCurve("lr_linear", horizon,
                         {"start_lr": start_lr, "end_lr": end_lr})


def rampup_curve(horizon: int = RAMPUP_HORIZON, start: int = BATCH_START,
                 end: int = BATCH_END, step: int = BATCH_STEP) -> ScheduleCurve:
    # validate eagerly so a bad range fails at construction time
    batch_rampup(0, start, end, step, horizon)
    return ScheduleCurve("batch_rampup", horizon,
                         {"start": start, "end": end, "step": step})


def curve_value(curve: ScheduleCurve, position: int) -> float:
    """Evaluate any curve; positions beyond the horizon clamp to the end."""
    if position < 0:
        raise ValueError("position cannot be negative")
    if curve.kind == "batch_rampup":
        p = curve.params
        return float(batch_rampup(position, p["start"], p["end"], p["step"],
                                  curve.horizon))
    clamped = min(position, curve.horizon)
    p = curve.params
    if curve.kind == "lr_constant":
        return p["lr"]
    if curve.kind == "lr_linear":
        frac = clamped / curve.horizon
        return p["start_lr"] + (p["end_lr"] - p["start_lr"]) * frac
    warmup = p["warmup"]
    if clamped <= warmup:
        return p["max_lr"] * clamped / warmup
    frac = (clamped - warmup) / (curve.horizon - warmup)
    span = p["max_lr"] - p["final_lr"]
    return p["final_lr"] + span * (1.0 + math.cos(math.pi * frac)) / 2.0


def lr_at(curve: ScheduleCurve, position: int) -> float:
    if curve.kind == "batch_rampup":
        raise ValueError("batch curve holds batch sizes, not learning rates")
    return curve_value(curve, position)


def dump_schedule(path: str, batch_curve: ScheduleCurve,
                  lr_curve: ScheduleCurve, positions: Iterable[int]) -> None:
    """Write (position, batch_size, lr, clamped) rows for plotting or review."""
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["position", "batch_size", "lr", "clamped"])
        for position in positions:
            clamped = not lr_curve.covers(position)
            writer.writerow([position,
                             int(curve_value(batch_curve, position)),
                             repr(lr_at(lr_curve, position)),
                             int(clamped)])


@dataclass(frozen=True)
class ParallelLayout:
    n_gpus: int
    tp: int
    pp: int
    dp: int

    def __post_init__(self):
        for name in ("n_gpus", "tp", "pp", "dp"):
            if getattr(self, name) < 1:
                raise ValueError("%s must be a positive integer" % name)
        if self.tp * self.pp * self.dp != self.n_gpus:
            raise ValueError("tp*pp*dp = %d does not equal n_gpus = %d"
                             % (self.tp * self.pp * self.dp, self.n_gpus))


def _valid_factorizations(n_gpus: int) -> List[Tuple[int, int]]:
    pairs = []
    for tp in range(1, n_gpus + 1):
        if n_gpus % tp != 0:
            continue
        for pp in range(1, n_gpus // tp + 1):
            if (n_gpus // tp) % pp == 0:
                pairs.append((tp, pp))
    return pairs


def layout(n_gpus: int, tp: int, pp: int) -> ParallelLayout:
    """Derive data parallelism from the GPU count and the other two axes."""
    if tp < 1 or pp < 1:
        raise ValueError("tp and pp must be at least 1")
    if n_gpus < 1:
        raise ValueError("n_gpus must be at least 1")
    cells = tp * pp
    if n_gpus % cells != 0:
        raise ValueError(
            "tp*pp = %d does not divide n_gpus = %d; valid (tp, pp) pairs: %s"
            % (cells, n_gpus,
               ", ".join(str(p) for p in _valid_factorizations(n_gpus))))
    return ParallelLayout(n_gpus, tp, pp, n_gpus // cells)


@dataclass(frozen=True)
class MixEntry:
    """One annealing-mix line: a dataset, its languages, and its weight."""

    dataset: str
    languages: Tuple[str, ...]
    weight: Decimal

    def __post_init__(self):
        if not self.languages:
            raise ValueError("mix entry %r lists no languages" % self.dataset)
        if self.weight <= 0:
            raise ValueError("mix entry %r has nonpositive weight" % self.dataset)


@dataclass(frozen=True)
class AnnealingMix:
    entries: Tuple[MixEntry, ...]
    per_language: Dict[str, Decimal]


def annealing_mix(entries: Sequence[MixEntry],
                  tolerance: Decimal = Decimal("1e-9")) -> AnnealingMix:
    """Validate mix weights and attribute them to languages.

    Weights must sum to one within the tolerance. A multi-language entry
    splits its weight evenly across its languages.
    """
    total = sum((entry.weight for entry in entries), Decimal(0))
    residual = total - 1
    if abs(residual) > tolerance:
        raise ValueError("mix weights sum to %s, residual %s" % (total, residual))
    per_language: Dict[str, Decimal] = {}
    for entry in entries:
        piece = entry.weight / len(entry.languages)
        for code in entry.languages:
            per_language[code] = per_language.get(code, Decimal(0)) + piece
    return AnnealingMix(tuple(entries), per_language)


def load_annealing_mix(path: Optional[str] = None) -> AnnealingMix:
    if path is None:
        raw = (files("corpuscraft") / "data" / "annealing_mix.csv").read_text("utf-8")
    else:
        with open(path, "r", encoding="utf-8") as handle:
            raw = handle.read()
    entries = []
    for rec in csv.DictReader(io.StringIO(raw)):
        entries.append(MixEntry(
            dataset=rec["dataset"],
            languages=tuple(rec["languages"].split()),
            weight=Decimal(rec["weight"]),
        ))
    return annealing_mix(entries)

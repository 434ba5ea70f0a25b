"""Score-based keep/drop gates for corpus documents.

Each gate is a pure function from a document (or pre-computed scores) and a
config to a FilterDecision. Boundary behavior is inclusive on the keep side:
a score exactly equal to a threshold is kept.
"""

from dataclasses import dataclass, field
from typing import Optional

from .ngram import KNModel, perplexity
from .records import DocumentRecord, FilterDecision, drop_decision, keep_decision

# Default per-source perplexity ceilings for OCR-heavy corpora. Operators
# re-calibrate these against their own language model; see the calibrate
# command.
DEFAULT_OCR_PERPLEXITY_THRESHOLDS = {
    "AmericanStories": 2310.0,
    "Eurovoc": 1500.0,
    "HAL": 930.0,
    "Theses": 2000.0,
}


@dataclass(frozen=True)
class ThresholdTable:
    """Map from source name to a perplexity ceiling."""

    thresholds: dict = field(
        default_factory=lambda: dict(DEFAULT_OCR_PERPLEXITY_THRESHOLDS))

    def __post_init__(self):
        for source, value in self.thresholds.items():
            if not (isinstance(value, (int, float)) and value > 0):
                raise ValueError(
                    "threshold for %r must be positive, got %r" % (source, value))

    def threshold_for(self, source: str) -> float:
        if source not in self.thresholds:
            raise KeyError("no perplexity threshold configured for source %r"
                           % source)
        return float(self.thresholds[source])


@dataclass(frozen=True)
class GateConfig:
    language_confidence_min: float = 0.65
    perplexity_band: tuple = (10.0, 1000.0)
    ocr_score_min: int = 90

    def __post_init__(self):
        low, high = self.perplexity_band
        if not low < high:
            raise ValueError("perplexity band low must be below high")
        if not 0.0 <= self.language_confidence_min <= 1.0:
            raise ValueError("language confidence bound must be in [0, 1]")
        if not 0 <= self.ocr_score_min <= 100:
            raise ValueError("ocr score bound must be in [0, 100]")


DEFAULT_GATE_CONFIG = GateConfig()


def _score(doc: DocumentRecord, model: Optional[KNModel],
           ppl: Optional[float], mode: str) -> float:
    if ppl is not None:
        return float(ppl)
    if model is None:
        raise ValueError("either a language model or a precomputed "
                         "perplexity is required")
    return perplexity(model, doc.text, mode=mode).value


def threshold_gate(doc: DocumentRecord, model: Optional[KNModel],
                   table: ThresholdTable,
                   ppl: Optional[float] = None,
                   mode: str = "document") -> FilterDecision:
    """Keep a document iff its perplexity is at or under its source ceiling."""
    threshold = table.threshold_for(doc.source)
    score = _score(doc, model, ppl, mode)
    measurements = {"perplexity": score, "threshold": threshold}
    if score <= threshold:
        return keep_decision("perplexity_threshold", measurements)
    return drop_decision(
        "perplexity_threshold", measurements,
        "perplexity %.3f over %s ceiling %.3f" % (score, doc.source, threshold))


def gallica_gate_v11(chunk: str, lang: str, lang_confidence: float, ppl: float,
                     cfg: GateConfig = DEFAULT_GATE_CONFIG) -> FilterDecision:
    """Digitized-press chunk gate: French, confident, mid-band perplexity.

    The chunk text itself is not inspected; it is part of the signature so
    callers keep the scored unit and its scores together.
    """
    low, high = cfg.perplexity_band
    measurements = {"lang_confidence": float(lang_confidence),
                    "perplexity": float(ppl)}
    if lang != "fr":
        return drop_decision("language", measurements,
                             "language %r is not fr" % lang)
    if lang_confidence < cfg.language_confidence_min:
        return drop_decision(
            "lang_confidence", measurements,
            "confidence %.3f under %.2f" % (lang_confidence,
                                            cfg.language_confidence_min))
    if ppl < low:
        return drop_decision("perplexity_low", measurements,
                             "perplexity %.3f under %.1f" % (ppl, low))
    if ppl > high:
        return drop_decision("perplexity_high", measurements,
                             "perplexity %.3f over %.1f" % (ppl, high))
    return keep_decision("gallica_gate", measurements)


def ocr_score_gate_v12(doc: DocumentRecord,
                       cfg: GateConfig = DEFAULT_GATE_CONFIG) -> FilterDecision:
    """Keep iff the document's 0-100 OCR quality score meets the floor."""
    extra = doc.extra_fields()
    if "ocr_score" not in extra:
        raise ValueError("document %s carries no ocr_score" % doc.id)
    score = float(extra["ocr_score"])
    measurements = {"ocr_score": score, "minimum": float(cfg.ocr_score_min)}
    if score >= cfg.ocr_score_min:
        return keep_decision("ocr_score", measurements)
    return drop_decision("ocr_score", measurements,
                         "ocr score %.1f under %d" % (score, cfg.ocr_score_min))


def web_perplexity_band(doc: DocumentRecord, model: Optional[KNModel] = None,
                        cfg: GateConfig = DEFAULT_GATE_CONFIG,
                        ppl: Optional[float] = None,
                        mode: str = "document") -> FilterDecision:
    """Drop web documents whose perplexity falls outside the band.

    Both band edges are keep-inclusive: exactly low or exactly high stays.
    """
    low, high = cfg.perplexity_band
    score = _score(doc, model, ppl, mode)
    measurements = {"perplexity": score, "band_low": low, "band_high": high}
    if score < low:
        return drop_decision("perplexity_low", measurements,
                             "perplexity %.3f under %.1f" % (score, low))
    if score > high:
        return drop_decision("perplexity_high", measurements,
                             "perplexity %.3f over %.1f" % (score, high))
    return keep_decision("perplexity_band", measurements)

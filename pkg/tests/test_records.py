import gzip
import json
import random

import pytest

from corpuscraft.records import (
    ISO_CODES,
    SOURCES,
    DocumentRecord,
    LanguageTag,
    RecordParseError,
    ValidationError,
    find_duplicate_keys,
    pack_signals,
    parse_language_tag,
    read_records,
    record_from_obj,
    validate_record,
    write_records,
)

# A published-style newspaper sample with every metadata field populated,
# including the nested serialized payloads.
NEWSPAPER_SAMPLE = {
    "text": "DROPOSALS FOR THE ERECTION AMI\na completion of Building, in accordance with…",
    "language": "en",
    "source": "AmericanStories",
    "id": "16_1858-12-04_p3_sn84038814_00279557177_1858120401_0390",
    "url": "",
    "title": "miscellaneous.\n\n\nNOTICE\nTO BUILDERS.",
    "author": "",
    "date": "1858-12-04",
    "quality_signals": "{\"char_count\": 670, \"word_count\": 116, \"ccnet_language_score\": 0.939, \"ccnet_perplexity\": 1389.5, \"fasttext_language\": \"en\"}",
    "extra": "{\"newspaper_name\": \"Daily national Democrat\", \"edition\": \"01\", \"page\": \"p3\"}",
}


def make_record(**overrides) -> DocumentRecord:
    base = dict(
        text="A plain paragraph of text.",
        language=parse_language_tag("en"),
        source="Wikipedia",
        id="doc-1",
    )
    base.update(overrides)
    return DocumentRecord(**base)


class TestLanguageTag:
    def test_natural_codes(self):
        for code in ISO_CODES:
            tag = parse_language_tag(code)
            assert tag.kind == "natural"
            assert tag.serialize() == code

    def test_programming(self):
        tag = parse_language_tag("code:python")
        assert tag.kind == "programming"
        assert tag.name == "python"
        assert tag.serialize() == "code:python"

    def test_pair_order_significant(self):
        tag = parse_language_tag("fr,en")
        assert tag.kind == "pair"
        assert tag.pair == ("fr", "en")
        assert tag.serialize() == "fr,en"
        assert parse_language_tag("en,fr").pair == ("en", "fr")

    def test_unknown_code_rejected(self):
        with pytest.raises(ValidationError):
            parse_language_tag("xx")

    @pytest.mark.parametrize("raw", ["", "code:", "fr,", ",en", "fr,en,de", "fr,xx"])
    def test_malformed_rejected(self, raw):
        with pytest.raises(ValidationError):
            parse_language_tag(raw)

    def test_parse_serialize_identity(self):
        rng = random.Random(7)
        forms = list(ISO_CODES)
        forms += ["code:" + name for name in ("python", "c++", "go", "rust")]
        forms += [a + "," + b for a in ISO_CODES for b in ISO_CODES]
        for _ in range(200):
            raw = rng.choice(forms)
            assert parse_language_tag(raw).serialize() == raw


class TestValidateRecord:
    def test_newspaper_sample_keeps(self):
        record = record_from_obj(NEWSPAPER_SAMPLE)
        decision = validate_record(record)
        assert decision.keep
        assert record.signals()["ccnet_perplexity"] == 1389.5
        assert record.extra_fields()["page"] == "p3"

    def test_empty_id_drops(self):
        decision = validate_record(make_record(id=""))
        assert not decision.keep
        assert decision.rule_id == "missing_id"

    def test_unknown_source_drops(self):
        decision = validate_record(make_record(source="FooCorpus"))
        assert not decision.keep
        assert decision.rule_id == "unknown_source"

    def test_control_chars_drop(self):
        decision = validate_record(make_record(text="a\rb"))
        assert decision.rule_id == "control_chars"
        decision = validate_record(make_record(text="a\x00b"))
        assert decision.rule_id == "control_chars"

    def test_bad_nested_payload_drops(self):
        decision = validate_record(make_record(quality_signals="not json"))
        assert decision.rule_id == "bad_quality_signals"
        decision = validate_record(make_record(extra="[1, 2]"))
        assert decision.rule_id == "bad_extra"

    def test_all_violations_reported(self):
        decision = validate_record(make_record(id="", source="Nope", text="x\rx"))
        assert decision.measurements["violations"] == 3.0
        for rule in ("missing_id", "unknown_source", "control_chars"):
            assert rule in decision.reason

    def test_signals_round_trip_losslessly(self):
        payload = {"char_count": 12, "score": 0.25, "lang": "fr"}
        record = make_record(quality_signals=pack_signals(payload))
        assert record.signals() == payload
        assert json.loads(pack_signals(record.signals())) == payload


class TestSourceRoster:
    def test_roster_closed_and_sorted(self):
        assert len(SOURCES) == 29
        assert list(SOURCES) == sorted(SOURCES)
        assert "AmendementsParlement" in SOURCES
        assert "YouTube" in SOURCES

    def test_unknown_names_rejected(self):
        assert "Stac" not in SOURCES
        assert "FooCorpus" not in SOURCES


class TestStreamIO:
    def test_round_trip_values(self, tmp_path):
        rng = random.Random(11)
        records = []
        for i in range(100):
            optional = {}
            if rng.random() < 0.5:
                optional["url"] = "https://example.com/%d" % i
            if rng.random() < 0.5:
                optional["title"] = "title é%d" % i
            if rng.random() < 0.3:
                optional["quality_signals"] = pack_signals({"word_count": i})
            records.append(make_record(id="doc-%d" % i,
                                       text="body %d — ok" % i,
                                       **optional))
        path = tmp_path / "corpus.jsonl"
        assert write_records(records, path) == 100
        loaded = list(read_records(path))
        assert len(loaded) == 100
        for original, copy in zip(records, loaded):
            assert copy.to_json_obj() == original.to_json_obj()
        assert [r.line_no for r in loaded] == list(range(1, 101))

    def test_gzip_transparent(self, tmp_path):
        path = tmp_path / "corpus.jsonl.gz"
        write_records([make_record()], path)
        with gzip.open(path, "rb") as handle:
            assert handle.read().startswith(b"{")
        assert [r.id for r in read_records(path)] == ["doc-1"]

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        assert list(read_records(path)) == []

    def test_strict_mode_raises_with_diagnostics(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        good = json.dumps(make_record().to_json_obj())
        path.write_text(good + "\n{broken\n" + good + "\n")
        with pytest.raises(RecordParseError) as excinfo:
            list(read_records(path, mode="strict"))
        assert excinfo.value.line_no == 2
        assert excinfo.value.byte_offset == len(good.encode()) + 1

    def test_skip_mode_logs_and_continues(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        good1 = json.dumps(make_record(id="a").to_json_obj())
        good2 = json.dumps(make_record(id="b").to_json_obj())
        path.write_text(good1 + "\nnot json\n" + good2 + "\n")
        errors = []
        loaded = list(read_records(path, mode="skip", errors=errors))
        assert [r.id for r in loaded] == ["a", "b"]
        assert len(errors) == 1 and errors[0].line_no == 2

    def test_unknown_field_rejected(self, tmp_path):
        path = tmp_path / "extra.jsonl"
        obj = make_record().to_json_obj()
        obj["surprise"] = 1
        path.write_text(json.dumps(obj) + "\n")
        with pytest.raises(RecordParseError):
            list(read_records(path))

    def test_strict_write_stops_at_failure(self, tmp_path):
        path = tmp_path / "out.jsonl"
        stream = [make_record(id="a"), make_record(id=""), make_record(id="c")]
        with pytest.raises(ValidationError) as excinfo:
            write_records(stream, path)
        assert "after 1 written" in str(excinfo.value)
        assert [r.id for r in read_records(path)] == ["a"]

    def test_empty_stream(self, tmp_path):
        path = tmp_path / "none.jsonl"
        assert write_records([], path) == 0
        assert path.read_bytes() == b""


def test_duplicate_keys_found_per_partition():
    records = [make_record(id="a"), make_record(id="b"), make_record(id="a")]
    assert find_duplicate_keys(records) == [("Wikipedia", "a")]
    assert find_duplicate_keys(records[:2]) == []

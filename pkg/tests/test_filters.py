import random

import pytest

from corpuscraft.cleanup import clean_source_specific, clean_stream
from corpuscraft.gates import (
    DEFAULT_OCR_PERPLEXITY_THRESHOLDS,
    GateConfig,
    ThresholdTable,
    gallica_gate_v11,
    ocr_score_gate_v12,
    threshold_gate,
    web_perplexity_band,
)
from corpuscraft.keywords import FILTER_STRINGS, synthetic_keyword_filter
from corpuscraft.pii import EMAIL_RE, find_pii, redact_pii
from corpuscraft.records import DocumentRecord, FilterDecision, pack_signals
from corpuscraft.webrules import (
    c4_apply,
    c4_line_filter,
    c4_rules,
    gopher_rules,
    repetition_filter,
)


def make_doc(text, source="Wikipedia", language="en", doc_id="d1", extra=None):
    return DocumentRecord(
        text=text, language=language, source=source, id=doc_id,
        extra=pack_signals(extra) if extra else None)


class TestThresholdGate:
    table = ThresholdTable()

    @pytest.mark.parametrize("source,score,expected", [
        ("HAL", 930.0, "keep"),
        ("HAL", 931.0, "drop"),
        ("AmericanStories", 2310.0, "keep"),
        ("AmericanStories", 2310.5, "drop"),
        ("Eurovoc", 1500.0, "keep"),
        ("Eurovoc", 1500.1, "drop"),
        ("Theses", 2000.0, "keep"),
        ("Theses", 2000.1, "drop"),
    ])
    def test_boundaries(self, source, score, expected):
        doc = make_doc("whatever text", source=source)
        decision = threshold_gate(doc, None, self.table, ppl=score)
        assert decision.verdict == expected
        assert decision.measurements["perplexity"] == score

    def test_low_score_always_keeps(self):
        for source in DEFAULT_OCR_PERPLEXITY_THRESHOLDS:
            doc = make_doc("t", source=source)
            assert threshold_gate(doc, None, self.table, ppl=1.0).keep

    def test_unknown_source(self):
        doc = make_doc("t", source="Wikipedia")
        with pytest.raises(KeyError):
            threshold_gate(doc, None, self.table, ppl=5.0)

    def test_nonpositive_threshold_rejected(self):
        with pytest.raises(ValueError):
            ThresholdTable({"HAL": 0.0})


class TestGallicaGate:
    @pytest.mark.parametrize("lang,conf,ppl,verdict,rule", [
        ("fr", 0.65, 500.0, "keep", None),
        ("fr", 0.64, 500.0, "drop", "lang_confidence"),
        ("en", 0.90, 500.0, "drop", "language"),
        ("fr", 0.90, 5.0, "drop", "perplexity_low"),
        ("fr", 0.90, 9.999, "drop", "perplexity_low"),
        ("fr", 0.90, 10.0, "keep", None),
        ("fr", 0.90, 1000.0, "keep", None),
        ("fr", 0.90, 1000.001, "drop", "perplexity_high"),
        ("fr", 1.0, 100.0, "keep", None),
    ])
    def test_truth_table(self, lang, conf, ppl, verdict, rule):
        decision = gallica_gate_v11("un extrait", lang, conf, ppl)
        assert decision.verdict == verdict
        if rule:
            assert decision.rule_id == rule

    def test_config_validation(self):
        with pytest.raises(ValueError):
            GateConfig(perplexity_band=(1000.0, 10.0))
        with pytest.raises(ValueError):
            GateConfig(language_confidence_min=1.5)


class TestOcrGate:
    @pytest.mark.parametrize("score,verdict", [
        (90, "keep"), (89, "drop"), (100, "keep"), (0, "drop"), (91, "keep"),
    ])
    def test_boundaries(self, score, verdict):
        doc = make_doc("t", extra={"ocr_score": score})
        assert ocr_score_gate_v12(doc).verdict == verdict

    def test_missing_score(self):
        with pytest.raises(ValueError):
            ocr_score_gate_v12(make_doc("t"))


class TestWebBand:
    @pytest.mark.parametrize("score,verdict,rule", [
        (9.9, "drop", "perplexity_low"),
        (10.0, "keep", None),
        (100.0, "keep", None),
        (1000.0, "keep", None),
        (1000.1, "drop", "perplexity_high"),
    ])
    def test_truth_table(self, score, verdict, rule):
        decision = web_perplexity_band(make_doc("t"), ppl=score)
        assert decision.verdict == verdict
        if rule:
            assert decision.rule_id == rule

    def test_model_path_matches_precomputed(self):
        from corpuscraft.ngram import perplexity, train_kn
        model = train_kn(["the cat sat", "the dog sat", "a cat ran"], order=2)
        doc = make_doc("the cat ran")
        score = perplexity(model, doc.text).value
        via_model = web_perplexity_band(doc, model=model)
        via_value = web_perplexity_band(doc, ppl=score)
        assert via_model.verdict == via_value.verdict
        assert via_model.measurements["perplexity"] == pytest.approx(score)


CLEAN_PARAGRAPH = (
    "The valley was quiet in the early morning. A thin mist hung over the "
    "river and the fields. Farmers walked out to inspect the young wheat. "
    "By noon the sun had burned the mist away. Children played near the "
    "old stone bridge until dusk."
)


class TestC4Rules:
    def test_clean_paragraph_keeps(self):
        assert c4_rules(make_doc(CLEAN_PARAGRAPH)).keep

    def test_line_filter(self):
        text = ("Menu Home About\n"
                "The market opened higher today.\n"
                "\n"
                "Prices fell by noon!\n"
                "click here")
        cleaned, removed = c4_line_filter(text)
        assert removed == 2
        assert "Menu" not in cleaned and "click" not in cleaned
        assert "The market opened higher today." in cleaned

    def test_sentence_count_boundary(self):
        two = "One sentence here. Two sentences here."
        three = "One sentence here. Two sentences here. Three sentences here."
        assert c4_rules(make_doc(two)).rule_id == "sentence_count"
        assert c4_rules(make_doc(three)).keep

    def test_lorem_ipsum(self):
        text = CLEAN_PARAGRAPH + " Lorem Ipsum dolor sit amet."
        decision = c4_rules(make_doc(text))
        assert decision.rule_id == "lorem_ipsum"

    def test_curly_brace(self):
        text = "This is fine. It has three sentences. A brace { appears here."
        assert c4_rules(make_doc(text)).rule_id == "curly_brace"

    def test_policy_phrase(self):
        text = ("We value privacy. Read our cookie policy. "
                "Thanks for visiting today.")
        assert c4_rules(make_doc(text)).rule_id == "policy_phrase"

    def test_badword_is_word_level(self):
        hit = CLEAN_PARAGRAPH + " A badger crossed the road."
        near = CLEAN_PARAGRAPH + " They kept badgering the clerk."
        assert c4_rules(make_doc(hit), badwords=["badger"]).rule_id == "badword"
        assert c4_rules(make_doc(near), badwords=["badger"]).keep

    def test_apply_edits_text(self):
        text = "Navigation menu\n" + CLEAN_PARAGRAPH
        doc, decision = c4_apply(make_doc(text))
        assert decision.keep
        assert doc.text == CLEAN_PARAGRAPH
        assert decision.measurements["lines_removed"] == 1.0

    def test_apply_drop_returns_none(self):
        doc, decision = c4_apply(make_doc("Too short."))
        assert doc is None and not decision.keep


def gopher_doc(text, language="en"):
    return make_doc(text, language=language)


GOOD_SENTENCE = ("the quick brown fox jumps over that lazy dog "
                 "with energy and grace today ")


class TestGopherRules:
    def test_normal_article_keeps(self):
        assert gopher_rules(gopher_doc(GOOD_SENTENCE * 40)).keep

    def test_word_count_boundaries(self):
        words = GOOD_SENTENCE.split()  # 13 words, all rules otherwise clean
        short = " ".join((words * 4)[:49])
        exact = " ".join((words * 4)[:50])
        assert gopher_rules(gopher_doc(short)).rule_id == "word_count"
        assert gopher_rules(gopher_doc(exact)).keep
        assert gopher_rules(gopher_doc("ten words " * 5)).rule_id == "word_count"

    def test_word_count_upper_boundary(self):
        base = "the and " * 50000  # 100000 words of mean length 3
        assert gopher_rules(gopher_doc(base)).keep
        over = base + "extra"
        assert gopher_rules(gopher_doc(over)).rule_id == "word_count"

    def test_mean_word_length(self):
        low = gopher_doc("ab " * 60)
        high = gopher_doc("abcdefghijk " * 60)
        assert gopher_rules(low).rule_id == "mean_word_length"
        assert gopher_rules(high).rule_id == "mean_word_length"

    def test_symbol_ratio_boundary(self):
        words = GOOD_SENTENCE.split() * 5  # 65 words
        base = " ".join(words[:60])
        at_limit = base + "######"  # 6 hashes over 60 words is exactly 0.1
        over = base + "#######"
        assert gopher_rules(gopher_doc(at_limit)).keep
        assert gopher_rules(gopher_doc(over)).rule_id == "symbol_ratio"

    def test_bullet_fraction_boundary(self):
        bullet = "- nevertheless the station that remains open\n"
        plain = "nevertheless the station that remains open today\n"
        at_limit = bullet * 18 + plain * 2
        over = bullet * 19 + plain * 1
        assert gopher_rules(gopher_doc(at_limit)).keep
        assert gopher_rules(gopher_doc(over)).rule_id == "bullet_fraction"

    def test_ellipsis_fraction_boundary(self):
        dots = "the cat and that dog sat...\n"
        plain = "the cat and that dog sat here\n"
        at_limit = dots * 6 + plain * 14
        over = dots * 7 + plain * 13
        assert gopher_rules(gopher_doc(at_limit)).keep
        assert gopher_rules(gopher_doc(over)).rule_id == "ellipsis_fraction"

    def test_alpha_fraction_boundary(self):
        words = ["word%d" % i for i in range(48)] + ["the", "and"]
        doc = gopher_doc(" ".join(words + ["1234"] * 13))  # 50 alpha of 63
        assert gopher_rules(doc).rule_id == "alpha_fraction"
        exact = gopher_doc(" ".join(words + ["12345678"] * 12))
        # 50 alpha words of 62 total stays above the 0.8 floor
        assert gopher_rules(exact).rule_id != "alpha_fraction"

    def test_stop_words(self):
        no_stops = gopher_doc("cat dog bird house tree " * 12)
        one_stop = gopher_doc("the cat dog bird house " * 12)
        two_stops = gopher_doc("the cat and dog bird " * 12)
        assert gopher_rules(no_stops).rule_id == "stop_words"
        assert gopher_rules(one_stop).rule_id == "stop_words"
        assert gopher_rules(two_stops).keep

    def test_stop_words_french(self):
        fr_ok = gopher_doc("le chat et la souris dans " * 10, language="fr")
        fr_bad = gopher_doc("chat souris maison arbre oiseau " * 10,
                            language="fr")
        assert gopher_rules(fr_ok).keep
        assert gopher_rules(fr_bad).rule_id == "stop_words"

    def test_stop_rule_idle_for_code(self):
        doc = gopher_doc("alpha beta gamma delta epsilon " * 12,
                         language="code:python")
        decision = gopher_rules(doc)
        assert decision.rule_id != "stop_words"

    def test_pair_language_uses_first(self):
        doc = gopher_doc("le chat et la souris dans " * 10, language="fr,en")
        assert gopher_rules(doc).keep


class TestRepetitionFilter:
    def test_repeated_line_drops(self):
        doc = make_doc("the very same line again\n" * 10)
        decision = repetition_filter(doc)
        assert decision.rule_id == "dup_line_fraction"
        assert decision.measurements["dup_line_fraction"] == pytest.approx(0.9)

    def test_distinct_lines_keep(self):
        lines = "\n".join("item%03d note%03d." % (i, i) for i in range(100))
        assert repetition_filter(make_doc(lines)).keep

    def test_line_fraction_boundary(self):
        # duplicate line contributes 15 of 75 line chars: exactly at 0.2.
        # Its 2-grams also repeat twice, covering 12 of 60 word chars: 0.2.
        dup = "aaa bbb ccc ddd"
        uniq = ["eee fff ggg hhh", "iii jjj kkk lll", "mmm nnn ooo ppp"]
        at_limit = "\n".join([dup] + uniq + [dup])
        decision = repetition_filter(make_doc(at_limit))
        assert decision.keep
        assert decision.measurements["dup_line_fraction"] == pytest.approx(0.2)
        assert decision.measurements["top_2gram_fraction"] == pytest.approx(0.2)
        over = "\n".join([dup] + uniq + [dup, dup])  # 30 dup / 90 total
        decision = repetition_filter(make_doc(over))
        assert decision.rule_id == "dup_line_fraction"

    def test_duplicate_paragraph_measured(self):
        para = "first line of text\nsecond line of text"
        doc = make_doc(para + "\n\n" + para + "\n\nfresh closing paragraph")
        decision = repetition_filter(doc)
        assert not decision.keep
        assert decision.measurements["dup_paragraph_fraction"] > 0.2

    def test_top_2gram(self):
        words = ["ab", "cd", "ef", "gh", "ij", "kl", "mn", "op",
                 "ab", "cd", "qr", "st", "uv", "wx", "yz", "zz"]
        text = " ".join(words)
        # brute-force oracle over the sliding 2-gram windows
        counts = {}
        for a, b in zip(words, words[1:]):
            counts[(a, b)] = counts.get((a, b), 0) + 1
        top_pair, top = max(counts.items(), key=lambda kv: kv[1])
        expected = top * (len(top_pair[0]) + len(top_pair[1])) / sum(
            len(w) for w in words)
        assert expected == pytest.approx(0.25)
        decision = repetition_filter(make_doc(text))
        assert decision.measurements["top_2gram_fraction"] == pytest.approx(
            expected)
        assert decision.rule_id == "top_2gram_fraction"
        # four more filler words dilute the same pair to exactly 0.2
        padded = text + " p1 p2 p3 p4"
        assert repetition_filter(make_doc(padded)).keep

    def test_top_2gram_drop(self):
        doc = make_doc("alpha beta " * 30 + "gamma")
        decision = repetition_filter(doc)
        assert decision.rule_id == "top_2gram_fraction"
        assert decision.measurements["top_2gram_fraction"] > 0.2


class TestPii:
    def test_seeded_determinism(self):
        doc = make_doc("contact: a@b.com now")
        assert redact_pii(doc, 7).text == redact_pii(doc, 7).text
        assert "a@b.com" not in redact_pii(doc, 7).text

    def test_per_document_consistency(self):
        doc = make_doc("first 192.168.0.1 then 192.168.0.1 again")
        out = redact_pii(doc, 3).text
        parts = out.split()
        assert parts[1] == parts[3]
        assert parts[1] != "192.168.0.1"

    def test_identity_when_clean(self):
        doc = make_doc("no addresses live here, just 3.14 and v1.2.3")
        assert redact_pii(doc, 1) is doc

    def test_idempotent(self):
        doc = make_doc("mail a@b.com ip 10.0.0.1 mail c.d@e.org")
        once = redact_pii(doc, 11)
        twice = redact_pii(once, 11)
        assert twice.text == once.text

    def test_zero_matches_after_redaction(self):
        doc = make_doc("mix of a@b.co, 8.8.8.8, x.y@z.io and 254.1.2.3 here")
        assert find_pii(redact_pii(doc, 5).text) == []

    @pytest.mark.parametrize("text,n", [
        ("plain a@b.com here", 1),
        ("john.doe+tag@mail.example.co.uk wrote", 1),
        ("no dot a@b here", 0),
        ("doubled a@@b.com here", 0),
        ("ip 1.2.3.4 ok", 1),
        ("ip 256.1.1.1 invalid", 0),
        ("dotted 1.2.3.4.5 run", 0),
        ("version 10.2.3 only", 0),
        ("edge 255.255.255.255 max", 1),
        ("zero 0.0.0.0 min", 1),
        ("ipv6 2001:db8::1 untouched", 0),
    ])
    def test_detector_shapes(self, text, n):
        assert len(find_pii(text)) == n

    def test_ipv6_untouched(self):
        doc = make_doc("host at 2001:db8::1 answered")
        assert redact_pii(doc, 2) is doc

    def test_fuzz_redaction_closes(self):
        rng = random.Random(17)
        fillers = ["report", "due", "friday", "ping", "me", "at", "\n", ", "]
        for trial in range(500):
            parts = []
            for _ in range(rng.randint(1, 8)):
                kind = rng.random()
                if kind < 0.3:
                    parts.append("%s%d@%s.%s" % (
                        rng.choice(["a", "bob", "x.y", "kim_2"]),
                        rng.randint(0, 99),
                        rng.choice(["mail", "ex-1", "d.e"]),
                        rng.choice(["com", "org", "fr"])))
                elif kind < 0.6:
                    parts.append("%d.%d.%d.%d" % tuple(
                        rng.randint(0, 255) for _ in range(4)))
                else:
                    parts.append(rng.choice(fillers))
            doc = make_doc(" ".join(parts), doc_id="fuzz%d" % trial)
            out = redact_pii(doc, 99)
            assert find_pii(out.text) == []
            assert redact_pii(out, 99).text == out.text

    def test_synthetic_addresses_never_match(self):
        from corpuscraft.pii import _rng_for, _synthetic_email, _synthetic_ipv4
        rng = _rng_for(1, "gen")
        for _ in range(1000):
            assert find_pii(_synthetic_email(rng)) == []
            assert find_pii(_synthetic_ipv4(rng)) == []


class TestCleanup:
    def test_unknown_source_passthrough(self):
        doc = make_doc("anything at all", source="Wikipedia")
        assert clean_source_specific(doc) is doc

    def test_discours_publics(self):
        text = ("Discours du ministre.\n"
                "source : https://www.vie-publique.fr/discours/287352\n"
                "12 345 vues\n"
                "Mesdames et messieurs, merci.")
        doc = make_doc(text, source="DiscoursPublics", language="fr")
        out = clean_source_specific(doc)
        assert out.text == "Discours du ministre.\nMesdames et messieurs, merci."

    def test_eurovoc_cid(self):
        doc = make_doc("loans (cid:146) granted", source="Eurovoc")
        assert clean_source_specific(doc).text == "loans granted"
        doc2 = make_doc("(cid:12)Start of text (cid:1)(cid:2) end",
                        source="Eurovoc")
        assert clean_source_specific(doc2).text == "Start of text end"

    def test_gutenberg_death_year_gate(self):
        def result(language, year):
            extra = {"author_death_year": year} if year else None
            doc = make_doc("Body text.", source="Gutenberg",
                           language=language, extra=extra)
            return clean_source_specific(doc)

        assert isinstance(result("en", 1900), DocumentRecord)
        assert isinstance(result("en", 1953), DocumentRecord)
        assert result("en", 1954).rule_id == "public_domain"
        assert result("en", 1980).rule_id == "public_domain"
        assert isinstance(result("fr", 1943), DocumentRecord)
        assert result("fr", 1944).rule_id == "public_domain"
        assert result("fr", 1950).rule_id == "public_domain"
        assert result("en", None).rule_id == "author_death_year"

    def test_gutenberg_header_footer(self):
        text = ("Cover page notes\n"
                "*** START OF THE PROJECT GUTENBERG EBOOK SAMPLE ***\n"
                "Chapter one begins here.\n"
                "*** END OF THE PROJECT GUTENBERG EBOOK SAMPLE ***\n"
                "License text trailing")
        doc = make_doc(text, source="Gutenberg",
                       extra={"author_death_year": 1900})
        out = clean_source_specific(doc)
        assert out.text == "Chapter one begins here."

    def test_theses_page_and_line_cleanup(self):
        body_line = "une phrase de contenu utile pour la science des textes"
        body = "\n".join("%s %04d" % (body_line, i) for i in range(200))
        hal_page = "HAL Id: tel-000001\nhttps://theses.hal.science/tel-000001"
        junk_page = "ok\x01\x02\x03\x04\x05\x06 page"
        text = hal_page + "\x0c" + junk_page + "\x0c" + body + "\nrepeat me\nrepeat me"
        doc = make_doc(text, source="Theses", language="fr")
        out = clean_source_specific(doc)
        assert isinstance(out, DocumentRecord)
        assert "HAL Id" not in out.text
        assert "\x01" not in out.text
        assert out.text.count("repeat me") == 1

    def test_theses_length_boundaries(self):
        word = "abcdefghi"  # 9 chars so 1000 words join to 9999 chars
        short = " ".join([word] * 1000)
        doc = make_doc(short, source="Theses")
        assert clean_source_specific(doc).rule_id == "thesis_length"
        ok = " ".join([word] * 1000) + "x"
        doc2 = make_doc(ok, source="Theses")
        assert isinstance(clean_source_specific(doc2), DocumentRecord)
        few_words = "word " * 999 + "tail" + "x" * 10000
        doc3 = make_doc(few_words, source="Theses")
        assert isinstance(clean_source_specific(doc3), DocumentRecord)

    def test_theses_word_floor(self):
        text = " ".join("w%d" % i for i in range(999))
        padded = text + " " + "z" * 11000
        doc = make_doc(padded, source="Theses")
        out = clean_source_specific(doc)
        assert isinstance(out, DocumentRecord)  # 1000 words, enough chars
        doc2 = make_doc(text, source="Theses")
        assert clean_source_specific(doc2).rule_id == "thesis_length"

    def test_pile_irc_channels(self):
        def verdict(channel):
            doc = make_doc("log text", source="Pile",
                           extra={"channel": channel})
            out = clean_source_specific(doc)
            return "drop" if isinstance(out, FilterDecision) else "keep"

        assert verdict("#ubuntu-cn") == "drop"
        assert verdict("#ubuntu-ru") == "drop"
        assert verdict("#ubuntu-it") == "keep"
        assert verdict("#ubuntu-es") == "keep"
        assert verdict("#kubuntu") == "keep"

    def test_pile_paper_language(self):
        doc = make_doc("resumo", source="Pile",
                       extra={"detected_language": "pt"})
        assert clean_source_specific(doc).rule_id == "language"
        doc2 = make_doc("abstract", source="Pile",
                        extra={"detected_language": "en"})
        assert clean_source_specific(doc2) is doc2

    def test_youtube_annotations(self):
        text = ("[Music] bonjour tout le monde \U0001f600\n"
                "on continue la série [Applause] merci\n"
                "Subtitled by the Amara.org community")
        doc = make_doc(text, source="YouTube", language="fr")
        out = clean_source_specific(doc)
        assert out.text == "bonjour tout le monde\non continue la série merci"

    def test_mathpile_join(self):
        extra = {"question": {"Body": "How to integrate x?"},
                 "answers": [{"Body": "Use substitution."},
                             {"Body": "Integrate by parts."}]}
        doc = make_doc("", source="MathPile", extra=extra)
        out = clean_source_specific(doc)
        assert out.text == ("How to integrate x?Use substitution.\n\n"
                            "Integrate by parts.")

    def test_clean_stream_partitions(self):
        docs = [
            make_doc("fine", source="Wikipedia", doc_id="a"),
            make_doc("short", source="Theses", doc_id="b"),
        ]
        kept, dropped = clean_stream(docs)
        assert len(kept) == 1 and len(dropped) == 1
        assert dropped[0][1].rule_id == "thesis_length"


class TestKeywordFilter:
    def test_every_string_drops_in_assistant(self):
        for needle in FILTER_STRINGS:
            example = [("user", "hello"),
                       ("assistant", "I was made by %s team" % needle)]
            decision = synthetic_keyword_filter(example)
            assert not decision.keep, needle

    def test_user_mentions_survive(self):
        for needle in FILTER_STRINGS:
            example = [("user", "compare yourself to %s" % needle),
                       ("assistant", "I am a helpful assistant.")]
            assert synthetic_keyword_filter(example).keep, needle

    def test_clean_assistant_keeps(self):
        example = [("user", "qui es-tu"), ("assistant", "I am Margot.")]
        assert synthetic_keyword_filter(example).keep

    def test_case_sensitivity_switch(self):
        example = [("assistant", "responses from chatgpt are different")]
        assert synthetic_keyword_filter(example).keep
        relaxed = synthetic_keyword_filter(example, case_sensitive=False)
        assert not relaxed.keep

    def test_substring_semantics(self):
        example = [("assistant", "a ChatGPT-like interface")]
        assert not synthetic_keyword_filter(example).keep

    def test_requires_assistant_turn(self):
        with pytest.raises(ValueError):
            synthetic_keyword_filter([("user", "hi")])

    def test_dict_and_object_turns(self):
        dict_example = [{"role": "assistant", "content": "Claude said so"}]
        assert not synthetic_keyword_filter(dict_example).keep

        class Turn:
            def __init__(self, role, content):
                self.role = role
                self.content = content

        class Convo:
            turns = [Turn("assistant", "fine answer")]

        assert synthetic_keyword_filter(Convo()).keep

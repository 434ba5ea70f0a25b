import math
import random
from fractions import Fraction

import pytest

from corpuscraft.ngram import (
    EOS,
    UNK,
    KNModel,
    SubwordSegmenter,
    load_model,
    perplexity,
    save_model,
    train_kn,
)

# Hand-computed bigram oracle for the corpus {"a b", "a b", "b a"}.
#
# Padded bigram counts: (<s>,a)=2 (a,b)=2 (b,</s>)=2 (<s>,b)=1 (b,a)=1
# (a,</s>)=1, so n1=3, n2=3 and D2 = 3/(3+6) = 1/3. Unigram continuation
# counts are a=2, b=2, </s>=2 (total 6, n1=0 so D1=0), giving P1 = 1/3 each.
# Every context has total 3 with two successor types, so the backoff weight
# is (1/3)*(2/3) = 2/9 and the three possible conditional values are:
#   seen count 2: (2-1/3)/3 + (2/9)(1/3) = 17/27
#   seen count 1: (1-1/3)/3 + (2/9)(1/3) = 8/27
#   unseen vocab token:        (2/9)(1/3) = 2/27
ORACLE_CORPUS = ["a b", "a b", "b a"]
P_HIGH = Fraction(17, 27)
P_LOW = Fraction(8, 27)
P_UNSEEN = Fraction(2, 27)
ORACLE_TABLE = {
    ("<s>",): {"a": P_HIGH, "b": P_LOW, EOS: P_UNSEEN},
    ("a",): {"b": P_HIGH, EOS: P_LOW, "a": P_UNSEEN},
    ("b",): {EOS: P_HIGH, "a": P_LOW, "b": P_UNSEEN},
}


@pytest.fixture(scope="module")
def oracle_model() -> KNModel:
    return train_kn(ORACLE_CORPUS, order=2)


class TestHandComputedOracle:
    def test_discounts(self, oracle_model):
        assert oracle_model.discounts[0] == 0.0
        assert abs(oracle_model.discounts[1] - 1 / 3) < 1e-15

    def test_unigram_probabilities(self, oracle_model):
        for token in ("a", "b", EOS):
            assert abs(oracle_model.prob(token) - 1 / 3) < 1e-9
        assert oracle_model.prob("never-seen") == 0.0

    def test_full_probability_table(self, oracle_model):
        for context, expected in ORACLE_TABLE.items():
            for token, value in expected.items():
                got = oracle_model.prob(token, context)
                assert abs(got - float(value)) < 1e-9, (context, token)

    def test_perplexity_matches_table_product(self, oracle_model):
        score = perplexity(oracle_model, "a b")
        assert score.token_count == 3
        assert abs(score.value - 27 / 17) < 1e-9

    def test_backoff_weights(self, oracle_model):
        for context in ORACLE_TABLE:
            assert abs(oracle_model.backoffs[2][context] - 2 / 9) < 1e-12


class TestNormalization:
    def test_oracle_contexts_sum_to_one(self, oracle_model):
        for context in ORACLE_TABLE:
            dist = oracle_model.context_distribution(context)
            assert abs(sum(dist.values()) - 1.0) < 1e-6

    def test_small_corpus_exhaustive_contexts(self):
        corpus = ["the cat sat", "the dog sat", "a cat ran", "the cat ran",
                  "a dog sat on the mat", "the mat sat still"]
        for order in (2, 3):
            model = train_kn(corpus, order=order)
            contexts = [()]
            contexts += [ctx for k in model.backoffs for ctx in model.backoffs[k]]
            for context in contexts:
                dist = model.context_distribution(context)
                assert abs(sum(dist.values()) - 1.0) < 1e-6, (order, context)
            # an entirely unseen context must back off and still normalize
            dist = model.context_distribution(("unseen-token",) * (order - 1))
            assert abs(sum(dist.values()) - 1.0) < 1e-6

    def test_all_probabilities_positive_when_discounted(self):
        corpus = ["one two three four", "two three five", "six seven one"]
        model = train_kn(corpus, order=2)
        assert model.discounts[0] > 0
        for token in sorted(model.vocab | {UNK}):
            for context in [(), ("one",), ("absent",)]:
                assert model.prob(token, context) > 0.0


SHUFFLE_CORPUS = """\
the river rises early in the spring and floods the lower fields
farmers along the bank move their animals to higher ground
each village keeps a ledger of the years when the water came
the ledger names the families who rebuilt the mill after the flood
a stone marker near the bridge shows the highest line the water reached
children learn to read the marker before they learn to swim
the mill wheel turns slowly when the river is low in late summer
traders bring salt and cloth up the river in flat wooden boats
the boats tie up below the bridge and unload before dark
every festival opens with a song about the river and the harvest"""


class TestShuffledPerplexity:
    def test_shuffled_text_scores_higher_100_trials(self):
        lines = SHUFFLE_CORPUS.split("\n")
        model = train_kn(lines, order=3)
        rng = random.Random(2024)
        for _ in range(100):
            line = rng.choice(lines)
            chars = list(line)
            shuffled = line
            while shuffled == line:
                rng.shuffle(chars)
                shuffled = "".join(chars)
            original = perplexity(model, line).value
            scrambled = perplexity(model, shuffled).value
            assert scrambled > original


class TestDegenerateAndErrors:
    def test_order_one_single_token(self):
        model = train_kn(["word"], order=1)
        assert model.prob("word") == 1.0
        assert perplexity(model, "word").value == 1.0

    def test_order_one_is_plain_mle(self):
        model = train_kn(["a a b"], order=1)
        assert abs(model.prob("a") - 2 / 3) < 1e-12
        assert abs(model.prob("b") - 1 / 3) < 1e-12

    def test_empty_corpus_rejected(self):
        with pytest.raises(ValueError):
            train_kn([], order=2)
        with pytest.raises(ValueError):
            train_kn(["", "\n\n"], order=1)

    def test_bad_order_rejected(self):
        for order in (0, 7, -1):
            with pytest.raises(ValueError):
                train_kn(["a b"], order=order)

    def test_empty_text_rejected(self, oracle_model):
        with pytest.raises(ValueError):
            perplexity(oracle_model, "")

    def test_bad_mode_rejected(self, oracle_model):
        with pytest.raises(ValueError):
            perplexity(oracle_model, "a b", mode="chunk")


class TestModes:
    def test_single_line_modes_agree(self, oracle_model):
        doc = perplexity(oracle_model, "a b", mode="document")
        lines = perplexity(oracle_model, "a b", mode="mean_of_lines")
        assert abs(doc.value - lines.value) < 1e-12

    def test_modes_differ_on_multiline(self):
        model = train_kn(SHUFFLE_CORPUS.split("\n"), order=2)
        text = "the river rises early\nsalt cloth boats"
        doc = perplexity(model, text, mode="document")
        lines = perplexity(model, text, mode="mean_of_lines")
        assert doc.value != lines.value
        assert doc.token_count == lines.token_count


class TestSerialization:
    def test_retrain_is_bit_identical(self, tmp_path):
        first = tmp_path / "first.kn"
        second = tmp_path / "second.kn"
        save_model(train_kn(ORACLE_CORPUS, order=2), first)
        save_model(train_kn(list(ORACLE_CORPUS), order=2), second)
        assert first.read_bytes() == second.read_bytes()

    def test_save_load_round_trip_scores(self, tmp_path):
        corpus = SHUFFLE_CORPUS.split("\n")
        model = train_kn(corpus, order=3)
        path = tmp_path / "model.kn"
        save_model(model, path)
        loaded = load_model(path)
        assert loaded.order == model.order
        assert loaded.vocab == model.vocab
        assert loaded.discounts == model.discounts
        for line in corpus:
            a = perplexity(model, line).value
            b = perplexity(loaded, line).value
            assert a == b

    def test_header_contents(self, tmp_path):
        path = tmp_path / "model.kn"
        save_model(train_kn(ORACLE_CORPUS, order=2), path)
        text = path.read_text()
        assert text.startswith("kn-model v1\norder 2\n")
        assert "vocab_size 3" in text
        assert "discount 2 0.3333333333333333" in text

    def test_reject_foreign_file(self, tmp_path):
        path = tmp_path / "bogus.kn"
        path.write_text("something else\n")
        with pytest.raises(ValueError):
            load_model(path)

    def test_whitespace_tokens_survive_round_trip(self, tmp_path):
        segmenter = SubwordSegmenter(mode="tokenizer",
                                     encode_fn=lambda text: list(text))
        model = train_kn(["a b", "a  b"], order=2, segmenter=segmenter)
        path = tmp_path / "chars.kn"
        save_model(model, path)
        loaded = load_model(path, segmenter=segmenter)
        assert loaded.vocab == model.vocab
        assert " " in loaded.vocab
        assert perplexity(loaded, "a b").value == perplexity(model, "a b").value


def test_segmenter_never_empty_on_nonempty_text():
    segmenter = SubwordSegmenter.whitespace_lowercase()
    assert segmenter.segment("  ") != []
    assert segmenter.segment("Hello World") == ["hello", "world"]
    assert segmenter.segment("") == []

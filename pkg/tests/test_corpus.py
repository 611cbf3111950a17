"""Vocabulary, corpus generators, file round trips, and token randomization.

Statistical checks use six-sigma binomial bounds against exactly computable
distributions (template weights; the convolution of the operand
distributions), so they are deterministic given the frozen seeds.
"""

import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dise.corpus import (
    DEFAULT_GRAMMAR,
    Example,
    GrammarSpec,
    SequenceBuffer,
    Vocabulary,
    arithmetic_example,
    arithmetic_vocabulary,
    check_arithmetic,
    generate_arithmetic_tasks,
    generate_choice_sets,
    generate_grammar_corpus,
    grammar_vocabulary,
    load_jsonl,
    load_vocab,
    randomize_tokens,
    save_jsonl,
    save_vocab,
    validate_example,
)
from dise.errors import CorpusError


# --- vocabulary ---------------------------------------------------------------


def test_reserved_ids_are_fixed():
    v = arithmetic_vocabulary()
    assert (v.mask_id, v.eot_id, v.pad_id, v.bos_id) == (0, 1, 2, 3)
    assert v.symbols[:4] == ("<mask>", "<eot>", "<pad>", "<bos>")
    assert set(v.content_ids) == set(range(4, v.size))


def test_vocabulary_rejects_duplicates_and_missing_reserved():
    with pytest.raises(CorpusError):
        Vocabulary.build(("a", "a"))
    with pytest.raises(CorpusError):
        Vocabulary(("a", "b", "c", "d", "e"))


def test_encode_decode_round_trip():
    v = arithmetic_vocabulary()
    text = "1 2 + 3 ="
    assert v.decode(v.encode(text)) == text
    with pytest.raises(CorpusError):
        v.encode("q")
    with pytest.raises(CorpusError):
        v.decode([v.size])


# --- structural validation ------------------------------------------------------


def test_validate_example_rules():
    v = arithmetic_vocabulary()
    good = arithmetic_example(3, 4, v, response_len=3)
    validate_example(good, v)  # no error
    with pytest.raises(CorpusError):
        validate_example(Example("e", [], [4]), v)
    with pytest.raises(CorpusError):
        validate_example(Example("e", [4], [v.size]), v)
    # end-of-text inside the body only passes with strict_eot off
    inner = Example("e", [4], [5, v.eot_id, 5])
    with pytest.raises(CorpusError):
        validate_example(inner, v)
    validate_example(inner, v, strict_eot=False)


def test_sequence_buffer_boundary():
    buf = SequenceBuffer(np.array([3, 4, 5, 6]), 2)
    assert list(buf.prompt) == [3, 4]
    assert list(buf.response) == [5, 6]
    assert len(buf) == 4
    with pytest.raises(CorpusError):
        SequenceBuffer(np.array([3, 4]), 5)


# --- grammar --------------------------------------------------------------------


def test_grammar_corpus_matches_template_weights():
    n = 2000
    corpus = generate_grammar_corpus(DEFAULT_GRAMMAR, n, seed=5)
    counts = np.bincount(
        [ex.extra["template"] for ex in corpus], minlength=len(DEFAULT_GRAMMAR.templates)
    )
    for t, (_, w) in enumerate(DEFAULT_GRAMMAR.templates):
        sigma = np.sqrt(n * w * (1 - w))
        assert abs(counts[t] - n * w) <= 6 * sigma, f"template {t}: {counts[t]} vs {n * w}"


def test_grammar_sentences_use_prompt_of_one_bos_and_fit_context():
    vocab = grammar_vocabulary()
    corpus = generate_grammar_corpus(DEFAULT_GRAMMAR, 50, seed=1, vocab=vocab, max_len=32)
    for ex in corpus:
        assert ex.prompt == [vocab.bos_id]
        assert 1 + len(ex.response) <= 32
        validate_example(ex, vocab)


def test_grammar_corpus_is_deterministic():
    a = generate_grammar_corpus(DEFAULT_GRAMMAR, 30, seed=9)
    b = generate_grammar_corpus(DEFAULT_GRAMMAR, 30, seed=9)
    assert [(e.prompt, e.response) for e in a] == [(e.prompt, e.response) for e in b]


def test_grammar_json_round_trip():
    spec = GrammarSpec.from_json(DEFAULT_GRAMMAR.to_json())
    assert spec == DEFAULT_GRAMMAR
    with pytest.raises(CorpusError):
        GrammarSpec.from_json("{not json")
    with pytest.raises(CorpusError):
        GrammarSpec.from_json(json.dumps({"templates": [{"pattern": "a"}], "slots": {}}))


def test_grammar_rejects_bad_weights_and_unknown_slots():
    with pytest.raises(CorpusError):
        GrammarSpec(templates=(("a b", 0.5),), slots={})
    with pytest.raises(CorpusError):
        GrammarSpec(templates=(("the {ghost} runs", 1.0),), slots={})


def test_grammar_max_len_guard():
    with pytest.raises(CorpusError):
        generate_grammar_corpus(DEFAULT_GRAMMAR, 5, seed=0, max_len=6)


# --- arithmetic -----------------------------------------------------------------


def test_single_digit_answer_distribution_matches_convolution():
    """Operands are uniform on 0..9, so the answer histogram must match the
    exact convolution of two uniform distributions."""
    n = 20000
    tasks = generate_arithmetic_tasks(n, seed=3, digit_range=(1, 1), response_len=4)
    answers = np.array([int(ex.extra["answer"]) for ex in tasks])
    op = np.full(10, 0.1)
    pmf = np.convolve(op, op)  # support 0..18
    counts = np.bincount(answers, minlength=len(pmf))
    for s, p in enumerate(pmf):
        sigma = np.sqrt(n * p * (1 - p))
        assert abs(counts[s] - n * p) <= 6 * sigma, f"sum {s}: {counts[s]} vs {n * p:.1f}"


def test_mixed_digit_answer_distribution_matches_convolution():
    """With operands of 1 or 2 digits (digit count uniform), each operand's
    value distribution is an explicit mixture; the answer histogram must
    match its self-convolution."""
    n = 20000
    tasks = generate_arithmetic_tasks(n, seed=4, digit_range=(1, 2), response_len=5)
    answers = np.array([int(ex.extra["answer"]) for ex in tasks])
    op = np.zeros(100)
    op[:10] += 0.5 / 10
    op[:100] += 0.5 / 100
    pmf = np.convolve(op, op)
    counts = np.bincount(answers, minlength=len(pmf))
    for s, p in enumerate(pmf):
        sigma = np.sqrt(n * p * (1 - p))
        assert abs(counts[s] - n * p) <= 6 * sigma, f"sum {s}"


def test_arithmetic_example_shapes():
    v = arithmetic_vocabulary()
    ex = arithmetic_example(17, 25, v, response_len=4)
    assert v.decode(ex.prompt) == "1 7 + 2 5 ="
    assert v.decode(ex.response) == "4 2 <eot> <eot>"
    natural = arithmetic_example(17, 25, v, response_len=None)
    assert v.decode(natural.response) == "4 2 <eot>"
    with pytest.raises(CorpusError):
        arithmetic_example(99, 99, v, response_len=2)


def test_check_arithmetic_recomputes_label():
    v = arithmetic_vocabulary()
    ex = arithmetic_example(6, 7, v, response_len=3)
    assert check_arithmetic(ex, v)
    wrong = Example(ex.id, ex.prompt, v.encode("1 4 <eot>"), True, ex.extra)
    assert not check_arithmetic(wrong, v)
    # end-of-text tokens are transparent: digits on both sides still concatenate
    split = Example(ex.id, ex.prompt, v.encode("1 <eot> 3"), True, ex.extra)
    assert check_arithmetic(split, v)
    # a non-digit symbol in the body invalidates the response outright
    noisy = Example(ex.id, ex.prompt, v.encode("1 + 3"), True, ex.extra)
    assert not check_arithmetic(noisy, v)
    scrambled = Example(ex.id, ex.prompt, v.encode("3 1 <eot>"), True, ex.extra)
    assert not check_arithmetic(scrambled, v)


def test_natural_length_tasks_vary_in_length():
    tasks = generate_arithmetic_tasks(200, seed=8, digit_range=(1, 2), response_len=None)
    lengths = {len(ex.response) for ex in tasks}
    assert lengths == {2, 3, 4}  # 1..3 answer digits plus one end-of-text


def test_bad_digit_range_rejected():
    with pytest.raises(CorpusError):
        generate_arithmetic_tasks(5, seed=0, digit_range=(2, 1))
    with pytest.raises(CorpusError):
        generate_arithmetic_tasks(5, seed=0, digit_range=(0, 1))


# --- choice sets ------------------------------------------------------------------


def test_choice_sets_have_one_correct_padded_candidates():
    v = arithmetic_vocabulary()
    sets = generate_choice_sets(50, seed=2, vocab=v, n_choices=4)
    for cs in sets:
        assert len(cs.candidates) == 4
        widths = {len(c) for c in cs.candidates}
        assert len(widths) == 1, "candidates must share one padded width"
        assert len(set(cs.extra["values"])) == 4, "distractor values must be distinct"
        left, right = v.decode(cs.prompt).split("+")
        gold = int(left.replace(" ", "")) + int(right.replace("=", "").replace(" ", ""))
        assert cs.extra["values"][cs.correct_index] == gold


def test_choice_sets_validate_arguments():
    with pytest.raises(CorpusError):
        generate_choice_sets(5, seed=0, n_choices=1)


# --- randomization ----------------------------------------------------------------


def test_randomize_tokens_touches_only_region_with_content_tokens():
    v = arithmetic_vocabulary()
    buf = SequenceBuffer(np.array([3, 4, 5, 6, 7, 1]), 1)
    region = np.array([False, False, True, True, False, False])
    out = randomize_tokens(buf, region, seed=13, vocab=v)
    assert np.array_equal(out.tokens[~region], buf.tokens[~region])
    assert all(int(t) in set(v.content_ids) for t in out.tokens[region])
    assert out.prompt_len == buf.prompt_len


def test_randomize_tokens_empty_region_copies():
    v = arithmetic_vocabulary()
    buf = SequenceBuffer(np.array([3, 4, 5]), 1)
    out = randomize_tokens(buf, np.zeros(3, dtype=bool), seed=0, vocab=v)
    assert np.array_equal(out.tokens, buf.tokens)
    assert out.tokens is not buf.tokens


def test_randomize_tokens_region_shape_mismatch():
    v = arithmetic_vocabulary()
    buf = SequenceBuffer(np.array([3, 4, 5]), 1)
    with pytest.raises(CorpusError):
        randomize_tokens(buf, np.zeros(4, dtype=bool), seed=0, vocab=v)


@given(st.integers(0, 2**31))
def test_randomize_tokens_never_introduces_reserved_ids(seed):
    v = arithmetic_vocabulary()
    buf = SequenceBuffer(np.arange(4, 12), 2)
    region = np.ones(8, dtype=bool)
    out = randomize_tokens(buf, region, seed=seed, vocab=v)
    assert not np.isin(out.tokens, np.array(v.reserved_ids)).any()


# --- file round trips --------------------------------------------------------------


def test_jsonl_round_trip(tmp_path):
    v = arithmetic_vocabulary()
    examples = generate_arithmetic_tasks(20, seed=6, vocab=v, response_len=4)
    path = tmp_path / "corpus.jsonl"
    save_jsonl(examples, path, v)
    loaded = load_jsonl(path, v)
    assert [e.id for e in loaded] == [e.id for e in examples]
    for a, b in zip(loaded, examples):
        assert a.prompt == b.prompt
        assert a.response == b.response
        assert a.label == b.label
        assert a.extra["answer"] == b.extra["answer"]


def test_jsonl_errors_carry_line_numbers(tmp_path):
    v = arithmetic_vocabulary()
    path = tmp_path / "bad.jsonl"
    path.write_text('{"id": "x", "prompt": "1 + 1 =", "response": "2"}\n{broken\n')
    with pytest.raises(CorpusError, match="line 2"):
        load_jsonl(path, v)
    path.write_text('{"id": "x", "prompt": "1 + 1 ="}\n')
    with pytest.raises(CorpusError, match="line 1"):
        load_jsonl(path, v)


def test_jsonl_strict_eot_toggle(tmp_path):
    v = arithmetic_vocabulary()
    path = tmp_path / "sampled.jsonl"
    path.write_text('{"id": "x", "prompt": "1 + 1 =", "response": "2 <eot> 3"}\n')
    with pytest.raises(CorpusError):
        load_jsonl(path, v)
    loaded = load_jsonl(path, v, strict_eot=False)
    assert v.decode(loaded[0].response) == "2 <eot> 3"


def test_vocab_file_round_trip(tmp_path):
    v = grammar_vocabulary()
    path = tmp_path / "vocab.json"
    save_vocab(v, path)
    assert load_vocab(path).symbols == v.symbols
    path.write_text("{}")
    with pytest.raises(CorpusError):
        load_vocab(path)

"""Shared fixtures: trained toy models (built once per session), stub
backends, and the registry that prints one line per acceptance criterion at
the end of the run.

The trained fixtures are deliberately frozen recipes — seeds, corpus sizes,
and step counts are part of the test contract, because the trend assertions
in test_acceptance.py were calibrated against exactly these models.
"""

from __future__ import annotations

import time
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import settings

from dise.backend import LocalBackend, TableBackend
from dise.corpus import (
    DEFAULT_GRAMMAR,
    Example,
    arithmetic_vocabulary,
    generate_arithmetic_tasks,
    generate_grammar_corpus,
    grammar_vocabulary,
)
from dise.model import HParams, TrainConfig, init_parameters, train_masked_diffusion

settings.register_profile("suite", deadline=None)
settings.load_profile("suite")

# Every trained fixture shares this optimization recipe. carry_weight keeps
# the denoising rows meaningful at positions that are visible in the input,
# which is what scoring fully unmasked sequences relies on.
TRAIN_KW = dict(lr=0.05, batch_size=16, mask_region="response", carry_weight=0.1)


def toy_hparams(vocab_size: int, context: int = 32) -> HParams:
    return HParams(vocab_size=vocab_size, context=context, width=64, heads=4, layers=2)


def _train(vocab, examples, steps: int) -> tuple:
    params = init_parameters(toy_hparams(vocab.size), seed=0)
    t0 = time.perf_counter()
    params, trace = train_masked_diffusion(
        params, examples, vocab, TrainConfig(steps=steps, seed=0, **TRAIN_KW)
    )
    return params, trace, time.perf_counter() - t0


@pytest.fixture(scope="session")
def grammar_model():
    """Denoiser trained on the template grammar, with held-out sentences.

    500 training sentences (corpus seed 21), 6000 steps; the held-out set is
    the first 15 sentences of an independent draw (seed 99) whose token
    sequences do not occur in the training set.
    """
    vocab = grammar_vocabulary()
    train = generate_grammar_corpus(DEFAULT_GRAMMAR, 500, seed=21, vocab=vocab)
    seen = {tuple(ex.prompt + ex.response) for ex in train}
    pool = generate_grammar_corpus(DEFAULT_GRAMMAR, 80, seed=99, vocab=vocab)
    heldout = [ex for ex in pool if tuple(ex.prompt + ex.response) not in seen][:15]
    assert len(heldout) == 15, "held-out draw too small after removing collisions"
    params, trace, seconds = _train(vocab, train, steps=6000)
    return SimpleNamespace(
        vocab=vocab,
        params=params,
        train=train,
        heldout=heldout,
        final_loss=trace[-1],
        train_seconds=seconds,
        make_backend=lambda: LocalBackend(params, vocab),
    )


@pytest.fixture(scope="session")
def uq_model():
    """Denoiser for two-digit addition, trained into its generalization
    regime (600 tasks is far from coverage of the task space), so sampled
    answers carry genuine model uncertainty.

    Responses are padded to 5 tokens; evaluation questions come from an
    independent seed.
    """
    vocab = arithmetic_vocabulary()
    train = generate_arithmetic_tasks(
        600, seed=11, vocab=vocab, digit_range=(1, 2), response_len=5
    )
    questions = generate_arithmetic_tasks(
        200, seed=77, vocab=vocab, digit_range=(1, 2), response_len=5
    )
    params, trace, seconds = _train(vocab, train, steps=9000)
    return SimpleNamespace(
        vocab=vocab,
        params=params,
        train=train,
        questions=questions,
        response_len=5,
        final_loss=trace[-1],
        train_seconds=seconds,
        make_backend=lambda: LocalBackend(params, vocab),
    )


def variable_length_corpus(vocab, n: int, seed: int) -> list:
    """Single-digit addition tasks at their natural length, with per-task
    shape variants.

    Flexible-length generation scores candidates that end cleanly (digits
    then end-of-text), candidates cut short (digits only), and candidates
    that run long (extra end-of-text), so the training corpus contains all
    three shapes for every task; otherwise those shapes are out of
    distribution and their scores carry no signal.
    """
    base = generate_arithmetic_tasks(n, seed=seed, vocab=vocab, digit_range=(1, 1), response_len=None)
    rows = []
    for ex in base:
        digits = [t for t in ex.response if t != vocab.eot_id]
        rows.append(Example(f"{ex.id}n", ex.prompt, list(ex.response), ex.label, dict(ex.extra)))
        rows.append(Example(f"{ex.id}s", ex.prompt, digits, ex.label, dict(ex.extra)))
        rows.append(
            Example(f"{ex.id}e", ex.prompt, list(ex.response) + [vocab.eot_id], ex.label, dict(ex.extra))
        )
    return rows


@pytest.fixture(scope="session")
def flex_model():
    """Denoiser for variable-length single-digit addition (1200 corpus rows:
    400 tasks x 3 shape variants, seed 11), 8000 steps."""
    vocab = arithmetic_vocabulary()
    train = variable_length_corpus(vocab, 400, seed=11)
    params, trace, seconds = _train(vocab, train, steps=8000)
    return SimpleNamespace(
        vocab=vocab,
        params=params,
        train=train,
        final_loss=trace[-1],
        train_seconds=seconds,
        make_backend=lambda: LocalBackend(params, vocab),
    )


# --- stub backends -----------------------------------------------------------


@pytest.fixture()
def avocab():
    return arithmetic_vocabulary()


@pytest.fixture()
def gvocab():
    return grammar_vocabulary()


@pytest.fixture()
def uniform_backend(avocab):
    return TableBackend.uniform(avocab)


@pytest.fixture()
def echo_backend(avocab):
    return TableBackend.echo(avocab)


def hashed_table_backend(vocab, spread: float = 1.5, context_limit: int = 4096) -> TableBackend:
    """Frozen pseudo-random backend whose rows are a pure function of the
    token sequence, so masking different subsets produces different (but
    reproducible) distributions. Used as the enumeration oracle target."""
    from dise import rng

    def fn(tokens, mode):
        key = rng.fnv1a_64(np.asarray(tokens, dtype=np.int64).tobytes())
        rs = rng.stream(key & 0x7FFFFFFFFFFFFFFF, "table", mode)
        logits = rs.normal(0.0, spread, size=(len(tokens), vocab.size))
        z = logits - logits.max(axis=-1, keepdims=True)
        return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))

    return TableBackend(vocab, fn, context_limit)


def constant_token_backend(vocab, token_id: int, logit: float = 4.0, context_limit: int = 4096):
    """Backend that always prefers one content token, with the same
    normalized row everywhere: generation emits that token forever and every
    score comes out identical."""
    logits = np.zeros(vocab.size)
    logits[token_id] = logit
    z = logits - logits.max()
    table = z - np.log(np.exp(z).sum())

    def fn(tokens, mode):
        return np.tile(table, (len(tokens), 1))

    return TableBackend(vocab, fn, context_limit)


def length_reward_backend(vocab, token_id: int, context_limit: int = 4096):
    """Backend whose preferred-token probability grows with sequence length,
    so every longer candidate scores strictly better."""

    def fn(tokens, mode):
        logits = np.zeros((len(tokens), vocab.size))
        logits[:, token_id] = 1.0 + 0.25 * len(tokens)
        z = logits - logits.max(axis=-1, keepdims=True)
        return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))

    return TableBackend(vocab, fn, context_limit)


# --- acceptance reporting -----------------------------------------------------

ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, name: str, ok: bool, detail: str) -> None:
    """One pass/fail line per criterion; echoed in the terminal summary."""
    line = f"[criterion {number:02d}] {name}: {'PASS' if ok else 'FAIL'} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)

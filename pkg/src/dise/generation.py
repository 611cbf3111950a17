"""Masked-denoising generation and score-guided length extension.

Fixed-length generation fills a masked span block by block: within the
active block, every step queries the backend once, commits the
highest-confidence predictions (a fixed number per step), and leaves the
rest masked for the next step. Later blocks stay fully masked until every
earlier block is finished.

The flexible-length loop wraps that decoder: generate a base-length
response, strip end-of-text padding, score the result, then repeatedly
re-mask a growing tail plus one appended mask token, regenerate, and keep
the best-scoring candidate, stopping after a patience budget of
non-improving iterations or a hard iteration cap.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BackendError, CorpusError
from . import rng
from .backend import DenoisingBackend, LogProbQuery
from .corpus import SequenceBuffer, Vocabulary
from .scoring import SelectionMode, dise_score


@dataclass(frozen=True)
class GenerationConfig:
    length: int = 4
    block_size: int = 32
    tokens_per_step: int = 2
    temperature: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.length < 1:
            raise ValueError("length must be at least 1")
        if self.block_size < 1:
            raise ValueError("block_size must be at least 1")
        if not 1 <= self.tokens_per_step <= self.block_size:
            raise ValueError("tokens_per_step must lie in [1, block_size]")
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")


def decode_masked_span(
    backend: DenoisingBackend,
    tokens: np.ndarray,
    span_start: int,
    span_end: int,
    cfg: GenerationConfig,
    rs: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Fill every mask token in [span_start, span_end) in block order.

    Returns (tokens, commit_steps) where commit_steps[i] is the global step
    index at which span position i was committed (-1 for positions that were
    not masked). Each step is one backend call. The mask token is never a
    candidate; at temperature zero the argmax is taken, otherwise tokens are
    sampled at the given temperature, and in both cases the model's
    log-probability of the chosen token is its confidence. The
    tokens_per_step highest-confidence positions commit each step, ties
    broken toward the lowest position.
    """
    tokens = np.asarray(tokens, dtype=np.int64).copy()
    mask_id = backend.vocab.mask_id
    commit_steps = np.full(span_end - span_start, -1, dtype=np.int64)
    step = 0
    for block_lo in range(span_start, span_end, cfg.block_size):
        block_hi = min(block_lo + cfg.block_size, span_end)
        while True:
            masked = np.flatnonzero(tokens[block_lo:block_hi] == mask_id) + block_lo
            if len(masked) == 0:
                break
            q = LogProbQuery.make(
                tokens, [(int(p), tuple(range(backend.vocab.size))) for p in masked]
            )
            rows = backend.query_logprobs(q, "bidirectional")
            choices = np.empty(len(masked), dtype=np.int64)
            confs = np.empty(len(masked), dtype=np.float64)
            for i, row in enumerate(rows):
                row = row.copy()
                row[mask_id] = -np.inf
                if cfg.temperature == 0.0:
                    tok = int(np.argmax(row))
                else:
                    z = row / cfg.temperature
                    z -= z.max()
                    probs = np.exp(z)
                    probs[mask_id] = 0.0
                    probs /= probs.sum()
                    tok = int(rs.choice(backend.vocab.size, p=probs))
                choices[i] = tok
                confs[i] = row[tok]
            take = np.lexsort((masked, -confs))[: cfg.tokens_per_step]
            for i in take:
                pos = int(masked[i])
                tokens[pos] = choices[i]
                commit_steps[pos - span_start] = step
            step += 1
    return tokens, commit_steps


def generate_fixed(
    backend: DenoisingBackend,
    prompt_tokens: np.ndarray,
    cfg: GenerationConfig,
    rs: np.random.Generator | None = None,
) -> np.ndarray:
    """Generate a response of exactly cfg.length tokens after the prompt.

    The masked span is padded up to whole blocks internally (the padding
    also decodes and is discarded), so the backend must fit prompt length
    plus the padded span. Deterministic at temperature zero and for a fixed
    seed otherwise.
    """
    prompt_tokens = np.asarray(prompt_tokens, dtype=np.int64)
    if len(prompt_tokens) == 0:
        raise CorpusError("empty prompt")
    n_blocks = -(-cfg.length // cfg.block_size)
    padded = n_blocks * cfg.block_size
    total = len(prompt_tokens) + padded
    if total > backend.context_limit:
        raise BackendError(
            f"prompt ({len(prompt_tokens)}) plus padded span ({padded}) "
            f"exceeds context limit {backend.context_limit}"
        )
    if rs is None:
        rs = rng.stream(cfg.seed, "generate")
    buf = np.concatenate([prompt_tokens, np.full(padded, backend.vocab.mask_id, np.int64)])
    out, _ = decode_masked_span(backend, buf, len(prompt_tokens), total, cfg, rs)
    return out[len(prompt_tokens) : len(prompt_tokens) + cfg.length]


def strip_eot(tokens: np.ndarray, eot_id: int) -> np.ndarray:
    """Drop every end-of-text token; an all-marker input becomes empty."""
    tokens = np.asarray(tokens, dtype=np.int64)
    return tokens[tokens != eot_id]


# --- flexible-length generation ---------------------------------------------


@dataclass(frozen=True)
class FlexGenConfig:
    base_length: int = 4
    max_iterations: int = 10
    patience: int = 4
    initial_mask: int = 20
    selection: SelectionMode = SelectionMode("last10")

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.patience < 1:
            raise ValueError("patience must be at least 1")
        if self.initial_mask < 1:
            raise ValueError("initial_mask must be at least 1")


@dataclass
class FlexStep:
    iteration: int
    mask_size: int
    score: float
    accepted: bool
    length: int


@dataclass
class FlexGenTrace:
    steps: list = field(default_factory=list)
    best_tokens: np.ndarray | None = None
    best_score: float = -np.inf
    termination: str = ""
    nfe: int = 0

    @property
    def best_response(self) -> np.ndarray:
        return self.best_tokens


def _score_candidate(backend, prompt_tokens, response, flex_cfg, block_size):
    """Score [prompt; response] as-is; empty responses score worst-possible
    so the loop can keep growing them."""
    if len(response) == 0:
        return float("-inf")
    seq = SequenceBuffer(
        np.concatenate([prompt_tokens, response]), len(prompt_tokens)
    )
    return dise_score(backend, seq, flex_cfg.selection, block_size).score


def flexgen(
    backend: DenoisingBackend,
    prompt_tokens: np.ndarray,
    flex_cfg: FlexGenConfig,
    gen_cfg: GenerationConfig,
) -> FlexGenTrace:
    """Score-guided length extension.

    Iteration 1 generates a base-length response, strips end-of-text
    padding, and scores what remains. Every later iteration re-masks the
    last mask_size response tokens (clamped to the response; the prompt is
    never touched), appends one extra mask, regenerates the masked tail,
    and rescores the candidate exactly as produced — regenerated
    end-of-text tokens stay in place and count toward the score, which is
    how a candidate that ends cleanly outranks one that stops short. An
    iteration is accepted when it strictly improves the best score;
    patience counts consecutive non-improvements and stops the loop, as
    does the max_iterations cap. mask_size grows by one after every
    regeneration.
    """
    prompt_tokens = np.asarray(prompt_tokens, dtype=np.int64)
    gen = GenerationConfig(
        length=flex_cfg.base_length,
        block_size=gen_cfg.block_size,
        tokens_per_step=gen_cfg.tokens_per_step,
        temperature=gen_cfg.temperature,
        seed=gen_cfg.seed,
    )
    nfe_before = backend.nfe.value
    trace = FlexGenTrace()

    response = generate_fixed(backend, prompt_tokens, gen)
    response = strip_eot(response, backend.vocab.eot_id)
    score = _score_candidate(backend, prompt_tokens, response, flex_cfg, gen.block_size)
    trace.steps.append(FlexStep(1, 0, score, True, len(response)))
    best_resp, best_score = response, score

    t = 1
    stale = 0
    mask_size = flex_cfg.initial_mask
    termination = "max_iterations"
    while t < flex_cfg.max_iterations:
        t += 1
        d_eff = min(mask_size, len(response))
        tail = np.full(d_eff + 1, backend.vocab.mask_id, dtype=np.int64)
        kept = response[: len(response) - d_eff]
        buf = np.concatenate([prompt_tokens, kept, tail])
        if len(buf) > backend.context_limit:
            termination = "context_limit"
            break
        span_start = len(prompt_tokens) + len(kept)
        rs = rng.stream(gen_cfg.seed, "flex", t)
        out, _ = decode_masked_span(backend, buf, span_start, len(buf), gen, rs)
        response = out[len(prompt_tokens) :]
        score = _score_candidate(backend, prompt_tokens, response, flex_cfg, gen.block_size)
        accepted = score > best_score
        trace.steps.append(FlexStep(t, mask_size, score, accepted, len(response)))
        if accepted:
            best_resp, best_score = response, score
            stale = 0
        else:
            stale += 1
        mask_size += 1
        if stale >= flex_cfg.patience:
            termination = "patience"
            break

    trace.best_tokens = best_resp
    trace.best_score = best_score
    trace.termination = termination
    trace.nfe = backend.nfe.value - nfe_before
    return trace


# --- answer extraction ------------------------------------------------------


def extract_answer(response_tokens, task: str, vocab: Vocabulary) -> str | None:
    """Parse a generated response into a canonical answer string.

    For the arithmetic task the answer is the longest run of adjacent digit
    symbols, first run on ties; any non-digit symbol (end-of-text included)
    delimits runs. None when the response contains no digits. Unknown tasks
    are an error; unparseable responses are not.
    """
    if task != "arithmetic":
        raise ValueError(f"no answer parser for task {task!r}")
    runs = []
    current = []
    for tok in np.asarray(response_tokens, dtype=np.int64):
        sym = vocab.symbols[int(tok)] if 0 <= tok < vocab.size else ""
        if sym.isdigit():
            current.append(sym)
        else:
            if current:
                runs.append("".join(current))
            current = []
    if current:
        runs.append("".join(current))
    if not runs:
        return None
    return max(runs, key=len)

"""Sequence-level scores built from position-wise log-probability queries.

The self-evaluation score feeds a fully unmasked sequence to a denoising
backend and averages, over a selected set of positions, the log-probability
that the backend would regenerate the very token already sitting at each
position. Higher (closer to zero) means the model finds its own output more
regenerable; the negated score serves directly as an uncertainty value.

The Monte Carlo estimator is the usual masked-likelihood bound: mask a
uniform random subset, score the true tokens at the masked positions, scale
by sequence length over mask count, and average over trials. The
autoregressive estimators are exact chain-rule sums for backends with a
causal mode.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .errors import CorpusError
from . import rng
from .backend import DenoisingBackend, LogProbQuery
from .corpus import SequenceBuffer


def compensated_sum(values) -> float:
    """Neumaier-compensated sum, in the order given."""
    s = 0.0
    c = 0.0
    for v in values:
        v = float(v)
        t = s + v
        if abs(s) >= abs(v):
            c += (s - t) + v
        else:
            c += (v - t) + s
        s = t
    return s + c


# --- position selection -----------------------------------------------------


@dataclass(frozen=True)
class SelectionMode:
    """Which positions a score averages over.

    kind is one of full, first10, mid10, last10, first_block, last_block,
    prompt_tail, prompt_tail_head, explicit. prompt_tail takes the last k
    prompt positions; prompt_tail_head adds the first j response positions;
    explicit uses absolute positions as given.
    """

    kind: str
    k: int = 0
    j: int = 0
    positions: tuple = ()

    KINDS = (
        "full", "first10", "mid10", "last10", "first_block", "last_block",
        "prompt_tail", "prompt_tail_head", "explicit",
    )

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown selection mode {self.kind!r}")

    @classmethod
    def parse(cls, text: str) -> "SelectionMode":
        """Parse forms like 'last10', 'prompt_tail:2', 'prompt_tail_head:7,2',
        'explicit:3,5,9'."""
        name, _, args = text.partition(":")
        if name == "prompt_tail":
            return cls("prompt_tail", k=int(args))
        if name == "prompt_tail_head":
            m = re.fullmatch(r"(\d+),(\d+)", args.strip())
            if not m:
                raise ValueError(f"expected prompt_tail_head:k,j, got {text!r}")
            return cls("prompt_tail_head", k=int(m.group(1)), j=int(m.group(2)))
        if name == "explicit":
            return cls("explicit", positions=tuple(int(p) for p in args.split(",")))
        if args:
            raise ValueError(f"mode {name!r} takes no arguments")
        return cls(name)

    def __str__(self) -> str:
        if self.kind == "prompt_tail":
            return f"prompt_tail:{self.k}"
        if self.kind == "prompt_tail_head":
            return f"prompt_tail_head:{self.k},{self.j}"
        if self.kind == "explicit":
            return "explicit:" + ",".join(str(p) for p in self.positions)
        return self.kind


def resolve_selection(
    mode: SelectionMode,
    prompt_len: int,
    response: np.ndarray,
    eot_id: int,
    block_size: int = 32,
) -> np.ndarray:
    """Turn a mode into sorted absolute positions over [prompt; response].

    Regional windows shrink at short responses instead of failing; an empty
    result (for example last10 on an all-end-of-text response) is an error.
    """
    response = np.asarray(response, dtype=np.int64)
    n_resp = len(response)
    total = prompt_len + n_resp
    resp_abs = prompt_len + np.arange(n_resp)

    if mode.kind == "full":
        positions = resp_abs
    elif mode.kind == "first10":
        positions = resp_abs[: min(10, n_resp)]
    elif mode.kind == "mid10":
        if n_resp <= 10:
            positions = resp_abs
        else:
            start = (n_resp - 10) // 2
            positions = resp_abs[start : start + 10]
    elif mode.kind == "last10":
        keep = resp_abs[response != eot_id]
        positions = keep[-10:]
    elif mode.kind == "first_block":
        positions = resp_abs[: min(block_size, n_resp)]
    elif mode.kind == "last_block":
        positions = resp_abs[-block_size:]
    elif mode.kind == "prompt_tail":
        if mode.k < 1:
            raise ValueError("prompt_tail needs k >= 1")
        positions = np.arange(max(0, prompt_len - mode.k), prompt_len)
    elif mode.kind == "prompt_tail_head":
        if mode.k < 1 or mode.j < 0:
            raise ValueError("prompt_tail_head needs k >= 1, j >= 0")
        tail = np.arange(max(0, prompt_len - mode.k), prompt_len)
        head = resp_abs[: min(mode.j, n_resp)]
        positions = np.concatenate([tail, head])
    elif mode.kind == "explicit":
        positions = np.array(sorted(set(int(p) for p in mode.positions)), dtype=np.int64)
        if len(positions) and (positions[0] < 0 or positions[-1] >= total):
            raise ValueError(f"explicit positions outside sequence of length {total}")
    else:  # unreachable; __post_init__ guards kinds
        raise ValueError(mode.kind)

    positions = np.asarray(positions, dtype=np.int64)
    if len(positions) == 0:
        raise ValueError(f"selection {mode} resolved to no positions")
    return positions


# --- self-evaluation score --------------------------------------------------


@dataclass(frozen=True)
class DiseReport:
    score: float
    positions: tuple
    logprobs: tuple
    nfe: int

    @property
    def n_selected(self) -> int:
        return len(self.positions)


def dise_score(
    backend: DenoisingBackend,
    sequence: SequenceBuffer,
    selection,
    block_size: int = 32,
) -> DiseReport:
    """Mean log regeneration probability over the selected positions.

    The sequence is queried fully unmasked in one backend call; selection is
    a SelectionMode or an iterable of absolute positions. The mean is a
    compensated sum in ascending position order, so enumeration order of the
    selection cannot change the value.
    """
    tokens = sequence.tokens
    if (tokens == backend.vocab.mask_id).any():
        raise CorpusError("cannot score a sequence that still contains mask tokens")
    if isinstance(selection, SelectionMode):
        positions = resolve_selection(
            selection, sequence.prompt_len, sequence.response, backend.vocab.eot_id, block_size
        )
    else:
        positions = np.array(sorted(set(int(p) for p in selection)), dtype=np.int64)
        if len(positions) == 0:
            raise ValueError("empty selection")
        if positions[0] < 0 or positions[-1] >= len(tokens):
            raise ValueError("selection positions outside the sequence")
    before = backend.nfe.value
    q = LogProbQuery.make(tokens, [(int(p), (int(tokens[p]),)) for p in positions])
    results = backend.query_logprobs(q, "bidirectional")
    vals = [float(r[0]) for r in results]
    score = compensated_sum(vals) / len(vals)
    return DiseReport(
        score=score,
        positions=tuple(int(p) for p in positions),
        logprobs=tuple(vals),
        nfe=backend.nfe.value - before,
    )


def uncertainty(report: DiseReport) -> float:
    """Uncertainty is the negated score, by definition."""
    return -report.score


# --- Monte Carlo likelihood bound -------------------------------------------


@dataclass(frozen=True)
class McConfig:
    n_samples: int
    seed: int = 0
    conditional: bool = False

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be at least 1")


@dataclass(frozen=True)
class McEstimate:
    value: float
    n_samples: int
    nfe: int
    std_error: float


def _mc_over_region(
    backend: DenoisingBackend, tokens: np.ndarray, region: np.ndarray, cfg: McConfig
) -> McEstimate:
    tokens = np.asarray(tokens, dtype=np.int64)
    if (tokens == backend.vocab.mask_id).any():
        raise CorpusError("cannot estimate a sequence that already contains mask tokens")
    n = len(region)
    if n == 0:
        raise ValueError("empty masking region")
    before = backend.nfe.value
    trial_values = np.empty(cfg.n_samples, dtype=np.float64)
    for trial in range(cfg.n_samples):
        rs = rng.stream(cfg.seed, "mc", trial)
        l = int(rs.integers(1, n + 1))
        subset = np.sort(region[rs.choice(n, size=l, replace=False)])
        masked = tokens.copy()
        masked[subset] = backend.vocab.mask_id
        q = LogProbQuery.make(masked, [(int(p), (int(tokens[p]),)) for p in subset])
        results = backend.query_logprobs(q, "bidirectional")
        trial_values[trial] = (n / l) * compensated_sum(float(r[0]) for r in results)
    value = compensated_sum(trial_values) / cfg.n_samples
    if cfg.n_samples > 1:
        se = float(trial_values.std(ddof=1) / np.sqrt(cfg.n_samples))
    else:
        se = float("inf")
    return McEstimate(value, cfg.n_samples, backend.nfe.value - before, se)


def mc_log_likelihood(backend: DenoisingBackend, tokens, cfg: McConfig) -> McEstimate:
    """Masked-likelihood bound for a whole sequence; NFE equals n_samples."""
    tokens = np.asarray(tokens, dtype=np.int64)
    return _mc_over_region(backend, tokens, np.arange(len(tokens)), cfg)


def mc_conditional_log_likelihood(
    backend: DenoisingBackend, sequence: SequenceBuffer, cfg: McConfig
) -> McEstimate:
    """Same bound, masking only response positions: estimates log P(resp | prompt)."""
    region = sequence.prompt_len + np.arange(len(sequence.response))
    return _mc_over_region(backend, sequence.tokens, region, cfg)


# --- autoregressive chain rule ----------------------------------------------


@dataclass(frozen=True)
class ArReport:
    value: float
    per_position: tuple
    nfe: int


def _ar_over_positions(backend, tokens: np.ndarray, positions: np.ndarray) -> ArReport:
    before = backend.nfe.value
    q = LogProbQuery.make(tokens, [(int(p), (int(tokens[p]),)) for p in positions])
    results = backend.query_logprobs(q, "causal")
    vals = [float(r[0]) for r in results]
    return ArReport(compensated_sum(vals), tuple(vals), backend.nfe.value - before)


def ar_log_likelihood(backend: DenoisingBackend, tokens) -> ArReport:
    """Exact chain-rule log-likelihood; one forward pass, causal mode."""
    tokens = np.asarray(tokens, dtype=np.int64)
    if len(tokens) == 0:
        raise ValueError("empty sequence")
    return _ar_over_positions(backend, tokens, np.arange(len(tokens)))


def ar_conditional_log_likelihood(
    backend: DenoisingBackend, sequence: SequenceBuffer
) -> ArReport:
    """Chain-rule log P(response | prompt) over response positions."""
    if len(sequence.response) == 0:
        raise ValueError("empty response")
    positions = sequence.prompt_len + np.arange(len(sequence.response))
    return _ar_over_positions(backend, sequence.tokens, positions)


def perplexity(mean_log_likelihood: float) -> float:
    """exp(-mean per-token log-likelihood)."""
    if not np.isfinite(mean_log_likelihood):
        raise ValueError("mean log-likelihood must be finite")
    return float(np.exp(-mean_log_likelihood))

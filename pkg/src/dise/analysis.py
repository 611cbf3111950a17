"""Distribution distances and mechanism studies.

These functions probe why an unmasked token's regeneration probability is
informative at all: replacing a token perturbs the denoising distribution at
its own position far less than masking it does, the ground-truth token stays
high in the unmasked ranking, and randomizing a region of a well-formed
sequence reliably lowers the region's self-evaluation score.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng
from .backend import DenoisingBackend, LogProbQuery
from .corpus import SequenceBuffer, Vocabulary, randomize_tokens
from .scoring import SelectionMode, dise_score, resolve_selection


def _check_distribution(p, name: str) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1:
        raise ValueError(f"{name} must be 1-D")
    if (p < -1e-12).any():
        raise ValueError(f"{name} has negative entries")
    total = float(p.sum())
    if abs(total - 1.0) > 1e-6:
        raise ValueError(f"{name} sums to {total!r}, expected 1 within 1e-6")
    return np.clip(p, 0.0, None)


def js_divergence(p, q) -> float:
    """Jensen-Shannon divergence, natural log; symmetric, in [0, ln 2].

    Zero-probability entries contribute zero (the 0*log 0 convention).
    """
    p = _check_distribution(p, "p")
    q = _check_distribution(q, "q")
    if p.shape != q.shape:
        raise ValueError("p and q must have the same length")
    m = 0.5 * (p + q)
    with np.errstate(divide="ignore", invalid="ignore"):
        kl_pm = float(np.where(p > 0, p * np.log(p / m), 0.0).sum())
        kl_qm = float(np.where(q > 0, q * np.log(q / m), 0.0).sum())
    return 0.5 * kl_pm + 0.5 * kl_qm


def wasserstein_1d(p, q) -> float:
    """Earth-mover distance over token indices with unit adjacent distance:
    the summed absolute difference of the two CDFs."""
    p = _check_distribution(p, "p")
    q = _check_distribution(q, "q")
    if p.shape != q.shape:
        raise ValueError("p and q must have the same length")
    return float(np.abs(np.cumsum(p - q)).sum())


# --- ground-truth rank under replacement -------------------------------------


@dataclass(frozen=True)
class RankSample:
    sequence_id: str
    position: int
    trial: int
    rank: int


def _perturbable_positions(seq: SequenceBuffer, vocab: Vocabulary) -> np.ndarray:
    resp = seq.response
    keep = ~np.isin(resp, np.array(vocab.reserved_ids))
    return seq.prompt_len + np.flatnonzero(keep)


def _row_at(backend: DenoisingBackend, tokens: np.ndarray, position: int) -> np.ndarray:
    q = LogProbQuery.make(tokens, [(int(position), tuple(range(backend.vocab.size)))])
    return backend.query_logprobs(q, "bidirectional")[0]


def gt_rank_experiment(
    backend: DenoisingBackend,
    examples,
    n_trials: int,
    seed: int,
    replacement: str = "random",
    thresholds: tuple = (1, 5, 10, 50),
) -> tuple[list, dict]:
    """Rank of the true token in the denoising row after its position is
    perturbed.

    Each trial independently draws a sequence, a non-reserved response
    position, and a replacement (kind "random": a uniform content token;
    "mask": the mask token; "gt": no change), then ranks the original token
    in the full-vocabulary row at that position. Ties take the minimal rank.
    Returns the samples and the fraction of ranks at or below each
    threshold.
    """
    if replacement not in ("random", "mask", "gt"):
        raise ValueError(f"unknown replacement kind {replacement!r}")
    examples = list(examples)
    if not examples:
        raise ValueError("no examples")
    vocab = backend.vocab
    samples = []
    for trial in range(n_trials):
        rs = rng.stream(seed, "rank", trial)
        ex = examples[int(rs.integers(len(examples)))]
        seq = SequenceBuffer.from_example(ex)
        positions = _perturbable_positions(seq, vocab)
        if len(positions) == 0:
            raise ValueError(f"example {ex.id} has no perturbable positions")
        pos = int(positions[int(rs.integers(len(positions)))])
        gt = int(seq.tokens[pos])
        tokens = seq.tokens.copy()
        if replacement == "random":
            tokens[pos] = int(rs.choice(vocab.content_ids))
        elif replacement == "mask":
            tokens[pos] = vocab.mask_id
        row = _row_at(backend, tokens, pos)
        rank = 1 + int((row > row[gt]).sum())
        samples.append(RankSample(ex.id, pos, trial, rank))
    ranks = np.array([s.rank for s in samples])
    cdf = {t: float((ranks <= t).mean()) for t in thresholds}
    return samples, cdf


# --- replacement vs masking distances ----------------------------------------

DISTANCE_FIELDS = (
    "js_gt_mask", "js_random_mask", "js_gt_random",
    "w1_gt_mask", "w1_random_mask", "w1_gt_random",
)


def replacement_distance_study(
    backend: DenoisingBackend, examples, n_instances: int, seed: int
) -> tuple[list, dict]:
    """Compare the denoising row at a position under three inputs: the
    original token (gt), the mask token, and a random content token.

    Returns per-instance rows (dicts with sequence_id, position, and the six
    pairwise distances) and the field means. Three backend calls per
    instance.
    """
    examples = list(examples)
    if not examples:
        raise ValueError("no examples")
    vocab = backend.vocab
    rows = []
    for i in range(n_instances):
        rs = rng.stream(seed, "dist", i)
        ex = examples[int(rs.integers(len(examples)))]
        seq = SequenceBuffer.from_example(ex)
        positions = _perturbable_positions(seq, vocab)
        if len(positions) == 0:
            raise ValueError(f"example {ex.id} has no perturbable positions")
        pos = int(positions[int(rs.integers(len(positions)))])
        variants = {}
        for kind in ("gt", "mask", "random"):
            tokens = seq.tokens.copy()
            if kind == "mask":
                tokens[pos] = vocab.mask_id
            elif kind == "random":
                tokens[pos] = int(rs.choice(vocab.content_ids))
            variants[kind] = np.exp(_row_at(backend, tokens, pos))
        row = {
            "sequence_id": ex.id,
            "position": pos,
            "js_gt_mask": js_divergence(variants["gt"], variants["mask"]),
            "js_random_mask": js_divergence(variants["random"], variants["mask"]),
            "js_gt_random": js_divergence(variants["gt"], variants["random"]),
            "w1_gt_mask": wasserstein_1d(variants["gt"], variants["mask"]),
            "w1_random_mask": wasserstein_1d(variants["random"], variants["mask"]),
            "w1_gt_random": wasserstein_1d(variants["gt"], variants["random"]),
        }
        rows.append(row)
    means = {k: float(np.mean([r[k] for r in rows])) for k in DISTANCE_FIELDS}
    return rows, means


# --- score drop under randomization ------------------------------------------


def observation_suite(
    backend: DenoisingBackend,
    examples,
    modes=None,
    seed: int = 0,
    block_size: int = 32,
) -> list:
    """Pair each sequence with a copy whose selected region is randomized,
    score both over that same region, and report the differences.

    A well-trained model should give the natural version the higher score in
    nearly every pair, for the full region and for regional windows alike.
    """
    if modes is None:
        modes = (
            SelectionMode("full"),
            SelectionMode("first10"),
            SelectionMode("mid10"),
            SelectionMode("last10"),
        )
    vocab = backend.vocab
    rows = []
    for ex in examples:
        seq = SequenceBuffer.from_example(ex)
        for mode in modes:
            positions = resolve_selection(
                mode, seq.prompt_len, seq.response, vocab.eot_id, block_size
            )
            region = np.zeros(len(seq.tokens), dtype=bool)
            region[positions] = True
            scrambled = randomize_tokens(
                seq, region, rng.derive_seed(seed, "obs", ex.id, str(mode)), vocab
            )
            natural = dise_score(backend, seq, positions).score
            randomized = dise_score(backend, scrambled, positions).score
            rows.append(
                {
                    "sequence_id": ex.id,
                    "mode": str(mode),
                    "score_natural": natural,
                    "score_random": randomized,
                    "diff": natural - randomized,
                }
            )
    return rows


def correctness_split(backend: DenoisingBackend, sequences_labels, modes=None) -> dict:
    """Mean score of correct vs incorrect sequences per selection mode.

    sequences_labels is an iterable of (SequenceBuffer, bool). Returns
    {mode string: (mean correct, mean incorrect, n correct, n incorrect)};
    means are None for empty classes.
    """
    if modes is None:
        modes = (SelectionMode("full"), SelectionMode("last10"))
    pairs = list(sequences_labels)
    if not pairs:
        raise ValueError("no sequences")
    out = {}
    for mode in modes:
        correct, incorrect = [], []
        for seq, label in pairs:
            value = dise_score(backend, seq, mode).score
            (correct if label else incorrect).append(value)
        out[str(mode)] = (
            float(np.mean(correct)) if correct else None,
            float(np.mean(incorrect)) if incorrect else None,
            len(correct),
            len(incorrect),
        )
    return out

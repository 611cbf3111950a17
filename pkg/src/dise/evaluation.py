"""Benchmark harnesses: choice accuracy, uncertainty ranking, best-of-N.

Every harness separates three things explicitly: how an answer is produced,
how it is scored (a Scorer turns a prompt/response pair into a
higher-is-better value and an NFE cost), and how scores are judged
(ranking quality via ROC-AUC of the negated score, or selection quality via
best-of-N accuracy).
"""

from __future__ import annotations

import csv
import dataclasses
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from . import rng
from .backend import DenoisingBackend
from .corpus import ChoiceSet, Example, SequenceBuffer
from .generation import GenerationConfig, extract_answer, generate_fixed
from .scoring import (
    McConfig,
    SelectionMode,
    ar_conditional_log_likelihood,
    dise_score,
    mc_conditional_log_likelihood,
)


def roc_auc(uncertainties, labels) -> float | None:
    """Probability that a correct item carries strictly lower uncertainty
    than an incorrect one, counting ties half.

    Computed from average ranks, so it matches the pairwise definition
    exactly, and arranged so that negating the uncertainties yields exactly
    one minus the result. Returns None when either class is empty.
    """
    u = np.asarray(uncertainties, dtype=np.float64)
    y = np.asarray(labels, dtype=bool)
    if u.shape != y.shape or u.ndim != 1:
        raise ValueError("uncertainties and labels must be equal-length 1-D")
    if np.isnan(u).any():
        raise ValueError("uncertainties contain NaN")
    n_correct = int(y.sum())
    n_incorrect = int((~y).sum())
    if n_correct == 0 or n_incorrect == 0:
        return None
    ranks = rankdata(u, method="average")
    # pairs (correct, incorrect) with u_correct < u_incorrect, ties half:
    u_stat = ranks[~y].sum() - n_incorrect * (n_incorrect + 1) / 2.0
    num = 2.0 * u_stat  # exact: u_stat is a half-integer
    den = 2.0 * n_correct * n_incorrect
    if num <= 0.5 * den:
        return num / den
    return 1.0 - (den - num) / den


# --- scorers ------------------------------------------------------------------


class Scorer:
    """Turns (backend, prompt+response) into a higher-is-better value."""

    name = "scorer"

    def score_response(self, backend, sequence: SequenceBuffer, seed: int = 0):
        raise NotImplementedError


class DiseScorer(Scorer):
    """Self-evaluation score over a selection; deterministic, one pass."""

    def __init__(self, selection: SelectionMode = SelectionMode("last10"), block_size: int = 32):
        self.selection = selection
        self.block_size = block_size
        self.name = f"dise[{selection}]"

    def score_response(self, backend, sequence, seed: int = 0):
        report = dise_score(backend, sequence, self.selection, self.block_size)
        return report.score, report.nfe


class McScorer(Scorer):
    """Monte Carlo conditional likelihood bound over the response.

    per_token divides by response length; it is a diagnostic only and off by
    default, since candidates padded to a common length are comparable raw.
    """

    def __init__(self, n_samples: int, per_token: bool = False):
        self.n_samples = n_samples
        self.per_token = per_token
        self.name = f"mc:{n_samples}" + ("/tok" if per_token else "")

    def score_response(self, backend, sequence, seed: int = 0):
        est = mc_conditional_log_likelihood(
            backend, sequence, McConfig(n_samples=self.n_samples, seed=seed)
        )
        value = est.value / len(sequence.response) if self.per_token else est.value
        return value, est.nfe


class ArScorer(Scorer):
    """Chain-rule conditional log-likelihood; needs a causal backend."""

    name = "ar"

    def score_response(self, backend, sequence, seed: int = 0):
        report = ar_conditional_log_likelihood(backend, sequence)
        return report.value, report.nfe


# --- multiple choice ----------------------------------------------------------


@dataclass
class ChoiceRecord:
    question_id: str
    chosen: int
    correct_index: int
    correct: bool
    scores: list
    nfe: int


@dataclass
class ChoiceEvalReport:
    accuracy: float
    mean_nfe: float
    records: list


def multiple_choice_eval(
    backend: DenoisingBackend,
    choice_sets,
    scorer: Scorer,
    seed: int = 0,
    workers: int = 1,
) -> ChoiceEvalReport:
    """Pick the highest-scoring candidate per question; ties pick the lowest
    index. mean_nfe is per question (summed over its candidates)."""

    def one(cs: ChoiceSet) -> ChoiceRecord:
        scores = []
        spent = 0
        for ci, cand in enumerate(cs.candidates):
            seq = SequenceBuffer(
                np.array(list(cs.prompt) + list(cand), dtype=np.int64), len(cs.prompt)
            )
            value, nfe = scorer.score_response(
                backend, seq, seed=rng.derive_seed(seed, "choice", cs.id, ci)
            )
            scores.append(float(value))
            spent += nfe
        chosen = int(np.argmax(scores))
        return ChoiceRecord(cs.id, chosen, cs.correct_index, chosen == cs.correct_index,
                            scores, spent)

    records = _map_ordered(one, choice_sets, workers)
    accuracy = float(np.mean([r.correct for r in records])) if records else 0.0
    mean_nfe = float(np.mean([r.nfe for r in records])) if records else 0.0
    return ChoiceEvalReport(accuracy, mean_nfe, records)


# --- uncertainty benchmark -----------------------------------------------------


@dataclass
class UqRecord:
    question_id: str
    answer_index: int
    response: tuple
    parsed: str | None
    label: bool
    score: float
    uncertainty: float
    nfe: int

    def __post_init__(self):
        self.uncertainty = -self.score  # by definition, always


@dataclass
class UqReport:
    records: list
    auc: float | None
    accuracy: float
    mean_nfe: float
    n_questions: int
    n_excluded: int


def uq_run(
    backend: DenoisingBackend,
    questions,
    scorer: Scorer,
    gen_cfg: GenerationConfig,
    n_answers: int = 5,
    seed: int = 0,
    task: str = "arithmetic",
    workers: int = 1,
) -> UqReport:
    """Sample n_answers per question, label them against the gold answer,
    score each, and rank by uncertainty (the negated score).

    The ROC-AUC pools every answer of every question; n_excluded counts
    questions whose answers came out single-class (they add no
    discriminative pairs of their own). mean_nfe covers scoring only, since
    the generation cost is identical for every scorer.
    """
    vocab = backend.vocab

    def one(ex: Example) -> list:
        gold = str(ex.extra["answer"])
        rows = []
        for a in range(n_answers):
            sub = rng.derive_seed(seed, "uq", ex.id, a)
            g = dataclasses.replace(gen_cfg, seed=sub)
            resp = generate_fixed(backend, np.array(ex.prompt, dtype=np.int64), g)
            parsed = extract_answer(resp, task, vocab)
            seq = SequenceBuffer(
                np.concatenate([np.array(ex.prompt, dtype=np.int64), resp]), len(ex.prompt)
            )
            value, nfe = scorer.score_response(backend, seq, seed=sub)
            rows.append(
                UqRecord(
                    question_id=ex.id,
                    answer_index=a,
                    response=tuple(int(t) for t in resp),
                    parsed=parsed,
                    label=parsed == gold,
                    score=float(value),
                    uncertainty=0.0,
                    nfe=nfe,
                )
            )
        return rows

    records = [r for rows in _map_ordered(one, questions, workers) for r in rows]
    labels = np.array([r.label for r in records], dtype=bool)
    unc = np.array([r.uncertainty for r in records])
    auc = roc_auc(unc, labels) if len(records) else None
    n_excluded = 0
    for ex in questions:
        ql = [r.label for r in records if r.question_id == ex.id]
        if ql and len(set(ql)) == 1:
            n_excluded += 1
    return UqReport(
        records=records,
        auc=auc,
        accuracy=float(labels.mean()) if len(records) else 0.0,
        mean_nfe=float(np.mean([r.nfe for r in records])) if records else 0.0,
        n_questions=len(questions),
        n_excluded=n_excluded,
    )


def best_of_n(records, n: int) -> float:
    """Accuracy when each question submits its lowest-uncertainty answer
    among its first n; ties pick the lowest answer index."""
    by_q = {}
    for r in records:
        by_q.setdefault(r.question_id, []).append(r)
    if not by_q:
        raise ValueError("no records")
    hits = 0
    for rows in by_q.values():
        rows = sorted(rows, key=lambda r: r.answer_index)[:n]
        best = min(rows, key=lambda r: (r.uncertainty, r.answer_index))
        hits += bool(best.label)
    return hits / len(by_q)


def single_sample_accuracy(records) -> float:
    """Accuracy of answer index 0 alone; the no-selection baseline."""
    rows = [r for r in records if r.answer_index == 0]
    if not rows:
        raise ValueError("no answer-0 records")
    return float(np.mean([r.label for r in rows]))


# --- report files ---------------------------------------------------------------

SUMMARY_COLUMNS = (
    "method", "dataset", "gen_len", "accuracy", "roc_auc",
    "mean_nfe", "n_questions", "n_excluded",
)


@dataclass
class SummaryRow:
    method: str
    dataset: str
    gen_len: int
    accuracy: float
    roc_auc: float | None
    mean_nfe: float
    n_questions: int
    n_excluded: int


def write_records_jsonl(records, path, config_hash: str = "", seed: int = 0) -> None:
    """One JSON object per record; dataclass fields plus run identity."""
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            obj = dataclasses.asdict(r) if dataclasses.is_dataclass(r) else dict(r)
            obj["config_hash"] = config_hash
            obj["seed"] = seed
            f.write(json.dumps(obj, sort_keys=True) + "\n")


def write_summary_csv(rows, path, config_hash: str = "", seed: int = 0) -> None:
    """Fixed-column summary; identity goes in a comment row, not a timestamp."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(f"# config_hash={config_hash} seed={seed}\n")
        writer = csv.writer(f)
        writer.writerow(SUMMARY_COLUMNS)
        for row in rows:
            writer.writerow(
                [
                    row.method,
                    row.dataset,
                    row.gen_len,
                    f"{row.accuracy:.6f}",
                    "" if row.roc_auc is None else f"{row.roc_auc:.6f}",
                    f"{row.mean_nfe:.3f}",
                    row.n_questions,
                    row.n_excluded,
                ]
            )


def _map_ordered(fn, items, workers: int):
    """Map preserving input order; thread pool only when workers > 1."""
    items = list(items)
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))

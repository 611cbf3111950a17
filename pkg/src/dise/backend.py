"""Denoising backends: a uniform log-probability query interface.

A backend answers batched queries of the form "log-probability of these
target tokens at this position of this sequence" and meters its own cost in
forward passes (NFE). Scoring, generation, and analysis code talk only to
this interface, so the same experiment runs against an in-process model, a
fixed stub table, or a remote service.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass

import numpy as np

from .errors import BackendError
from .corpus import Vocabulary
from .model import ModelParams, forward


@dataclass(frozen=True)
class LogProbQuery:
    """One sequence plus (position, target token ids) sub-queries."""

    tokens: tuple
    queries: tuple  # of (position, (target ids...))

    @classmethod
    def make(cls, tokens, queries) -> "LogProbQuery":
        toks = tuple(int(t) for t in tokens)
        qs = tuple((int(pos), tuple(int(t) for t in targets)) for pos, targets in queries)
        return cls(toks, qs)


class NfeCounter:
    """Thread-safe forward-pass tally."""

    def __init__(self):
        self._lock = threading.Lock()
        self._count = 0

    def increment(self, n: int = 1) -> None:
        with self._lock:
            self._count += n

    def reset(self) -> None:
        with self._lock:
            self._count = 0

    @property
    def value(self) -> int:
        with self._lock:
            return self._count


class DenoisingBackend:
    """Interface: query_logprobs plus capability flags and an NFE meter."""

    supports_bidirectional = True
    supports_causal = False

    def __init__(self, vocab: Vocabulary, context_limit: int):
        self.vocab = vocab
        self.context_limit = context_limit
        self.nfe = NfeCounter()

    def _validate(self, q: LogProbQuery, mode: str) -> None:
        if mode not in ("bidirectional", "causal"):
            raise BackendError(f"unknown mode {mode!r}")
        if mode == "bidirectional" and not self.supports_bidirectional:
            raise BackendError("backend does not support bidirectional queries")
        if mode == "causal" and not self.supports_causal:
            raise BackendError("backend does not support causal queries")
        n = len(q.tokens)
        if n == 0:
            raise BackendError("empty token sequence")
        if n > self.context_limit:
            raise BackendError(f"sequence length {n} exceeds context limit {self.context_limit}")
        if not q.queries:
            raise BackendError("no sub-queries")
        for tok in q.tokens:
            if not 0 <= tok < self.vocab.size:
                raise BackendError(f"token id {tok} outside vocabulary")
        for pos, targets in q.queries:
            if not 0 <= pos < n:
                raise BackendError(f"query position {pos} outside sequence of length {n}")
            if not targets:
                raise BackendError(f"query at position {pos} has no targets")
            for t in targets:
                if not 0 <= t < self.vocab.size:
                    raise BackendError(f"target id {t} outside vocabulary")

    def _rows(self, tokens: np.ndarray, mode: str) -> np.ndarray:
        raise NotImplementedError

    def query_logprobs(self, q: LogProbQuery, mode: str = "bidirectional") -> list:
        """Answer every sub-query; duplicates get duplicated answers.

        Returns one float64 array per sub-query, aligned with its targets.
        In bidirectional mode row i conditions on the whole sequence as
        given; in causal mode row i conditions on tokens strictly before i.
        """
        self._validate(q, mode)
        rows = self._rows(np.array(q.tokens, dtype=np.int64), mode)
        return [rows[pos][list(targets)].copy() for pos, targets in q.queries]


class LocalBackend(DenoisingBackend):
    """In-process model; one forward pass per query_logprobs call."""

    supports_causal = True

    def __init__(self, params: ModelParams, vocab: Vocabulary):
        if vocab.size != params.hp.vocab_size:
            raise BackendError(
                f"vocabulary size {vocab.size} != model vocabulary {params.hp.vocab_size}"
            )
        super().__init__(vocab, params.hp.context)
        self.params = params

    def _rows(self, tokens: np.ndarray, mode: str) -> np.ndarray:
        if mode == "causal":
            shifted = np.concatenate([[self.vocab.bos_id], tokens[:-1]])
            out = forward(self.params, shifted, "causal")
        else:
            out = forward(self.params, tokens, "bidirectional")
        self.nfe.increment(1)
        return out


class TableBackend(DenoisingBackend):
    """Stub backend producing rows from a pure function of the sequence.

    table_fn(tokens, mode) must return a (len, vocab) array of log
    probabilities. Useful as a frozen oracle target in tests and demos; it
    still meters one forward pass per call so NFE accounting stays honest.
    """

    supports_causal = True

    def __init__(self, vocab: Vocabulary, table_fn, context_limit: int = 4096):
        super().__init__(vocab, context_limit)
        self._fn = table_fn

    def _rows(self, tokens: np.ndarray, mode: str) -> np.ndarray:
        rows = np.asarray(self._fn(tokens, mode), dtype=np.float64)
        if rows.shape != (len(tokens), self.vocab.size):
            raise BackendError(
                f"stub table shape {rows.shape} != {(len(tokens), self.vocab.size)}"
            )
        self.nfe.increment(1)
        return rows

    @classmethod
    def uniform(cls, vocab: Vocabulary, context_limit: int = 4096) -> "TableBackend":
        row = np.full(vocab.size, -np.log(vocab.size))
        return cls(vocab, lambda toks, mode: np.tile(row, (len(toks), 1)), context_limit)

    @classmethod
    def echo(cls, vocab: Vocabulary, context_limit: int = 4096) -> "TableBackend":
        """Probability ~1 on the token actually present at each position."""

        def fn(toks, mode):
            rows = np.full((len(toks), vocab.size), -1e9)
            rows[np.arange(len(toks)), toks] = 0.0
            return rows

        return cls(vocab, fn, context_limit)

"""Vocabularies, token sequences, and corpus generators.

Tokenization is whole-symbol: every vocabulary entry is one token and text
fields are whitespace-joined symbol strings. Four reserved tokens occupy the
lowest ids in every vocabulary: a mask placeholder, an end-of-text marker
used to pad responses, a pad token, and a begin-of-sequence anchor used by
causal scoring.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import CorpusError
from . import rng

MASK_SYMBOL = "<mask>"
EOT_SYMBOL = "<eot>"
PAD_SYMBOL = "<pad>"
BOS_SYMBOL = "<bos>"
RESERVED_SYMBOLS = (MASK_SYMBOL, EOT_SYMBOL, PAD_SYMBOL, BOS_SYMBOL)

MAX_VOCAB = 512


@dataclass(frozen=True)
class Vocabulary:
    """Bijective symbol/id table with the reserved tokens at ids 0..3."""

    symbols: tuple[str, ...]

    def __post_init__(self):
        if tuple(self.symbols[: len(RESERVED_SYMBOLS)]) != RESERVED_SYMBOLS:
            raise CorpusError("vocabulary must start with the reserved symbols")
        if len(set(self.symbols)) != len(self.symbols):
            raise CorpusError("vocabulary symbols must be unique")
        if len(self.symbols) > MAX_VOCAB:
            raise CorpusError(f"vocabulary size {len(self.symbols)} exceeds {MAX_VOCAB}")
        object.__setattr__(self, "_ids", {s: i for i, s in enumerate(self.symbols)})

    @classmethod
    def build(cls, content_symbols) -> "Vocabulary":
        return cls(RESERVED_SYMBOLS + tuple(content_symbols))

    @property
    def size(self) -> int:
        return len(self.symbols)

    mask_id = 0
    eot_id = 1
    pad_id = 2
    bos_id = 3

    @property
    def reserved_ids(self) -> tuple[int, ...]:
        return (self.mask_id, self.eot_id, self.pad_id, self.bos_id)

    @property
    def content_ids(self) -> np.ndarray:
        return np.arange(len(RESERVED_SYMBOLS), self.size)

    def encode(self, text: str) -> list[int]:
        ids = []
        for sym in text.split():
            if sym not in self._ids:
                raise CorpusError(f"unknown symbol {sym!r}")
            ids.append(self._ids[sym])
        return ids

    def decode(self, ids) -> str:
        out = []
        for i in ids:
            i = int(i)
            if not 0 <= i < self.size:
                raise CorpusError(f"token id {i} out of range for vocabulary of size {self.size}")
            out.append(self.symbols[i])
        return " ".join(out)


@dataclass
class Example:
    """One prompt/response pair, already tokenized.

    label is the task's correctness bit when known; extra carries any
    additional record fields and survives file round trips.
    """

    id: str
    prompt: list[int]
    response: list[int]
    label: bool | None = None
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True)
class SequenceBuffer:
    """A full token sequence with its prompt/response boundary."""

    tokens: np.ndarray
    prompt_len: int

    def __post_init__(self):
        object.__setattr__(self, "tokens", np.asarray(self.tokens, dtype=np.int64))
        if not 0 <= self.prompt_len <= len(self.tokens):
            raise CorpusError("prompt length outside sequence bounds")

    @classmethod
    def from_example(cls, ex: Example) -> "SequenceBuffer":
        return cls(np.array(list(ex.prompt) + list(ex.response), dtype=np.int64), len(ex.prompt))

    @property
    def prompt(self) -> np.ndarray:
        return self.tokens[: self.prompt_len]

    @property
    def response(self) -> np.ndarray:
        return self.tokens[self.prompt_len :]

    def __len__(self) -> int:
        return len(self.tokens)


def validate_example(ex: Example, vocab: Vocabulary, strict_eot: bool = True) -> None:
    """Check the structural rules every corpus example must satisfy."""
    if len(ex.prompt) == 0:
        raise CorpusError(f"example {ex.id}: empty prompt")
    for tok in list(ex.prompt) + list(ex.response):
        if not 0 <= int(tok) < vocab.size:
            raise CorpusError(f"example {ex.id}: token id {tok} out of range")
    if strict_eot and len(ex.response):
        resp = np.asarray(ex.response)
        eot = resp == vocab.eot_id
        if eot.any() and not eot[int(np.argmax(eot)) :].all():
            raise CorpusError(f"example {ex.id}: end-of-text token inside the response body")


# --- template grammar -------------------------------------------------------


@dataclass(frozen=True)
class GrammarSpec:
    """Weighted sentence templates with single-token slot fillers."""

    templates: tuple[tuple[str, float], ...]
    slots: dict

    def __post_init__(self):
        if not self.templates:
            raise CorpusError("grammar needs at least one template")
        total = sum(w for _, w in self.templates)
        if abs(total - 1.0) > 1e-9:
            raise CorpusError(f"template weights sum to {total!r}, expected 1")
        for pattern, w in self.templates:
            if w < 0:
                raise CorpusError("template weights must be non-negative")
            for sym in pattern.split():
                name = _slot_name(sym)
                if name is not None and name not in self.slots:
                    raise CorpusError(f"template references unknown slot {name!r}")
        for name, values in self.slots.items():
            if not values:
                raise CorpusError(f"slot {name!r} has no fillers")

    @classmethod
    def from_json(cls, text: str) -> "GrammarSpec":
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as e:
            raise CorpusError(f"grammar is not valid JSON: {e}") from None
        try:
            templates = tuple((t["pattern"], float(t["weight"])) for t in obj["templates"])
            slots = {str(k): list(map(str, v)) for k, v in obj["slots"].items()}
        except (KeyError, TypeError) as e:
            raise CorpusError(f"grammar JSON missing field: {e}") from None
        return cls(templates, slots)

    def to_json(self) -> str:
        obj = {
            "templates": [{"pattern": p, "weight": w} for p, w in self.templates],
            "slots": {k: list(v) for k, v in sorted(self.slots.items())},
        }
        return json.dumps(obj, indent=2, sort_keys=True)

    def max_sentence_len(self) -> int:
        return max(len(p.split()) for p, _ in self.templates)

    def symbols(self) -> list[str]:
        """All content symbols any sentence from this grammar can contain."""
        seen = set()
        for pattern, _ in self.templates:
            for sym in pattern.split():
                if _slot_name(sym) is None:
                    seen.add(sym)
        for values in self.slots.values():
            seen.update(values)
        return sorted(seen)


def _slot_name(sym: str) -> str | None:
    if sym.startswith("{") and sym.endswith("}") and len(sym) > 2:
        return sym[1:-1]
    return None


DEFAULT_GRAMMAR = GrammarSpec(
    templates=(
        ("the {adj} {animal} {verb} in the {place} while the {object} waits", 0.25),
        ("a {adj} {animal} {verb} near the {place} and a {adj} {object} rests there", 0.20),
        ("every {animal} in the {place} {verb} until the {adj} {object} turns away", 0.20),
        ("no {animal} ever {verb} behind the {object} because the {place} stays {adj}", 0.20),
        ("the {object} beside the {place} {verb} while some {adj} {animal} watches quietly", 0.15),
    ),
    slots={
        "animal": ["fox", "crow", "otter", "heron", "mouse", "badger"],
        "verb": ["sleeps", "hides", "drifts", "lingers", "turns", "settles"],
        "adj": ["quiet", "pale", "small", "clever", "rusty"],
        "object": ["lantern", "basket", "ladder", "kettle", "wagon"],
        "place": ["meadow", "harbor", "orchard", "cellar", "tower"],
    },
)


def grammar_vocabulary(spec: GrammarSpec = DEFAULT_GRAMMAR) -> Vocabulary:
    return Vocabulary.build(spec.symbols())


def generate_grammar_corpus(
    spec: GrammarSpec,
    n: int,
    seed: int,
    vocab: Vocabulary | None = None,
    max_len: int | None = None,
) -> list[Example]:
    """Sample n sentences; prompt is a lone begin-of-sequence token.

    Each example records its template index under extra["template"]. max_len,
    when given, bounds the full sequence (prompt + sentence) so every
    producible sentence fits the model context.
    """
    vocab = vocab or grammar_vocabulary(spec)
    if max_len is not None and spec.max_sentence_len() + 1 > max_len:
        raise CorpusError(
            f"grammar can produce sentences of {spec.max_sentence_len()} tokens, "
            f"over the limit of {max_len - 1}"
        )
    weights = np.array([w for _, w in spec.templates], dtype=np.float64)
    weights = weights / weights.sum()
    rs = rng.stream(seed, "grammar")
    out = []
    for i in range(n):
        t = int(rs.choice(len(spec.templates), p=weights))
        pattern, _ = spec.templates[t]
        words = []
        for sym in pattern.split():
            name = _slot_name(sym)
            if name is None:
                words.append(sym)
            else:
                values = spec.slots[name]
                words.append(values[int(rs.integers(len(values)))])
        ex = Example(
            id=f"g{i:05d}",
            prompt=[vocab.bos_id],
            response=vocab.encode(" ".join(words)),
            extra={"template": t},
        )
        out.append(ex)
    return out


# --- digit-wise addition ----------------------------------------------------

ARITH_SYMBOLS = tuple(str(d) for d in range(10)) + ("+", "=")


def arithmetic_vocabulary() -> Vocabulary:
    return Vocabulary.build(ARITH_SYMBOLS)


def _digits(value: int) -> str:
    return " ".join(str(value))


def arithmetic_example(
    a: int,
    b: int,
    vocab: Vocabulary,
    response_len: int | None = 4,
    id: str = "a00000",
) -> Example:
    """One addition task: prompt 'a + b =', response digits of a+b.

    With an integer response_len the digits are padded to that width with
    end-of-text tokens; response_len=None keeps the natural length, digits
    plus a single end-of-text token, so different answers give different
    sequence lengths.
    """
    answer = str(a + b)
    prompt = vocab.encode(f"{_digits(a)} + {_digits(b)} =")
    resp = vocab.encode(_digits(a + b))
    if response_len is None:
        response_len = len(resp) + 1
    if len(resp) > response_len:
        raise CorpusError(f"answer {answer} does not fit a response of {response_len} tokens")
    resp = resp + [vocab.eot_id] * (response_len - len(resp))
    return Example(id=id, prompt=prompt, response=resp, label=True, extra={"answer": answer})


def generate_arithmetic_tasks(
    n: int,
    seed: int,
    vocab: Vocabulary | None = None,
    digit_range: tuple[int, int] = (1, 1),
    response_len: int | None = 4,
) -> list[Example]:
    """Sample n addition tasks with operands of digit_range digits.

    response_len=None gives every task its natural response length (answer
    digits plus one end-of-text token).
    """
    vocab = vocab or arithmetic_vocabulary()
    lo, hi = digit_range
    if not 1 <= lo <= hi:
        raise CorpusError(f"bad digit range {digit_range}")
    rs = rng.stream(seed, "arithmetic")
    out = []
    for i in range(n):
        ops = []
        for _ in range(2):
            d = int(rs.integers(lo, hi + 1))
            ops.append(int(rs.integers(0, 10**d)))
        out.append(arithmetic_example(ops[0], ops[1], vocab, response_len, id=f"a{i:05d}"))
    return out


def check_arithmetic(ex: Example, vocab: Vocabulary) -> bool:
    """Recompute the label by re-parsing prompt and response."""
    try:
        text = vocab.decode(ex.prompt)
        left, right = text.split("+")
        a = int(left.replace("=", "").replace(" ", ""))
        b = int(right.replace("=", "").replace(" ", ""))
    except (ValueError, CorpusError):
        return False
    resp = [vocab.symbols[int(t)] for t in ex.response]
    digits = [s for s in resp if s.isdigit()]
    body = [s for s in resp if s != EOT_SYMBOL]
    if digits != body:
        return False
    return "".join(digits) == str(a + b)


@dataclass
class ChoiceSet:
    """A prompt with candidate responses, exactly one correct."""

    id: str
    prompt: list[int]
    candidates: list[list[int]]
    correct_index: int
    extra: dict = field(default_factory=dict)


def generate_choice_sets(
    n: int,
    seed: int,
    vocab: Vocabulary | None = None,
    n_choices: int = 4,
    digit_range: tuple[int, int] = (1, 1),
) -> list[ChoiceSet]:
    """Addition questions with distractor sums.

    Distractors are wrong values near the true sum (with uniform fallbacks),
    and all candidates are padded with end-of-text tokens to a common length
    so their conditional likelihoods are comparable.
    """
    vocab = vocab or arithmetic_vocabulary()
    lo, hi = digit_range
    if not 1 <= lo <= hi:
        raise CorpusError(f"bad digit range {digit_range}")
    if n_choices < 2:
        raise CorpusError("need at least two candidates")
    rs = rng.stream(seed, "choices")
    max_sum = 2 * (10**hi - 1)
    out = []
    for i in range(n):
        ops = []
        for _ in range(2):
            d = int(rs.integers(lo, hi + 1))
            ops.append(int(rs.integers(0, 10**d)))
        gold = ops[0] + ops[1]
        values = [gold]
        while len(values) < n_choices:
            if rs.random() < 0.7:
                v = gold + int(rs.integers(1, 6)) * (1 if rs.random() < 0.5 else -1)
            else:
                v = int(rs.integers(0, max_sum + 1))
            if v >= 0 and v not in values:
                values.append(v)
        order = rs.permutation(n_choices)
        shuffled = [values[j] for j in order]
        token_lists = [vocab.encode(_digits(v)) for v in shuffled]
        width = max(len(t) for t in token_lists)
        token_lists = [t + [vocab.eot_id] * (width - len(t)) for t in token_lists]
        out.append(
            ChoiceSet(
                id=f"c{i:05d}",
                prompt=vocab.encode(f"{_digits(ops[0])} + {_digits(ops[1])} ="),
                candidates=token_lists,
                correct_index=int(np.flatnonzero(order == 0)[0]),
                extra={"values": shuffled},
            )
        )
    return out


def save_vocab(vocab: Vocabulary, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump({"symbols": list(vocab.symbols)}, f, indent=0, sort_keys=True)
        f.write("\n")


def load_vocab(path) -> Vocabulary:
    with open(path, "r", encoding="utf-8") as f:
        try:
            obj = json.load(f)
            return Vocabulary(tuple(str(s) for s in obj["symbols"]))
        except (json.JSONDecodeError, KeyError, TypeError) as e:
            raise CorpusError(f"{path}: not a vocabulary file ({e})") from None


# --- random token replacement ----------------------------------------------


def randomize_tokens(
    x: SequenceBuffer, region: np.ndarray, seed: int, vocab: Vocabulary
) -> SequenceBuffer:
    """Replace the tokens at region positions with uniform content-token draws.

    region is a boolean mask over the full sequence; an all-zero region
    returns an identical copy. Reserved ids never appear among the
    replacements, but a draw may coincide with the token already there.
    """
    region = np.asarray(region, dtype=bool)
    if region.shape != x.tokens.shape:
        raise CorpusError(f"region shape {region.shape} does not match sequence {x.tokens.shape}")
    support = vocab.content_ids
    if len(support) == 0:
        raise CorpusError("no non-reserved tokens available to draw replacements from")
    if not region.any():
        return SequenceBuffer(x.tokens.copy(), x.prompt_len)
    rs = rng.stream(seed, "randomize")
    tokens = x.tokens.copy()
    tokens[region] = rs.choice(support, size=int(region.sum()), replace=True)
    return SequenceBuffer(tokens, x.prompt_len)


# --- jsonl ------------------------------------------------------------------

_KNOWN_KEYS = ("id", "prompt", "response", "label")


def save_jsonl(examples, path, vocab: Vocabulary) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for ex in examples:
            record = {
                "id": ex.id,
                "prompt": vocab.decode(ex.prompt),
                "response": vocab.decode(ex.response),
            }
            if ex.label is not None:
                record["label"] = bool(ex.label)
            for k, v in ex.extra.items():
                if k not in _KNOWN_KEYS:
                    record[k] = v
            f.write(json.dumps(record, sort_keys=True) + "\n")


def load_jsonl(path, vocab: Vocabulary, strict_eot: bool = True) -> list[Example]:
    """Read examples; errors carry the line number.

    strict_eot enforces the corpus rule that end-of-text tokens appear only
    as a trailing run; pass False for files of sampled model output, where
    interior markers are possible and meaningful.
    """
    out = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise CorpusError(f"{path}: line {lineno}: invalid JSON ({e.msg})") from None
            try:
                ex = Example(
                    id=str(record.pop("id")),
                    prompt=vocab.encode(record.pop("prompt")),
                    response=vocab.encode(record.pop("response")),
                    label=record.pop("label", None),
                    extra=record,
                )
                validate_example(ex, vocab, strict_eot=strict_eot)
            except (KeyError, CorpusError) as e:
                msg = e.args[0] if e.args else e
                raise CorpusError(f"{path}: line {lineno}: {msg}") from None
            out.append(ex)
    return out

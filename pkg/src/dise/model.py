"""A small numpy transformer denoiser with a hand-derived backward pass.

The network is pre-norm: token + position embeddings, `layers` blocks of
(LayerNorm, multi-head self-attention, residual) then (LayerNorm, ReLU MLP
with hidden width 4*width, residual), a final LayerNorm, and an output
projection to vocabulary logits (no bias). Two attention modes share the
weights: bidirectional (every position attends everywhere; output row i is
the denoising distribution for position i given the whole input) and causal
(lower-triangular attention; output row i is the distribution over the token
following input position i, so callers prepend a begin-of-sequence token and
drop the last input token to score position i from strictly earlier ones).

Parameters are stored canonically as float32 arrays; every computation
upcasts to float64, and updates are cast back, so saving and loading a
checkpoint reproduces parameters bit for bit.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import CheckpointError, CorpusError, TrainingDiverged
from . import rng
from .corpus import Vocabulary

LN_EPS = 1e-5

MODES = ("bidirectional", "causal")


@dataclass(frozen=True)
class HParams:
    """Architecture dimensions. Width must divide evenly into heads."""

    vocab_size: int
    context: int
    width: int = 64
    heads: int = 4
    layers: int = 2

    def __post_init__(self):
        if self.width % self.heads != 0:
            raise ValueError(f"width {self.width} not divisible by {self.heads} heads")
        for name in ("vocab_size", "context", "width", "heads", "layers"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")

    @property
    def d_ff(self) -> int:
        return 4 * self.width


def param_order(hp: HParams) -> list[tuple[str, tuple[int, ...]]]:
    """Canonical (name, shape) list; checkpoints serialize in this order."""
    d, f, v, c = hp.width, hp.d_ff, hp.vocab_size, hp.context
    entries = [("tok_emb", (v, d)), ("pos_emb", (c, d))]
    for i in range(hp.layers):
        p = f"l{i}."
        entries += [
            (p + "ln1_g", (d,)), (p + "ln1_b", (d,)),
            (p + "wq", (d, d)), (p + "bq", (d,)),
            (p + "wk", (d, d)), (p + "bk", (d,)),
            (p + "wv", (d, d)), (p + "bv", (d,)),
            (p + "wo", (d, d)), (p + "bo", (d,)),
            (p + "ln2_g", (d,)), (p + "ln2_b", (d,)),
            (p + "w1", (d, f)), (p + "b1", (f,)),
            (p + "w2", (f, d)), (p + "b2", (d,)),
        ]
    entries += [("lnf_g", (d,)), ("lnf_b", (d,)), ("w_out", (d, v))]
    return entries


@dataclass
class ModelParams:
    hp: HParams
    arrays: dict = field(default_factory=dict)

    def copy(self) -> "ModelParams":
        return ModelParams(self.hp, {k: v.copy() for k, v in self.arrays.items()})

    def astype64(self) -> dict:
        return {k: v.astype(np.float64) for k, v in self.arrays.items()}


def init_parameters(hp: HParams, seed: int, zero_output: bool = True) -> ModelParams:
    """Gaussian(0, 0.02) weights, zero biases, unit norm gains.

    The output projection starts at zero by default so a fresh model emits
    exactly uniform distributions; pass zero_output=False for a generic point.
    """
    rs = rng.stream(seed, "init")
    arrays = {}
    for name, shape in param_order(hp):
        base = name.split(".")[-1]
        if base.startswith(("ln1_g", "ln2_g", "lnf_g")):
            a = np.ones(shape)
        elif base.startswith(("b", "ln")):
            a = np.zeros(shape)
        elif name == "w_out" and zero_output:
            a = np.zeros(shape)
        else:
            a = rs.normal(0.0, 0.02, size=shape)
        arrays[name] = a.astype(np.float32)
    return ModelParams(hp, arrays)


def perturb_params(params: ModelParams, scale: float, seed: int) -> ModelParams:
    """Add Gaussian noise to every array; useful for generic-point tests."""
    rs = rng.stream(seed, "perturb")
    out = params.copy()
    for name in out.arrays:
        noise = rs.normal(0.0, scale, size=out.arrays[name].shape)
        out.arrays[name] = (out.arrays[name].astype(np.float64) + noise).astype(np.float32)
    return out


# --- forward ----------------------------------------------------------------


def _layer_norm(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = xc * inv
    return xhat * g + b, (xhat, inv)


def _layer_norm_backward(dy, cache, g):
    xhat, inv = cache
    dg = (dy * xhat).sum(axis=(0, 1))
    db = dy.sum(axis=(0, 1))
    dxh = dy * g
    m1 = dxh.mean(axis=-1, keepdims=True)
    m2 = (dxh * xhat).mean(axis=-1, keepdims=True)
    dx = inv * (dxh - m1 - xhat * m2)
    return dx, dg, db


def _split_heads(x, heads):
    b, t, d = x.shape
    return x.reshape(b, t, heads, d // heads).transpose(0, 2, 1, 3)


def _merge_heads(x):
    b, h, t, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, t, h * dh)


def _log_softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def _forward_core(p, hp, ids, causal, want_cache):
    b, t = ids.shape
    x = p["tok_emb"][ids] + p["pos_emb"][:t]
    mask = None
    if causal:
        mask = np.tril(np.ones((t, t), dtype=bool))
    cache = {"ids": ids, "x0_shape": x.shape, "layers": []}
    for i in range(hp.layers):
        pre = f"l{i}."
        a1, ln1 = _layer_norm(x, p[pre + "ln1_g"], p[pre + "ln1_b"])
        q = a1 @ p[pre + "wq"] + p[pre + "bq"]
        k = a1 @ p[pre + "wk"] + p[pre + "bk"]
        v = a1 @ p[pre + "wv"] + p[pre + "bv"]
        qh, kh, vh = (_split_heads(z, hp.heads) for z in (q, k, v))
        scale = 1.0 / np.sqrt(qh.shape[-1])
        s = (qh @ kh.transpose(0, 1, 3, 2)) * scale
        if causal:
            s = np.where(mask, s, -np.inf)
        s = s - s.max(axis=-1, keepdims=True)
        e = np.exp(s)
        attn = e / e.sum(axis=-1, keepdims=True)
        ctx = _merge_heads(attn @ vh)
        att_out = ctx @ p[pre + "wo"] + p[pre + "bo"]
        x_after_attn = x + att_out
        a2, ln2 = _layer_norm(x_after_attn, p[pre + "ln2_g"], p[pre + "ln2_b"])
        h1 = a2 @ p[pre + "w1"] + p[pre + "b1"]
        r = np.maximum(h1, 0.0)
        x = x_after_attn + r @ p[pre + "w2"] + p[pre + "b2"]
        if want_cache:
            cache["layers"].append(
                {"a1": a1, "ln1": ln1, "qh": qh, "kh": kh, "vh": vh, "attn": attn,
                 "ctx": ctx, "ln2": ln2, "a2": a2, "h1": h1, "r": r, "scale": scale}
            )
    hf, lnf = _layer_norm(x, p["lnf_g"], p["lnf_b"])
    logits = hf @ p["w_out"]
    if want_cache:
        cache["lnf"] = lnf
        cache["hf"] = hf
    return logits, cache


def _check_ids(hp: HParams, ids: np.ndarray) -> np.ndarray:
    ids = np.asarray(ids, dtype=np.int64)
    if ids.ndim == 1:
        ids = ids[None, :]
    if ids.ndim != 2 or ids.shape[1] == 0:
        raise CorpusError("token input must be a non-empty 1-D or 2-D integer array")
    if ids.shape[1] > hp.context:
        raise CorpusError(f"sequence length {ids.shape[1]} exceeds context {hp.context}")
    if ids.min() < 0 or ids.max() >= hp.vocab_size:
        raise CorpusError("token id out of vocabulary range")
    return ids


def forward(params: ModelParams, ids: np.ndarray, mode: str = "bidirectional") -> np.ndarray:
    """Per-position log-probability table; shape (..., len, vocab)."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    arr = np.asarray(ids, dtype=np.int64)
    squeeze = arr.ndim == 1
    batch = _check_ids(params.hp, arr)
    logits, _ = _forward_core(params.astype64(), params.hp, batch, mode == "causal", False)
    logp = _log_softmax(logits)
    return logp[0] if squeeze else logp


# --- loss and gradients -----------------------------------------------------


@dataclass
class TrainingBatch:
    """Inputs for one optimization step.

    weights carries the per-position loss scale (zero where a position does
    not contribute); the loss is the weighted sum of token negative
    log-likelihoods.
    """

    ids: np.ndarray
    targets: np.ndarray
    weights: np.ndarray
    mode: str = "bidirectional"


def _loss_from_logits(logits, targets, weights):
    logp = _log_softmax(logits)
    picked = np.take_along_axis(logp, targets[..., None], axis=-1)[..., 0]
    return -(weights * picked).sum(), logp


def loss_value(params: ModelParams, batch: TrainingBatch) -> float:
    logits, _ = _forward_core(
        params.astype64(), params.hp, np.asarray(batch.ids), batch.mode == "causal", False
    )
    loss, _ = _loss_from_logits(logits, np.asarray(batch.targets), np.asarray(batch.weights))
    return float(loss)


def loss_and_grads(params: ModelParams, batch: TrainingBatch) -> tuple[float, dict]:
    """Weighted cross-entropy and its exact gradient for every array."""
    if batch.mode not in MODES:
        raise ValueError(f"unknown mode {batch.mode!r}")
    hp = params.hp
    p = params.astype64()
    ids = np.asarray(batch.ids, dtype=np.int64)
    targets = np.asarray(batch.targets, dtype=np.int64)
    weights = np.asarray(batch.weights, dtype=np.float64)
    logits, cache = _forward_core(p, hp, ids, batch.mode == "causal", True)
    loss, logp = _loss_from_logits(logits, targets, weights)

    b, t, v = logits.shape
    probs = np.exp(logp)
    dlogits = probs.copy()
    np.put_along_axis(
        dlogits, targets[..., None], np.take_along_axis(dlogits, targets[..., None], -1) - 1.0, -1
    )
    dlogits *= weights[..., None]

    g = {name: None for name in p}
    flat = lambda z: z.reshape(-1, z.shape[-1])
    hf = cache["hf"]
    g["w_out"] = flat(hf).T @ flat(dlogits)
    dhf = dlogits @ p["w_out"].T
    dx, g["lnf_g"], g["lnf_b"] = _layer_norm_backward(dhf, cache["lnf"], p["lnf_g"])

    for i in reversed(range(hp.layers)):
        pre = f"l{i}."
        c = cache["layers"][i]
        # MLP block
        df = dx
        g[pre + "b2"] = df.sum(axis=(0, 1))
        g[pre + "w2"] = flat(c["r"]).T @ flat(df)
        dr = df @ p[pre + "w2"].T
        dh1 = dr * (c["h1"] > 0)
        g[pre + "b1"] = dh1.sum(axis=(0, 1))
        g[pre + "w1"] = flat(c["a2"]).T @ flat(dh1)
        da2 = dh1 @ p[pre + "w1"].T
        dx2, g[pre + "ln2_g"], g[pre + "ln2_b"] = _layer_norm_backward(
            da2, c["ln2"], p[pre + "ln2_g"]
        )
        dx = dx + dx2
        # attention block
        datt = dx
        g[pre + "bo"] = datt.sum(axis=(0, 1))
        g[pre + "wo"] = flat(c["ctx"]).T @ flat(datt)
        dctx = _split_heads(datt @ p[pre + "wo"].T, hp.heads)
        dattn = dctx @ c["vh"].transpose(0, 1, 3, 2)
        dvh = c["attn"].transpose(0, 1, 3, 2) @ dctx
        tmp = (dattn * c["attn"]).sum(axis=-1, keepdims=True)
        ds = c["attn"] * (dattn - tmp)
        dqh = (ds @ c["kh"]) * c["scale"]
        dkh = (ds.transpose(0, 1, 3, 2) @ c["qh"]) * c["scale"]
        dq, dk, dv = (_merge_heads(z) for z in (dqh, dkh, dvh))
        a1 = c["a1"]
        g[pre + "wq"] = flat(a1).T @ flat(dq)
        g[pre + "bq"] = dq.sum(axis=(0, 1))
        g[pre + "wk"] = flat(a1).T @ flat(dk)
        g[pre + "bk"] = dk.sum(axis=(0, 1))
        g[pre + "wv"] = flat(a1).T @ flat(dv)
        g[pre + "bv"] = dv.sum(axis=(0, 1))
        da1 = dq @ p[pre + "wq"].T + dk @ p[pre + "wk"].T + dv @ p[pre + "wv"].T
        dx1, g[pre + "ln1_g"], g[pre + "ln1_b"] = _layer_norm_backward(
            da1, c["ln1"], p[pre + "ln1_g"]
        )
        dx = dx + dx1

    g["tok_emb"] = np.zeros_like(p["tok_emb"])
    np.add.at(g["tok_emb"], ids, dx)
    g["pos_emb"] = np.zeros_like(p["pos_emb"])
    g["pos_emb"][: ids.shape[1]] = dx.sum(axis=0)
    return float(loss), g


def gradient_check(
    params: ModelParams,
    batch: TrainingBatch,
    epsilon: float = 1e-4,
    n_probes: int = 100,
    seed: int = 0,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Probes n_probes random coordinates; relative error uses
    |analytic - numeric| / max(|analytic|, |numeric|, 1e-6). Deterministic
    for fixed inputs and seed.
    """
    if not 1e-6 <= epsilon <= 1e-3:
        raise ValueError(f"epsilon {epsilon} outside [1e-6, 1e-3]")
    _, grads = loss_and_grads(params, batch)
    p64 = params.astype64()
    names = sorted(p64)
    rs = rng.stream(seed, "gradcheck")
    worst = 0.0
    for _ in range(n_probes):
        name = names[int(rs.integers(len(names)))]
        idx = int(rs.integers(p64[name].size))
        flat = p64[name].reshape(-1)
        keep = flat[idx]
        probed = ModelParams(params.hp, p64)
        flat[idx] = keep + epsilon
        up = loss_value(probed, batch)
        flat[idx] = keep - epsilon
        down = loss_value(probed, batch)
        flat[idx] = keep
        numeric = (up - down) / (2.0 * epsilon)
        analytic = float(grads[name].reshape(-1)[idx])
        err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-6)
        worst = max(worst, err)
    return worst


# --- training ---------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    steps: int = 1000
    lr: float = 0.05
    batch_size: int = 16
    seed: int = 0
    mask_region: str = "all"  # "all" or "response"
    # Identity term: unmasked positions in the masked region are also trained,
    # at this weight, to re-predict the token they already show. Zero disables
    # it. Small models never develop that behaviour on their own, and scoring
    # fully visible sequences depends on it.
    carry_weight: float = 0.0
    # Fraction of the carried positions whose token is swapped for a random
    # content token (the target follows the swap), so re-prediction also works
    # on tokens that do not fit their context.
    carry_random_frac: float = 0.0


def _buckets(corpus_rows):
    by_len = {}
    for prompt_len, seq in corpus_rows:
        by_len.setdefault(len(seq), []).append((prompt_len, seq))
    lens = sorted(by_len)
    counts = np.array([len(by_len[t]) for t in lens], dtype=np.float64)
    return lens, by_len, counts / counts.sum()


def _rows_from_corpus(corpus_examples):
    rows = []
    for ex in corpus_examples:
        seq = np.array(list(ex.prompt) + list(ex.response), dtype=np.int64)
        rows.append((len(ex.prompt), seq))
    if not rows:
        raise CorpusError("empty training corpus")
    return rows


def _sgd_step(params: ModelParams, grads: dict, lr: float) -> None:
    for name, arr in params.arrays.items():
        params.arrays[name] = (arr.astype(np.float64) - lr * grads[name]).astype(np.float32)


def train_masked_diffusion(
    params: ModelParams, corpus_examples, vocab: Vocabulary, cfg: TrainConfig
) -> tuple[ModelParams, list[float]]:
    """SGD on the masked-denoising objective.

    Each step draws one equal-length bucket, then per sequence a mask count
    l uniform on {1..N} and a uniform size-l position subset (restricted to
    the response when mask_region="response"); masked positions are replaced
    by the mask token and their cross-entropy is scaled by N/l, so the batch
    loss is an unbiased estimate of the sequence-level likelihood bound.
    With carry_weight > 0 the remaining visible positions of the region are
    trained at that weight to re-predict their own token (a carry_random_frac
    share of them after swapping in a random content token), which keeps
    denoising rows meaningful at unmasked positions.
    """
    if cfg.mask_region not in ("all", "response"):
        raise ValueError(f"unknown mask_region {cfg.mask_region!r}")
    if not 0.0 <= cfg.carry_random_frac <= 1.0:
        raise ValueError(f"carry_random_frac {cfg.carry_random_frac!r} outside [0, 1]")
    params = params.copy()
    lens, by_len, probs = _buckets(_rows_from_corpus(corpus_examples))
    content = np.asarray(vocab.content_ids)
    trace = []
    for step in range(cfg.steps):
        rs = rng.stream(cfg.seed, "train-md", step)
        bucket = by_len[lens[int(rs.choice(len(lens), p=probs))]]
        picks = [bucket[int(rs.integers(len(bucket)))] for _ in range(cfg.batch_size)]
        t = len(picks[0][1])
        ids = np.stack([seq for _, seq in picks])
        targets = ids.copy()
        weights = np.zeros(ids.shape, dtype=np.float64)
        for row, (prompt_len, _) in enumerate(picks):
            lo = prompt_len if cfg.mask_region == "response" else 0
            span = t - lo
            n_mask = int(rs.integers(1, span + 1))
            where = lo + rs.choice(span, size=n_mask, replace=False)
            ids[row, where] = vocab.mask_id
            weights[row, where] = (span / n_mask) / cfg.batch_size
            if cfg.carry_weight > 0.0:
                visible = lo + np.flatnonzero(ids[row, lo:] != vocab.mask_id)
                weights[row, visible] = cfg.carry_weight / cfg.batch_size
                if cfg.carry_random_frac > 0.0 and len(visible):
                    swap = visible[rs.random(len(visible)) < cfg.carry_random_frac]
                    ids[row, swap] = rs.choice(content, size=len(swap))
                    targets[row, swap] = ids[row, swap]
        loss, grads = loss_and_grads(
            params, TrainingBatch(ids, targets, weights, "bidirectional")
        )
        if not np.isfinite(loss):
            raise TrainingDiverged(f"non-finite loss at step {step}")
        _sgd_step(params, grads, cfg.lr)
        trace.append(loss)
    return params, trace


def train_causal(
    params: ModelParams, corpus_examples, vocab: Vocabulary, cfg: TrainConfig
) -> tuple[ModelParams, list[float]]:
    """SGD on the next-token objective with a begin-of-sequence shift."""
    params = params.copy()
    lens, by_len, probs = _buckets(_rows_from_corpus(corpus_examples))
    trace = []
    for step in range(cfg.steps):
        rs = rng.stream(cfg.seed, "train-ar", step)
        bucket = by_len[lens[int(rs.choice(len(lens), p=probs))]]
        picks = [bucket[int(rs.integers(len(bucket)))] for _ in range(cfg.batch_size)]
        seqs = np.stack([seq for _, seq in picks])
        ids = np.concatenate(
            [np.full((len(picks), 1), vocab.bos_id, dtype=np.int64), seqs[:, :-1]], axis=1
        )
        weights = np.full(seqs.shape, 1.0 / seqs.size, dtype=np.float64)
        loss, grads = loss_and_grads(params, TrainingBatch(ids, seqs, weights, "causal"))
        if not np.isfinite(loss):
            raise TrainingDiverged(f"non-finite loss at step {step}")
        _sgd_step(params, grads, cfg.lr)
        trace.append(loss)
    return params, trace


# --- checkpoints ------------------------------------------------------------

MAGIC = b"DISE"
CHECKPOINT_VERSION = 1


def save_checkpoint(params: ModelParams, path) -> None:
    hp = params.hp
    head = MAGIC + struct.pack(
        "<6I", CHECKPOINT_VERSION, hp.vocab_size, hp.context, hp.width, hp.heads, hp.layers
    )
    body = b"".join(
        np.ascontiguousarray(params.arrays[name], dtype="<f4").tobytes()
        for name, _ in param_order(hp)
    )
    blob = head + body
    blob += struct.pack("<Q", rng.fnv1a_64(blob))
    with open(path, "wb") as f:
        f.write(blob)


def load_checkpoint(path) -> ModelParams:
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 4 + 24 + 8:
        raise CheckpointError("checkpoint too short to contain a header")
    if blob[:4] != MAGIC:
        raise CheckpointError(f"bad magic {blob[:4]!r}")
    version, v, c, d, h, layers = struct.unpack("<6I", blob[4:28])
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    try:
        hp = HParams(vocab_size=v, context=c, width=d, heads=h, layers=layers)
    except ValueError as e:
        raise CheckpointError(f"invalid hyperparameters: {e}") from None
    order = param_order(hp)
    expected = 28 + sum(4 * int(np.prod(shape)) for _, shape in order) + 8
    if len(blob) != expected:
        raise CheckpointError(f"checkpoint is {len(blob)} bytes, expected {expected}")
    (stored,) = struct.unpack("<Q", blob[-8:])
    if rng.fnv1a_64(blob[:-8]) != stored:
        raise CheckpointError("checksum mismatch; file corrupt")
    arrays = {}
    off = 28
    for name, shape in order:
        n = 4 * int(np.prod(shape))
        arrays[name] = np.frombuffer(blob[off : off + n], dtype="<f4").reshape(shape).copy()
        off += n
    return ModelParams(hp, arrays)

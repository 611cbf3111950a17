"""Command-line front end.

Subcommands cover the full workflow: train a toy denoiser, generate
responses, score them (self-evaluation or likelihood estimates), run the
uncertainty and best-of-N benchmarks, run flexible-length generation, run
the mechanism analyses, evaluate multiple choice, and serve a backend over
the wire protocol. Artifacts land in the run's output directory, carry the
resolved-config hash, and contain no timestamps, so reruns with a fixed
configuration are byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys

import numpy as np

from . import analysis, config as config_mod, rng, svg
from .backend import DenoisingBackend, LocalBackend, TableBackend
from .corpus import (
    DEFAULT_GRAMMAR,
    Example,
    GrammarSpec,
    SequenceBuffer,
    arithmetic_vocabulary,
    generate_arithmetic_tasks,
    generate_choice_sets,
    generate_grammar_corpus,
    grammar_vocabulary,
    load_jsonl,
    load_vocab,
    save_jsonl,
    save_vocab,
)
from .errors import ConfigError, DiseError
from .evaluation import (
    ArScorer,
    DiseScorer,
    McScorer,
    SummaryRow,
    best_of_n,
    multiple_choice_eval,
    single_sample_accuracy,
    uq_run,
    write_records_jsonl,
    write_summary_csv,
    UqRecord,
)
from .generation import FlexGenConfig, GenerationConfig, extract_answer, flexgen, generate_fixed
from .model import HParams, init_parameters, load_checkpoint, save_checkpoint
from .model import train_causal, train_masked_diffusion, TrainConfig
from .remote import LogProbServer, RemoteBackend
from .scoring import (
    SelectionMode,
    ar_conditional_log_likelihood,
    dise_score,
    mc_conditional_log_likelihood,
    McConfig,
)


def _overrides(args) -> dict:
    out = {}
    if args.seed is not None:
        out["run.seed"] = args.seed
    if args.out is not None:
        out["run.out"] = args.out
    if getattr(args, "workers", None) is not None:
        out["run.workers"] = args.workers
    return out


def _setup(args) -> tuple[dict, str, str]:
    cfg = config_mod.load_config(args.config, _overrides(args))
    out_dir = cfg["run"]["out"]
    os.makedirs(out_dir, exist_ok=True)
    return cfg, out_dir, config_mod.config_hash(cfg)


def _dataset(cfg: dict, purpose: str):
    """Vocabulary plus evaluation examples for the configured dataset."""
    seed = rng.derive_seed(cfg["run"]["seed"], "data", purpose)
    d = cfg["data"]
    if cfg["run"]["dataset"] == "arithmetic":
        vocab = arithmetic_vocabulary()
        examples = generate_arithmetic_tasks(
            d["n_eval"], seed, vocab,
            digit_range=(d["digit_lo"], d["digit_hi"]),
            response_len=d["response_len"] or None,
        )
    elif cfg["run"]["dataset"] == "grammar":
        spec = DEFAULT_GRAMMAR
        if d["grammar_file"]:
            with open(d["grammar_file"], "r", encoding="utf-8") as f:
                spec = GrammarSpec.from_json(f.read())
        vocab = grammar_vocabulary(spec)
        examples = generate_grammar_corpus(
            spec, d["n_eval"], seed, vocab, max_len=cfg["model"]["context"]
        )
    else:
        raise ConfigError(f"unknown dataset {cfg['run']['dataset']!r}")
    return vocab, examples


def _backend(cfg: dict, out_dir: str, args) -> DenoisingBackend:
    ckpt = getattr(args, "checkpoint", None) or os.path.join(out_dir, "model.ckpt")
    vocab_path = getattr(args, "vocab", None) or os.path.join(out_dir, "vocab.json")
    vocab = load_vocab(vocab_path)
    if cfg["remote"]["endpoint"]:
        return RemoteBackend(
            cfg["remote"]["endpoint"],
            vocab,
            context_limit=cfg["model"]["context"],
            timeout=cfg["remote"]["timeout"],
            retries=cfg["remote"]["retries"],
        )
    return LocalBackend(load_checkpoint(ckpt), vocab)


def _gen_config(cfg: dict, seed_purpose: str = "generate") -> GenerationConfig:
    g = cfg["generate"]
    return GenerationConfig(
        length=g["length"],
        block_size=g["block_size"],
        tokens_per_step=g["tokens_per_step"],
        temperature=g["temperature"],
        seed=rng.derive_seed(cfg["run"]["seed"], seed_purpose),
    )


def _scorer(cfg: dict):
    s = cfg["score"]
    if s["method"] == "dise":
        return DiseScorer(SelectionMode.parse(s["selection"]), cfg["generate"]["block_size"])
    if s["method"] == "mc":
        return McScorer(s["n_mc"], per_token=s["per_token"])
    if s["method"] == "ar":
        return ArScorer()
    raise ConfigError(f"unknown scoring method {s['method']!r}")


def _write_csv(path, header_comment: str, columns, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(header_comment + "\n")
        w = csv.writer(f)
        w.writerow(columns)
        for row in rows:
            w.writerow(row)


# --- subcommands ----------------------------------------------------------------


def cmd_train(args) -> int:
    cfg, out_dir, chash = _setup(args)
    seed = cfg["run"]["seed"]
    d = cfg["data"]
    if cfg["run"]["dataset"] == "arithmetic":
        vocab = arithmetic_vocabulary()
        train_set = generate_arithmetic_tasks(
            d["n_train"], rng.derive_seed(seed, "data", "train"), vocab,
            digit_range=(d["digit_lo"], d["digit_hi"]), response_len=d["response_len"] or None,
        )
    else:
        vocab, train_set = _dataset_train_grammar(cfg)
    hp = HParams(
        vocab_size=vocab.size,
        context=cfg["model"]["context"],
        width=cfg["model"]["width"],
        heads=cfg["model"]["heads"],
        layers=cfg["model"]["layers"],
    )
    params = init_parameters(hp, rng.derive_seed(seed, "init"))
    tc = TrainConfig(
        steps=cfg["train"]["steps"],
        lr=cfg["train"]["lr"],
        batch_size=cfg["train"]["batch_size"],
        seed=rng.derive_seed(seed, "train"),
        mask_region=cfg["train"]["mask_region"],
        carry_weight=cfg["train"]["carry_weight"],
        carry_random_frac=cfg["train"]["carry_random_frac"],
    )
    if cfg["train"]["objective"] == "masked":
        params, trace = train_masked_diffusion(params, train_set, vocab, tc)
    elif cfg["train"]["objective"] == "causal":
        params, trace = train_causal(params, train_set, vocab, tc)
    else:
        raise ConfigError(f"unknown objective {cfg['train']['objective']!r}")
    save_checkpoint(params, os.path.join(out_dir, "model.ckpt"))
    save_vocab(vocab, os.path.join(out_dir, "vocab.json"))
    config_mod.save_config(cfg, os.path.join(out_dir, "config.ini"))
    _write_csv(
        os.path.join(out_dir, "train_trace.csv"),
        f"# config_hash={chash} seed={seed}",
        ("step", "loss"),
        [(i, f"{v:.6f}") for i, v in enumerate(trace)],
    )
    print(
        f"trained {cfg['train']['objective']} model: {len(trace)} steps, "
        f"loss {trace[0]:.4f} -> {trace[-1]:.4f}, artifacts in {out_dir}"
    )
    return 0


def _dataset_train_grammar(cfg):
    d = cfg["data"]
    spec = DEFAULT_GRAMMAR
    if d["grammar_file"]:
        with open(d["grammar_file"], "r", encoding="utf-8") as f:
            spec = GrammarSpec.from_json(f.read())
    vocab = grammar_vocabulary(spec)
    corpus = generate_grammar_corpus(
        spec, d["n_train"], rng.derive_seed(cfg["run"]["seed"], "data", "train"),
        vocab, max_len=cfg["model"]["context"],
    )
    return vocab, corpus


def cmd_generate(args) -> int:
    cfg, out_dir, chash = _setup(args)
    backend = _backend(cfg, out_dir, args)
    vocab, questions = _dataset(cfg, "eval")
    gen = _gen_config(cfg)
    produced = []
    for ex in questions:
        sub = rng.derive_seed(cfg["run"]["seed"], "generate", ex.id)
        resp = generate_fixed(
            backend, np.array(ex.prompt, dtype=np.int64), dataclasses.replace(gen, seed=sub)
        )
        parsed = None
        label = None
        if cfg["run"]["dataset"] == "arithmetic":
            parsed = extract_answer(resp, "arithmetic", vocab)
            label = parsed == str(ex.extra["answer"])
        produced.append(
            Example(
                id=ex.id, prompt=list(ex.prompt), response=[int(t) for t in resp],
                label=label,
                extra={**ex.extra, **({"parsed": parsed} if parsed is not None else {})},
            )
        )
    save_jsonl(produced, os.path.join(out_dir, "generations.jsonl"), vocab)
    n_ok = sum(1 for e in produced if e.label)
    print(f"generated {len(produced)} responses ({n_ok} correct), nfe {backend.nfe.value}")
    return 0


def _load_input_examples(args, cfg, out_dir, vocab):
    path = getattr(args, "input", None) or os.path.join(out_dir, "generations.jsonl")
    return load_jsonl(path, vocab, strict_eot=False)


def cmd_score(args) -> int:
    cfg, out_dir, chash = _setup(args)
    backend = _backend(cfg, out_dir, args)
    examples = _load_input_examples(args, cfg, out_dir, backend.vocab)
    selection = SelectionMode.parse(cfg["score"]["selection"])
    rows = []
    for ex in examples:
        report = dise_score(
            backend, SequenceBuffer.from_example(ex), selection, cfg["generate"]["block_size"]
        )
        rows.append(
            {
                "example_id": ex.id,
                "method": "dise",
                "selection": str(selection),
                "score": report.score,
                "nfe": report.nfe,
            }
        )
    write_records_jsonl(
        rows, os.path.join(out_dir, "scores.jsonl"), chash, cfg["run"]["seed"]
    )
    mean = float(np.mean([r["score"] for r in rows])) if rows else float("nan")
    print(f"scored {len(rows)} sequences with dise[{selection}], mean {mean:.4f}")
    return 0


def cmd_estimate(args) -> int:
    cfg, out_dir, chash = _setup(args)
    backend = _backend(cfg, out_dir, args)
    examples = _load_input_examples(args, cfg, out_dir, backend.vocab)
    method = cfg["score"]["method"]
    rows = []
    for i, ex in enumerate(examples):
        seq = SequenceBuffer.from_example(ex)
        if method == "mc":
            est = mc_conditional_log_likelihood(
                backend,
                seq,
                McConfig(cfg["score"]["n_mc"], rng.derive_seed(cfg["run"]["seed"], "mc", ex.id)),
            )
            rows.append(
                {
                    "example_id": ex.id, "method": f"mc:{cfg['score']['n_mc']}",
                    "value": est.value, "std_error": est.std_error, "nfe": est.nfe,
                }
            )
        elif method == "ar":
            rep = ar_conditional_log_likelihood(backend, seq)
            rows.append(
                {"example_id": ex.id, "method": "ar", "value": rep.value, "nfe": rep.nfe}
            )
        else:
            raise ConfigError("estimate needs score.method mc or ar")
    write_records_jsonl(
        rows, os.path.join(out_dir, "estimates.jsonl"), chash, cfg["run"]["seed"]
    )
    print(f"estimated {len(rows)} sequences with {method}")
    return 0


def cmd_uq(args) -> int:
    cfg, out_dir, chash = _setup(args)
    backend = _backend(cfg, out_dir, args)
    vocab, _ = _dataset(cfg, "eval")
    seed = cfg["run"]["seed"]
    d = cfg["data"]
    questions = generate_arithmetic_tasks(
        cfg["uq"]["n_questions"], rng.derive_seed(seed, "data", "uq"), vocab,
        digit_range=(d["digit_lo"], d["digit_hi"]), response_len=d["response_len"] or None,
    )
    scorer = _scorer(cfg)
    report = uq_run(
        backend, questions, scorer, _gen_config(cfg),
        n_answers=cfg["uq"]["n_answers"], seed=seed, workers=cfg["run"]["workers"],
    )
    write_records_jsonl(report.records, os.path.join(out_dir, "uq_records.jsonl"), chash, seed)
    write_summary_csv(
        [
            SummaryRow(
                method=scorer.name, dataset=cfg["run"]["dataset"],
                gen_len=cfg["generate"]["length"], accuracy=report.accuracy,
                roc_auc=report.auc, mean_nfe=report.mean_nfe,
                n_questions=report.n_questions, n_excluded=report.n_excluded,
            )
        ],
        os.path.join(out_dir, "summary.csv"),
        chash,
        seed,
    )
    auc_text = "none" if report.auc is None else f"{report.auc:.4f}"
    print(
        f"uq: {scorer.name} on {report.n_questions} questions x "
        f"{cfg['uq']['n_answers']} answers: accuracy {report.accuracy:.4f}, "
        f"roc_auc {auc_text}, mean scoring nfe {report.mean_nfe:.2f}"
    )
    return 0


def cmd_bestofn(args) -> int:
    cfg, out_dir, chash = _setup(args)
    path = args.records or os.path.join(out_dir, "uq_records.jsonl")
    records = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            obj = json.loads(line)
            records.append(
                UqRecord(
                    question_id=obj["question_id"], answer_index=obj["answer_index"],
                    response=tuple(obj["response"]), parsed=obj["parsed"],
                    label=obj["label"], score=obj["score"], uncertainty=0.0,
                    nfe=obj["nfe"],
                )
            )
    n_max = max(r.answer_index for r in records) + 1
    rows = [("1 (first sample)", f"{single_sample_accuracy(records):.6f}")]
    for n in range(2, n_max + 1):
        rows.append((str(n), f"{best_of_n(records, n):.6f}"))
    _write_csv(
        os.path.join(out_dir, "bestofn.csv"),
        f"# config_hash={chash} seed={cfg['run']['seed']}",
        ("n", "accuracy"),
        rows,
    )
    print(f"best-of-n over {len(records)} records: " + ", ".join(f"{a}@{n}" for n, a in rows))
    return 0


def cmd_flexgen(args) -> int:
    cfg, out_dir, chash = _setup(args)
    backend = _backend(cfg, out_dir, args)
    vocab, questions = _dataset(cfg, "flexgen")
    seed = cfg["run"]["seed"]
    fx = cfg["flexgen"]
    flex_cfg = FlexGenConfig(
        base_length=fx["base_length"], max_iterations=fx["max_iterations"],
        patience=fx["patience"], initial_mask=fx["initial_mask"],
        selection=SelectionMode.parse(cfg["score"]["selection"]),
    )
    gen = _gen_config(cfg)
    header = {
        "m_max": flex_cfg.max_iterations, "patience": flex_cfg.patience,
        "initial_mask": flex_cfg.initial_mask, "base_length": flex_cfg.base_length,
        "selection": str(flex_cfg.selection), "config_hash": chash, "seed": seed,
    }
    n_ok = 0
    with open(os.path.join(out_dir, "flexgen_traces.jsonl"), "w", encoding="utf-8") as f:
        f.write(json.dumps(header, sort_keys=True) + "\n")
        for ex in questions:
            sub = rng.derive_seed(seed, "flexgen", ex.id)
            trace = flexgen(
                backend, np.array(ex.prompt, dtype=np.int64), flex_cfg,
                dataclasses.replace(gen, seed=sub),
            )
            parsed = None
            label = None
            if cfg["run"]["dataset"] == "arithmetic":
                parsed = extract_answer(trace.best_tokens, "arithmetic", vocab)
                label = parsed == str(ex.extra["answer"])
                n_ok += bool(label)
            f.write(
                json.dumps(
                    {
                        "id": ex.id,
                        "termination": trace.termination,
                        "best_score": trace.best_score,
                        "best_response": vocab.decode(trace.best_tokens),
                        "parsed": parsed,
                        "label": label,
                        "nfe": trace.nfe,
                        "steps": [dataclasses.asdict(s) for s in trace.steps],
                    },
                    sort_keys=True,
                )
                + "\n"
            )
    acc = n_ok / len(questions) if questions else 0.0
    _write_csv(
        os.path.join(out_dir, "flexgen_summary.csv"),
        f"# config_hash={chash} seed={seed} m_max={fx['max_iterations']} "
        f"patience={fx['patience']} initial_mask={fx['initial_mask']}",
        ("n_prompts", "accuracy"),
        [(len(questions), f"{acc:.6f}")],
    )
    print(f"flexgen over {len(questions)} prompts: accuracy {acc:.4f}")
    return 0


def cmd_analyze(args) -> int:
    cfg, out_dir, chash = _setup(args)
    backend = _backend(cfg, out_dir, args)
    vocab, examples = _dataset(cfg, "analyze")
    seed = cfg["run"]["seed"]
    comment = f"# config_hash={chash} seed={seed}"
    what = args.what

    if what in ("obs", "all"):
        rows = analysis.observation_suite(
            backend, examples[: args.sentences], seed=seed,
            block_size=cfg["generate"]["block_size"],
        )
        _write_csv(
            os.path.join(out_dir, "obs_pairs.csv"), comment,
            ("sequence_id", "mode", "score_natural", "score_random", "diff"),
            [
                (r["sequence_id"], r["mode"], f"{r['score_natural']:.6f}",
                 f"{r['score_random']:.6f}", f"{r['diff']:.6f}")
                for r in rows
            ],
        )
        modes = sorted({r["mode"] for r in rows})
        summary = []
        for mode in modes:
            sub = [r for r in rows if r["mode"] == mode]
            wins = sum(1 for r in sub if r["diff"] > 0)
            summary.append(
                (mode, len(sub), wins, f"{float(np.mean([r['diff'] for r in sub])):.6f}")
            )
        _write_csv(
            os.path.join(out_dir, "obs_summary.csv"), comment,
            ("mode", "pairs", "natural_wins", "mean_diff"), summary,
        )
        with open(os.path.join(out_dir, "obs_means.svg"), "w", encoding="utf-8") as f:
            f.write(
                svg.bar_chart(
                    [s[0] for s in summary], [float(s[3]) for s in summary],
                    "score drop when region randomized", "mean score difference",
                )
            )

    if what in ("rank", "all"):
        samples, cdf = analysis.gt_rank_experiment(backend, examples, args.trials, seed)
        _write_csv(
            os.path.join(out_dir, "rank_samples.csv"), comment,
            ("sequence_id", "position", "trial", "rank"),
            [(s.sequence_id, s.position, s.trial, s.rank) for s in samples],
        )
        _write_csv(
            os.path.join(out_dir, "rank_cdf.csv"), comment,
            ("threshold", "fraction"),
            [(t, f"{v:.6f}") for t, v in sorted(cdf.items())],
        )
        xs = sorted(cdf)
        with open(os.path.join(out_dir, "rank_cdf.svg"), "w", encoding="utf-8") as f:
            f.write(
                svg.line_chart(
                    [("rank cdf", xs, [cdf[t] for t in xs])],
                    "true-token rank after random replacement",
                    "rank threshold", "fraction at or below",
                )
            )

    if what in ("dist", "all"):
        rows, means = analysis.replacement_distance_study(
            backend, examples, args.instances, seed
        )
        _write_csv(
            os.path.join(out_dir, "dist_rows.csv"), comment,
            ("sequence_id", "position") + analysis.DISTANCE_FIELDS,
            [
                (r["sequence_id"], r["position"])
                + tuple(f"{r[k]:.6f}" for k in analysis.DISTANCE_FIELDS)
                for r in rows
            ],
        )
        _write_csv(
            os.path.join(out_dir, "dist_means.csv"), comment,
            ("field", "mean"),
            [(k, f"{means[k]:.6f}") for k in analysis.DISTANCE_FIELDS],
        )
        with open(os.path.join(out_dir, "dist_means.svg"), "w", encoding="utf-8") as f:
            f.write(
                svg.bar_chart(
                    list(analysis.DISTANCE_FIELDS),
                    [means[k] for k in analysis.DISTANCE_FIELDS],
                    "distribution shift at a perturbed position", "mean distance",
                )
            )

    if what in ("split", "all") and cfg["run"]["dataset"] == "arithmetic":
        gen = _gen_config(cfg)
        pairs = []
        for ex in examples[: cfg["uq"]["n_questions"]]:
            sub = rng.derive_seed(seed, "split", ex.id)
            resp = generate_fixed(
                backend, np.array(ex.prompt, dtype=np.int64),
                dataclasses.replace(gen, seed=sub),
            )
            parsed = extract_answer(resp, "arithmetic", vocab)
            seq = SequenceBuffer(
                np.concatenate([np.array(ex.prompt, dtype=np.int64), resp]), len(ex.prompt)
            )
            pairs.append((seq, parsed == str(ex.extra["answer"])))
        split = analysis.correctness_split(backend, pairs)
        _write_csv(
            os.path.join(out_dir, "obs2_summary.csv"), comment,
            ("mode", "mean_correct", "mean_incorrect", "n_correct", "n_incorrect"),
            [
                (
                    mode,
                    "" if mc is None else f"{mc:.6f}",
                    "" if mi is None else f"{mi:.6f}",
                    nc, ni,
                )
                for mode, (mc, mi, nc, ni) in sorted(split.items())
            ],
        )

    print(f"analysis artifacts written to {out_dir}")
    return 0


def cmd_choice_eval(args) -> int:
    cfg, out_dir, chash = _setup(args)
    backend = _backend(cfg, out_dir, args)
    seed = cfg["run"]["seed"]
    d = cfg["data"]
    sets = generate_choice_sets(
        d["n_eval"], rng.derive_seed(seed, "data", "choice"), backend.vocab,
        n_choices=d["n_choices"], digit_range=(d["digit_lo"], d["digit_hi"]),
    )
    scorer = _scorer(cfg)
    report = multiple_choice_eval(backend, sets, scorer, seed, cfg["run"]["workers"])
    write_records_jsonl(
        report.records, os.path.join(out_dir, "choice_records.jsonl"), chash, seed
    )
    write_summary_csv(
        [
            SummaryRow(
                method=scorer.name, dataset=cfg["run"]["dataset"], gen_len=0,
                accuracy=report.accuracy, roc_auc=None, mean_nfe=report.mean_nfe,
                n_questions=len(sets), n_excluded=0,
            )
        ],
        os.path.join(out_dir, "choice_summary.csv"),
        chash,
        seed,
    )
    print(
        f"choice-eval: {scorer.name} on {len(sets)} questions: "
        f"accuracy {report.accuracy:.4f}, mean nfe {report.mean_nfe:.1f}"
    )
    return 0


def cmd_serve_stub(args) -> int:
    cfg, out_dir, chash = _setup(args)
    if args.uniform:
        vocab = load_vocab(
            getattr(args, "vocab", None) or os.path.join(out_dir, "vocab.json")
        )
        backend = TableBackend.uniform(vocab, cfg["model"]["context"])
    else:
        backend = _backend(cfg, out_dir, args)
    server = LogProbServer(backend, args.host, args.port)
    print(f"serving log-prob queries at {server.url}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


# --- parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dise",
        description="Self-evaluation scores and benchmarks for masked-diffusion denoisers.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, checkpoint=True):
        p.add_argument("--config", default=None, help="INI run configuration")
        p.add_argument("--seed", type=int, default=None, help="override run.seed")
        p.add_argument("--out", default=None, help="override run.out")
        p.add_argument("--workers", type=int, default=None, help="override run.workers")
        if checkpoint:
            p.add_argument("--checkpoint", default=None, help="model checkpoint path")
            p.add_argument("--vocab", default=None, help="vocabulary sidecar path")

    common(sub.add_parser("train", help="train a toy denoiser"), checkpoint=False)
    common(sub.add_parser("generate", help="generate responses for the eval set"))
    p = sub.add_parser("score", help="self-evaluation scores for a corpus file")
    common(p)
    p.add_argument("--input", default=None, help="jsonl corpus to score")
    p = sub.add_parser("estimate", help="likelihood estimates for a corpus file")
    common(p)
    p.add_argument("--input", default=None, help="jsonl corpus to estimate")
    common(sub.add_parser("uq", help="uncertainty ranking benchmark"))
    p = sub.add_parser("bestofn", help="best-of-n selection from uq records")
    common(p, checkpoint=False)
    p.add_argument("--records", default=None, help="uq_records.jsonl path")
    common(sub.add_parser("flexgen", help="flexible-length generation"))
    p = sub.add_parser("analyze", help="mechanism studies and figures")
    common(p)
    p.add_argument(
        "--what", choices=("obs", "rank", "dist", "split", "all"), default="all"
    )
    p.add_argument("--trials", type=int, default=2000, help="rank study trials")
    p.add_argument("--instances", type=int, default=500, help="distance study instances")
    p.add_argument("--sentences", type=int, default=15, help="pairs for the score-drop table")
    common(sub.add_parser("choice-eval", help="multiple-choice accuracy"))
    p = sub.add_parser("serve-stub", help="serve a backend over the wire protocol")
    common(p)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8631)
    p.add_argument("--uniform", action="store_true", help="serve a uniform stub")

    return parser


_COMMANDS = {
    "train": cmd_train,
    "generate": cmd_generate,
    "score": cmd_score,
    "estimate": cmd_estimate,
    "uq": cmd_uq,
    "bestofn": cmd_bestofn,
    "flexgen": cmd_flexgen,
    "analyze": cmd_analyze,
    "choice-eval": cmd_choice_eval,
    "serve-stub": cmd_serve_stub,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except DiseError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())

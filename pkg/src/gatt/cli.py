"""Command-line entry point: ``gatt {gen-data,train,translate,evaluate,diagnose}``.

Exit codes: 0 success, 2 bad configuration or usage, 3 data/I-O error,
4 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from gatt import checkpoint
from gatt.config import ConfigError, RunConfig, load_config
from gatt.data import EOS, build_vocab, gen_synthetic, make_batches, read_alignments, read_corpus, read_lines, write_corpus
from gatt.decode import beam_search, greedy_decode
from gatt.metrics import (
    DiagnosticsReport,
    bleu4,
    context_variance,
    corpus_aer,
    export_heatmap,
    extract_alignments,
    n_grr,
    read_tsv,
    write_tsv,
)
from gatt.numcore import NumericError
from gatt.seq2seq import Seq2Seq, forward_loss
from gatt.training import train

log = logging.getLogger("gatt")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
SPLITS = (("train", 0), ("dev", 1), ("test", 2))


class DataError(Exception):
    pass


def _config(args) -> RunConfig:
    cfg = load_config(getattr(args, "config", None), getattr(args, "set", None) or ())
    log.info("resolved config:\n%s", cfg.to_text().rstrip())
    return cfg


# -- gen-data ------------------------------------------------------------------


def cmd_gen_data(args) -> int:
    cfg = _config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    sizes = {"train": cfg.n_train, "dev": cfg.n_dev, "test": cfg.n_test}
    for split, stream in SPLITS:
        pairs = gen_synthetic(cfg.synth_spec(sizes[split]), stream=stream)
        write_corpus(out / split, pairs)
        print(f"{split}: {len(pairs)} pairs")
    (out / "run.cfg").write_text(cfg.to_text(), encoding="utf-8")
    return EXIT_OK


# -- train ---------------------------------------------------------------------


def _split_paths(data_dir: Path, split: str):
    return data_dir / f"{split}.src", data_dir / f"{split}.tgt"


def cmd_train(args) -> int:
    cfg = _config(args)
    data_dir = Path(args.data)
    train_pairs = read_corpus(*_split_paths(data_dir, "train"))
    dev_src, dev_tgt = _split_paths(data_dir, "dev")
    dev_pairs = read_corpus(dev_src, dev_tgt) if dev_src.exists() else []
    src_vocab = build_vocab((p.src for p in train_pairs), cfg.src_vocab_size)
    tgt_vocab = build_vocab((p.tgt for p in train_pairs), cfg.tgt_vocab_size)
    model = Seq2Seq.create(cfg.model_config(len(src_vocab), len(tgt_vocab)), seed=cfg.seed)
    log_file = open(args.log, "w", encoding="utf-8") if args.log else None
    if log_file:
        log_file.write("".join(f"# {line}\n" for line in cfg.to_text().splitlines()))

    def on_epoch(entry):
        print(entry.line(), flush=True)
        if log_file:
            log_file.write(entry.line() + "\n")
            log_file.flush()

    try:
        result = train(model, train_pairs, dev_pairs, src_vocab, tgt_vocab, cfg.train_config(), on_epoch=on_epoch)
    finally:
        if log_file:
            log_file.close()
    meta = {"run." + k: v for k, v in (line.split("=", 1) for line in cfg.to_text().splitlines())}
    meta["best_epoch"] = str(result.best_epoch)
    checkpoint.save(args.out, result.model, src_vocab, tgt_vocab, meta)
    print(f"saved {args.out} (best epoch {result.best_epoch})")
    return EXIT_OK


# -- translate -----------------------------------------------------------------


def _load_ensemble(paths):
    ckpts = [checkpoint.load(p) for p in paths]
    first = ckpts[0]
    for c in ckpts[1:]:
        if c.src_vocab != first.src_vocab or c.tgt_vocab != first.tgt_vocab:
            raise DataError("checkpoints have different vocabularies")
    return ckpts


def dump_trace(trace, src_tokens, tgt_tokens, trace_dir: Path, k: int) -> None:
    rows = list(tgt_tokens) + ["</s>"] if len(trace.tokens) > len(tgt_tokens) else list(tgt_tokens)
    rows = rows[: trace.weights.shape[0]]
    write_tsv(trace.weights, trace_dir / f"{k}.attn.tsv", rows, list(src_tokens))
    write_tsv(trace.contexts, trace_dir / f"{k}.ctx.tsv", rows, [f"d{i}" for i in range(trace.contexts.shape[1])])


def cmd_translate(args) -> int:
    ckpts = _load_ensemble(args.checkpoint)
    models = [c.model for c in ckpts]
    src_vocab, tgt_vocab = ckpts[0].src_vocab, ckpts[0].tgt_vocab
    trace_dir = Path(args.trace_dir) if args.trace_dir else None
    if trace_dir:
        trace_dir.mkdir(parents=True, exist_ok=True)
    sentences = read_lines(args.src)
    with open(args.out, "w", encoding="utf-8") as out:
        for k, src in enumerate(sentences):
            if not src:
                raise DataError(f"empty source sentence on line {k + 1}")
            ids = src_vocab.encode(src)
            max_len = args.max_len or None
            if args.beam == 1:
                hyp = greedy_decode(models, ids, max_len)
            else:
                hyp = beam_search(models, ids, args.beam, max_len).best
            words = tgt_vocab.decode(hyp.output())
            out.write(" ".join(words) + "\n")
            if trace_dir:
                dump_trace(hyp.trace(), src, words, trace_dir, k)
    return EXIT_OK


# -- evaluate / diagnose -------------------------------------------------------


def _read_refs(paths, n_hyp: int):
    refs = [read_lines(p) for p in paths]
    for p, r in zip(paths, refs):
        if len(r) != n_hyp:
            raise DataError(f"{p} has {len(r)} lines, expected {n_hyp}")
    return [list(group) for group in zip(*refs)]


def _trace_stats(trace_dir: Path, n: int, gold_path=None):
    golds = read_alignments(gold_path) if gold_path else None
    if golds is not None and len(golds) != n:
        raise DataError(f"{gold_path} has {len(golds)} lines, expected {n}")
    preds, gold_used, steps_var, dims_var = [], [], [], []
    for k in range(n):
        attn_path = trace_dir / f"{k}.attn.tsv"
        if not attn_path.exists():
            continue
        weights, rows, _ = read_tsv(attn_path)
        m = len(rows) - 1 if rows and rows[-1] == "</s>" else len(rows)
        preds.append({(int(np.argmax(weights[j])), j) for j in range(m)})
        if golds is not None:
            gold_used.append(golds[k])
        ctx_path = trace_dir / f"{k}.ctx.tsv"
        if ctx_path.exists():
            C, _, _ = read_tsv(ctx_path)
            if C.shape[0] >= 2 and C.shape[1] >= 2:
                v_steps, v_dims = context_variance(C)
                steps_var.append(v_steps)
                dims_var.append(v_dims)
    err = corpus_aer(preds, gold_used) if golds is not None and preds else math.nan
    mean = lambda xs: float(np.mean(xs)) if xs else math.nan  # noqa: E731
    return err, mean(steps_var), mean(dims_var), len(preds)


def _ngrr_all(hyps):
    out = []
    for n in range(1, 5):
        try:
            out.append(n_grr([[h] for h in hyps], n))
        except ValueError:
            out.append(math.nan)
    return out


def _heatmaps(args, trace_dir: Path) -> None:
    if not args.heatmap_dir:
        return
    hdir = Path(args.heatmap_dir)
    hdir.mkdir(parents=True, exist_ok=True)
    for k in args.heatmaps:
        for kind in ("attn", "ctx"):
            path = trace_dir / f"{k}.{kind}.tsv"
            if path.exists():
                M, rows, cols = read_tsv(path)
                if kind == "ctx":
                    # dimensions down, decoding steps across
                    export_heatmap(M.T, hdir / f"{k}.{kind}", cols, rows)
                else:
                    export_heatmap(M, hdir / f"{k}.{kind}", rows, cols)


def cmd_evaluate(args) -> int:
    hyps = read_lines(args.hyp)
    refs = _read_refs(args.ref, len(hyps))
    bleu = bleu4(hyps, refs)
    err, v_steps, v_dims, n_traces = math.nan, math.nan, math.nan, 0
    if args.trace_dir:
        err, v_steps, v_dims, n_traces = _trace_stats(Path(args.trace_dir), len(hyps), args.gold_align)
        _heatmaps(args, Path(args.trace_dir))
    report = DiagnosticsReport(bleu, *_ngrr_all(hyps), err, v_steps, v_dims, len(hyps), n_traces)
    Path(args.report).write_text(report.to_text(), encoding="utf-8")
    print(report.to_text(), end="")
    return EXIT_OK


def cmd_diagnose(args) -> int:
    """Force-decode references through a model, dump traces, then evaluate."""
    ckpt = checkpoint.load(args.checkpoint)
    pairs = read_corpus(args.src, args.ref[0])
    trace_dir = Path(args.trace_dir)
    trace_dir.mkdir(parents=True, exist_ok=True)
    for start in range(0, len(pairs), 64):
        chunk = pairs[start : start + 64]
        batch = make_batches(chunk, ckpt.src_vocab, ckpt.tgt_vocab, len(chunk))[0]
        result = forward_loss(batch, ckpt.model, trace=True)
        for k, tr in enumerate(result.traces):
            p = chunk[k]
            dump_trace(tr, p.src, p.tgt, trace_dir, start + k)
    args.hyp = args.ref[0]
    return cmd_evaluate(args)


# -- entry point ---------------------------------------------------------------


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gatt", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p):
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")

    p = sub.add_parser("gen-data", help="write synthetic train/dev/test corpora")
    with_config(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a model and save the best-dev checkpoint")
    with_config(p)
    p.add_argument("--data", required=True, help="directory with train/dev .src/.tgt files")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--log", help="per-epoch log file")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("translate", help="translate with one checkpoint or an ensemble")
    p.add_argument("--checkpoint", action="append", required=True)
    p.add_argument("--src", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--beam", type=int, default=10)
    p.add_argument("--max-len", type=int, default=0)
    p.add_argument("--trace-dir")
    p.set_defaults(func=cmd_translate)

    def with_eval(p):
        p.add_argument("--ref", action="append", required=True)
        p.add_argument("--gold-align")
        p.add_argument("--report", required=True)
        p.add_argument("--heatmap-dir")
        p.add_argument("--heatmaps", type=_int_list, default=[])

    p = sub.add_parser("evaluate", help="BLEU, N-GRR and trace diagnostics of a hypothesis file")
    p.add_argument("--hyp", required=True)
    p.add_argument("--trace-dir")
    with_eval(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("diagnose", help="force-decode references and report attention diagnostics")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--src", required=True)
    p.add_argument("--trace-dir", required=True)
    with_eval(p)
    p.set_defaults(func=cmd_diagnose)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericError, FloatingPointError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, checkpoint.CheckpointError, OSError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())

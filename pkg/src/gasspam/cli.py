"""Command-line pipeline: synth, ingest, build-knn, train, predict, eval, diagnose.

Every failure ends with one line on stderr of the form
``error code=<code> reason=<json string>`` and a nonzero exit status
(2 for usage errors, 1 otherwise).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, metrics
from .config import ConfigFileError, apply_config, read_config

log = logging.getLogger("gasspam")


class CliError(Exception):
    def __init__(self, code: str, reason: str):
        super().__init__(reason)
        self.code = code
        self.reason = reason


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        _fail("usage", message, 2)


def _fail(code: str, reason: str, status: int = 1):
    sys.stderr.write(f"error code={code} reason={json.dumps(reason)}\n")
    sys.exit(status)


def _need(args, *names):
    for n in names:
        if getattr(args, n) is None:
            raise CliError("usage", f"--{n.replace('_', '-')} is required (flag or config key)")


def _out_dir(args) -> Path:
    _need(args, "out")
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as err:
        raise CliError("io", f"cannot create output directory {out}: {err.strerror}") from None
    return out


def _write_json(path: Path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _fraction(text: str) -> float:
    v = float(text)
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"{text} is not in [0, 1]")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v <= 0:
        raise argparse.ArgumentTypeError(f"{text} is not a positive integer")
    return v


def _nonneg_int(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"{text} is negative")
    return v


def _triple(text: str) -> tuple[float, float, float]:
    parts = [float(x) for x in text.split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected three comma-separated numbers")
    return tuple(parts)


# ---------------------------------------------------------------- loading helpers


def _load_inputs(args, need_graph_features=True):
    from .graph import build_graph, ingest, load_node_features
    from .text import load_embeddings

    records = ingest(args.records)
    if not records:
        raise CliError("empty_input", f"{args.records} holds no records")
    vocab, table = load_embeddings(args.embeddings) if getattr(args, "embeddings", None) else (None, None)
    uf = load_node_features(args.user_features, "user_id") if getattr(args, "user_features", None) else None
    itf = load_node_features(args.item_features, "item_id") if getattr(args, "item_features", None) else None
    graph = build_graph(records, uf, itf) if need_graph_features else None
    return records, vocab, table, graph


def _load_comment_graph(path, records):
    from .graph import CommentGraph

    return CommentGraph.load(path, (r.comment_id for r in records))


def _read_scores(path) -> tuple[list[str], np.ndarray, np.ndarray]:
    ids, scores, labels = [], [], []
    try:
        fh = open(path, encoding="utf-8", newline="")
    except OSError as err:
        raise CliError("io", f"cannot read scores {path}: {err.strerror}") from None
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"comment_id", "score", "label"} <= set(reader.fieldnames):
            raise CliError("bad_scores", f"{path}: header must contain comment_id,score,label")
        for lineno, row in enumerate(reader, 2):
            try:
                s, y = float(row["score"]), int(row["label"])
            except (TypeError, ValueError):
                raise CliError("bad_scores", f"{path}:{lineno}: unparsable score or label") from None
            if y not in (0, 1) or not np.isfinite(s):
                raise CliError("bad_scores", f"{path}:{lineno}: label must be 0/1 and score finite")
            ids.append(row["comment_id"])
            scores.append(s)
            labels.append(y)
    return ids, np.asarray(scores), np.asarray(labels, dtype=np.int64)


def _write_scores(path: Path, ids, scores, labels) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["comment_id", "score", "label"])
        for c, s, y in zip(ids, scores, labels):
            w.writerow([c, repr(float(s)), "" if y is None else int(y)])


# ---------------------------------------------------------------- subcommands


def cmd_synth(args):
    from .synth import SynthConfig, synth_corpus

    out = _out_dir(args)
    kw = {}
    for name in ("n_users", "n_items", "n_comments", "spam_fraction", "deformation_rate", "vocab_size", "time_span"):
        v = getattr(args, name)
        if v is not None:
            kw[name] = v
    if args.campaign_mix is not None:
        kw["campaign_mix"] = args.campaign_mix
    corpus = synth_corpus(SynthConfig(**kw), args.seed)
    paths = corpus.write(out)
    _write_json(out / "campaigns.json", corpus.campaign)
    n_spam = sum(1 for r in corpus.records if r.label == 1)
    print(json.dumps({"records": len(corpus.records), "spam": n_spam, "files": sorted(p.name for p in paths.values())}))


def cmd_ingest(args):
    from .graph import build_graph, ingest

    _need(args, "records")
    records = ingest(args.records)
    g = build_graph(records)
    summary = {
        "comments": len(records),
        "users": len(g.users),
        "items": len(g.items),
        "spam": sum(1 for r in records if r.label == 1),
        "normal": sum(1 for r in records if r.label == 0),
        "unlabeled": sum(1 for r in records if r.label is None),
    }
    if args.out:
        _write_json(_out_dir(args) / "ingest.json", summary)
    print(json.dumps(summary, sort_keys=True))


def cmd_build_knn(args):
    from .knn import KnnConfig, SifConfig, build_comment_graph

    _need(args, "records", "embeddings")
    out = _out_dir(args)
    records, vocab, table, _ = _load_inputs(args, need_graph_features=False)
    sif = SifConfig(a=args.sif_a, remove_pc=not args.keep_pc)
    knn = KnnConfig(K=args.K, iterations=args.iterations, sample_rate=args.sample_rate, delta=args.delta)
    graph, manifest = build_comment_graph(records, vocab, table.weight.data, sif, knn, seed=args.seed)
    graph.save(out / "comment_graph.txt", manifest)
    print(json.dumps({"nodes": len(graph.nodes), "edges": graph.num_edges}))


def cmd_train(args):
    from .model import TrainConfig, build_model_config, save_checkpoint, train

    _need(args, "records", "embeddings")
    if args.variant == "gas" and args.comment_graph is None:
        raise CliError("usage", "--variant gas needs --comment-graph")
    out = _out_dir(args)
    records, vocab, table, graph = _load_inputs(args)
    cg = _load_comment_graph(args.comment_graph, records) if args.comment_graph else None
    mc = build_model_config(graph, table.weight.data, variant=args.variant, layers=args.layers, precision=args.precision)
    tc = TrainConfig(epochs=args.epochs, batch_size=args.batch_size, learning_rate=args.lr, seed=args.seed)
    res = train(graph, vocab, table.weight.data, mc, tc, comment_graph=cg)
    save_checkpoint(res.params, out / "model.ckpt")
    _write_json(out / "history.json", {"best_epoch": res.best_epoch, "epochs": res.history})
    ids = lambda edges: [graph.records[e].comment_id for e in edges]  # noqa: E731
    _write_json(out / "split.json", {"train": ids(res.split.train), "val": ids(res.split.val), "test": ids(res.split.test)})
    test = res.split.test
    if len(test):
        scores = res.model.predict(test)
        labels = [graph.records[e].label for e in test]
        _write_scores(out / "scores.csv", ids(test), scores, labels)
        rep = metrics.report(scores, labels)
        metrics.write_report(out / "metrics.json", rep)
        print(json.dumps(rep, sort_keys=True))


def cmd_predict(args):
    from .model import GasModel, load_checkpoint, vocab_from_params

    _need(args, "checkpoint", "records")
    out = _out_dir(args)
    params = load_checkpoint(args.checkpoint)
    records, _, _, graph = _load_inputs(args)
    cg = _load_comment_graph(args.comment_graph, records) if args.comment_graph else None
    model = GasModel(params, vocab_from_params(params), graph, cg)
    scores = model.predict(np.arange(len(records)))
    _write_scores(out / "scores.csv", [r.comment_id for r in records], scores, [r.label for r in records])
    print(json.dumps({"scored": len(records)}))


def cmd_eval(args):
    from .plotting import plot_pr_curves

    _need(args, "scores")
    out = _out_dir(args)
    _, scores, labels = _read_scores(args.scores)
    if len(scores) == 0:
        raise CliError("empty_input", f"{args.scores} holds no scores")
    rep = metrics.report(scores, labels, threshold=args.threshold)
    if rep["auc"] is None:
        raise CliError("undefined_metric", "AUC needs both positive and negative labels")
    metrics.write_report(out / "metrics.json", rep)
    pts = metrics.pr_curve(scores, labels)
    metrics.write_pr_csv(out / "pr.csv", pts)
    plot_pr_curves(out / "pr.png", {Path(args.scores).stem: pts})
    print(json.dumps(rep, sort_keys=True))


def _comment_embeddings(args, records, vocab, table):
    """SIF sentence vectors, or the text-encoder outputs of a checkpoint."""
    if args.checkpoint:
        from .model import load_checkpoint, vocab_from_params
        from .text import textcnn_encode_batch

        params = load_checkpoint(args.checkpoint)
        v = vocab_from_params(params)
        seqs = [[v.id(t) for t in r.tokens] for r in records]
        table, cnn = params.word_table(), params.textcnn()
        rows = [
            textcnn_encode_batch(seqs[s : s + 256], table, cnn, params.config.max_tokens).data
            for s in range(0, len(seqs), 256)
        ]
        return np.vstack(rows).astype(np.float64)
    from .knn import sif_embed

    seqs = [[vocab.id(t) for t in r.tokens] for r in records]
    vocab.count(seqs)
    return sif_embed(seqs, table.weight.data, vocab.word_probs())


def cmd_diagnose(args):
    from .diagnostics import LogRegConfig, case_study, smooth_embeddings, smoothing_diagnostic
    from .graph import neighbor_spam_stats
    from .plotting import plot_smoothing

    _need(args, "records", "embeddings", "comment_graph")
    out = _out_dir(args)
    records, vocab, table, graph = _load_inputs(args)
    cg = _load_comment_graph(args.comment_graph, records)
    labelled = [r for r in records if r.label is not None]
    labels = {r.comment_id: r.label for r in labelled}
    if len(set(labels.values())) < 2:
        raise CliError("undefined_metric", "diagnose needs both spam and normal labels")
    emb = _comment_embeddings(args, labelled, vocab, table)
    ids = [r.comment_id for r in labelled]
    y = np.array([r.label for r in labelled])
    lr = LogRegConfig(iterations=args.lr_iterations, learning_rate=args.lr_rate, l2=args.lr_l2)
    sm = smoothing_diagnostic(emb, y, cg, seed=args.seed, ids=ids, cfg=lr)
    report = {"smoothing": {k: {"auc": v[0], "f1": v[1]} for k, v in sm.items()}}
    spam = [c for c in ids if labels[c] == 1]
    normal = [c for c in ids if labels[c] == 0]
    report["neighbors"] = {
        "comment_graph": {"spam": neighbor_spam_stats(cg, spam, labels), "normal": neighbor_spam_stats(cg, normal, labels)},
        "local": {"spam": neighbor_spam_stats(graph, spam, labels), "normal": neighbor_spam_stats(graph, normal, labels)},
    }
    if args.gas_scores and args.local_scores:
        g_ids, g_s, _ = _read_scores(args.gas_scores)
        l_ids, l_s, _ = _read_scores(args.local_scores)
        lmap = dict(zip(l_ids, l_s))
        common = [c for c in g_ids if c in lmap and c in labels]
        if not common:
            raise CliError("bad_scores", "the two score files share no labelled comments")
        gmap = dict(zip(g_ids, g_s))
        report["case_study"] = case_study(
            cg, common, labels, [gmap[c] for c in common], [lmap[c] for c in common], bipartite=graph
        )
    elif args.gas_scores or args.local_scores:
        raise CliError("usage", "--gas-scores and --local-scores go together")
    _write_json(out / "diagnose.json", report)
    plot_smoothing(out / "smoothing.png", emb, smooth_embeddings(emb, ids, cg), y)
    print(json.dumps(report["smoothing"], sort_keys=True))


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gas", description="Graph-based comment spam detection pipeline.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    def common(sp, seed=True):
        sp.add_argument("--config", metavar="PATH", help="flat key = value file; flags override it")
        sp.add_argument("--out", metavar="DIR", help="output directory")
        if seed:
            sp.add_argument("--seed", type=int, default=None, help="random seed")

    def inputs(sp, embeddings=True, features=True):
        sp.add_argument("--records", metavar="PATH", help="comment records (JSON lines)")
        if embeddings:
            sp.add_argument("--embeddings", metavar="PATH", help="word vectors, 'token v1 ... vd' per line")
        if features:
            sp.add_argument("--user-features", metavar="PATH")
            sp.add_argument("--item-features", metavar="PATH")

    sp = sub.add_parser("synth", help="write a seeded synthetic corpus")
    common(sp)
    sp.add_argument("--n-users", type=_positive_int)
    sp.add_argument("--n-items", type=_positive_int)
    sp.add_argument("--n-comments", type=_positive_int)
    sp.add_argument("--spam-fraction", type=_fraction)
    sp.add_argument("--deformation-rate", type=_fraction)
    sp.add_argument("--vocab-size", type=_positive_int)
    sp.add_argument("--time-span", type=_positive_int, help="seconds")
    sp.add_argument("--campaign-mix", type=_triple, help="weights a,b,c of the three campaign kinds")
    sp.set_defaults(func=cmd_synth, needs_seed=True)

    sp = sub.add_parser("ingest", help="validate records and summarise them")
    common(sp, seed=False)
    inputs(sp, embeddings=False, features=False)
    sp.set_defaults(func=cmd_ingest)

    sp = sub.add_parser("build-knn", help="build the comment graph (dedup, SIF, NN-Descent, filtering)")
    common(sp)
    inputs(sp, features=False)
    sp.add_argument("--K", type=_positive_int, default=10)
    sp.add_argument("--iterations", type=_nonneg_int, default=10)
    sp.add_argument("--sample-rate", type=_fraction, default=0.5)
    sp.add_argument("--delta", type=float, default=0.001)
    sp.add_argument("--sif-a", type=float, default=1e-3)
    sp.add_argument("--keep-pc", action="store_true", help="skip first-component removal")
    sp.set_defaults(func=cmd_build_knn, seed_default=0)

    sp = sub.add_parser("train", help="train a model and score the test split")
    common(sp)
    inputs(sp)
    sp.add_argument("--comment-graph", metavar="PATH")
    sp.add_argument("--variant", choices=["baseline", "gas-local", "gas"], default="gas")
    sp.add_argument("--layers", type=int, choices=[1, 2], default=2)
    sp.add_argument("--epochs", type=_nonneg_int, default=8)
    sp.add_argument("--batch-size", type=_positive_int, default=128)
    sp.add_argument("--lr", type=float, default=0.005)
    sp.add_argument("--precision", choices=["f32", "f64"], default="f32")
    sp.set_defaults(func=cmd_train, needs_seed=True)

    sp = sub.add_parser("predict", help="score records with a checkpoint")
    common(sp, seed=False)
    inputs(sp, embeddings=False)
    sp.add_argument("--checkpoint", metavar="PATH")
    sp.add_argument("--comment-graph", metavar="PATH")
    sp.set_defaults(func=cmd_predict)

    sp = sub.add_parser("eval", help="metrics JSON, PR curve CSV and PNG from a scores file")
    common(sp, seed=False)
    sp.add_argument("--scores", metavar="PATH", help="CSV with comment_id,score,label")
    sp.add_argument("--threshold", type=float, default=0.5, help="F1 decision threshold")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("diagnose", help="embedding-smoothing diagnostic and neighbour statistics")
    common(sp)
    inputs(sp)
    sp.add_argument("--comment-graph", metavar="PATH")
    sp.add_argument("--checkpoint", metavar="PATH", help="use this model's text encoder instead of SIF vectors")
    sp.add_argument("--gas-scores", metavar="PATH")
    sp.add_argument("--local-scores", metavar="PATH")
    sp.add_argument("--lr-iterations", type=_nonneg_int, default=200)
    sp.add_argument("--lr-rate", type=float, default=0.1)
    sp.add_argument("--lr-l2", type=float, default=1e-4)
    sp.set_defaults(func=cmd_diagnose, seed_default=0)
    return p


def _subparser(parser, name):
    for a in parser._actions:
        if isinstance(a, argparse._SubParsersAction):
            return a.choices[name]
    raise KeyError(name)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "config", None):
            sp = _subparser(parser, args.command)
            apply_config(sp, read_config(args.config), args.config)
            args = parser.parse_args(argv)
        if hasattr(args, "seed") and args.seed is None:
            if getattr(args, "needs_seed", False):
                raise CliError("usage", f"{args.command} needs --seed (flag or config key)")
            args.seed = getattr(args, "seed_default", 0)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s", stream=sys.stderr)
        args.func(args)
    except CliError as err:
        _fail(err.code, err.reason, 2 if err.code == "usage" else 1)
    except ConfigFileError as err:
        _fail("config", str(err), 2)
    except Exception as err:  # one parsable line instead of a traceback
        _fail(_error_code(err), str(err) or type(err).__name__)
    return 0


def _error_code(err: Exception) -> str:
    from .autodiff import TrainingAborted
    from .graph import GraphLookupError, IngestError
    from .hetero import ConfigError
    from .knn import KnnConfigError
    from .model import CheckpointError, IncompatibleCheckpoint
    from .synth import SynthConfigError
    from .text import EmbeddingFormatError

    table = [
        (IncompatibleCheckpoint, "incompatible_checkpoint"),
        (CheckpointError, "bad_checkpoint"),
        (IngestError, "bad_input"),
        (EmbeddingFormatError, "bad_embeddings"),
        (SynthConfigError, "bad_synth_config"),
        (KnnConfigError, "bad_knn_config"),
        (ConfigError, "bad_model_config"),
        (GraphLookupError, "unknown_id"),
        (TrainingAborted, "training_aborted"),
        (metrics.UndefinedMetricError, "undefined_metric"),
        (OSError, "io"),
    ]
    for cls, code in table:
        if isinstance(err, cls):
            return code
    return "internal"


if __name__ == "__main__":
    sys.exit(main())

"""Command-line pipeline: synth -> embed -> graphs -> train -> eval, plus
bench, predict, and serve. Every stage writes a file artifact and is
byte-reproducible for a fixed seed."""

from __future__ import annotations

import argparse
import json
import sys

from . import bench as bench_mod
from . import gnn, graphs, ingest, metrics, serve, textembed
from .inference import classify_document


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--config", type=str, default=None,
                        help="JSON file whose entries override any flag")


def _policy_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--edge-policy", choices=["knn", "full", "chain"],
                        default="knn")
    parser.add_argument("--knn-k", type=int, default=3)
    parser.add_argument("--use-image-features", action="store_true")
    parser.add_argument("--image-dim", type=int, default=16)


def _split_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--train-frac", type=float, default=0.8)
    parser.add_argument("--val-frac", type=float, default=0.0)
    parser.add_argument("--test-frac", type=float, default=0.2)


def _w2v_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--dim", type=int, default=64)
    parser.add_argument("--window", type=int, default=5)
    parser.add_argument("--negatives", type=int, default=5)
    parser.add_argument("--w2v-epochs", type=int, default=5)
    parser.add_argument("--w2v-lr", type=float, default=0.025)
    parser.add_argument("--min-count", type=int, default=2)


def _train_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--epochs", type=int, default=50)
    parser.add_argument("--batch-size", type=int, default=32)
    parser.add_argument("--lr", type=float, default=1e-3)
    parser.add_argument("--sortpool-k", type=int, default=8)
    parser.add_argument("--dense-hidden", type=int, default=128)
    parser.add_argument("--dropout", type=float, default=0.5)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="docgraph",
        description="Document classification with region graphs and a "
                    "SortPooling GCN")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--classes", type=int, default=5)
    p.add_argument("--docs-per-class", type=int, default=200)
    p.add_argument("--out", required=True)
    _add_common(p)

    p = sub.add_parser("embed", help="train word embeddings on a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    _w2v_args(p)
    _add_common(p)

    p = sub.add_parser("graphs", help="split a corpus and build graph "
                                      "datasets")
    p.add_argument("--corpus", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--out", required=True)
    _policy_args(p)
    _split_args(p)
    _add_common(p)

    p = sub.add_parser("train", help="train the classifier on built graphs")
    p.add_argument("--graphs", required=True)
    p.add_argument("--out", required=True)
    _train_args(p)
    _add_common(p)

    p = sub.add_parser("eval", help="evaluate a model on the test split")
    p.add_argument("--graphs", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", default=None, help="write the JSON report here")
    _add_common(p)

    p = sub.add_parser("bench", help="benchmark the full pipeline")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--cost-model", default=None,
                   help="JSON list of {instance_name, usd_per_hour}")
    _policy_args(p)
    _split_args(p)
    _w2v_args(p)
    _train_args(p)
    _add_common(p)

    p = sub.add_parser("predict", help="classify one document annotation")
    p.add_argument("--model", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--input", required=True,
                   help="file with one DocumentAnnotation JSON object")
    _add_common(p)

    p = sub.add_parser("serve", help="run the HTTP inference service")
    p.add_argument("--model", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    _add_common(p)

    return parser


def _apply_config(args: argparse.Namespace) -> None:
    if not args.config:
        return
    with open(args.config, "r", encoding="utf-8") as fh:
        overrides = json.load(fh)
    for key, value in overrides.items():
        setattr(args, key.replace("-", "_"), value)


def _policy(args) -> graphs.EdgePolicy:
    if args.edge_policy == "knn":
        return graphs.EdgePolicy.spatial_knn(args.knn_k)
    return graphs.EdgePolicy(args.edge_policy)


def _image_dim(args) -> int | None:
    return args.image_dim if args.use_image_features else None


def _w2v_config(args) -> textembed.Word2VecConfig:
    return textembed.Word2VecConfig(
        dim=args.dim, window=args.window, negatives=args.negatives,
        epochs=args.w2v_epochs, learning_rate=args.w2v_lr,
        min_count=args.min_count, seed=args.seed)


def _model_config(args) -> gnn.GnnConfig:
    return gnn.GnnConfig(sortpool_k=args.sortpool_k,
                         dense_hidden=args.dense_hidden or None,
                         dropout_rate=args.dropout)


def _train_config(args) -> gnn.TrainConfig:
    return gnn.TrainConfig(batch_size=args.batch_size, epochs=args.epochs,
                           learning_rate=args.lr, seed=args.seed)


def cmd_synth(args) -> int:
    corpus = ingest.generate_synthetic_corpus(args.classes,
                                              args.docs_per_class, args.seed)
    ingest.save_corpus(corpus, args.out)
    print(f"wrote {len(corpus.documents)} documents "
          f"({corpus.n_classes} classes) to {args.out}")
    return 0


def cmd_embed(args) -> int:
    corpus = ingest.load_corpus(args.corpus)
    embeddings = textembed.train_word2vec(corpus, _w2v_config(args))
    textembed.save_embeddings(embeddings, args.out)
    print(f"wrote embeddings |V|={len(embeddings.vocabulary)} "
          f"dim={embeddings.dim} to {args.out}")
    return 0


def cmd_graphs(args) -> int:
    corpus = ingest.load_corpus(args.corpus)
    embeddings = textembed.load_embeddings(args.embeddings)
    split = ingest.split_dataset(
        corpus, (args.train_frac, args.val_frac, args.test_frac), args.seed)
    train_set, val_set, test_set = graphs.build_dataset(
        corpus, split, embeddings, _policy(args), _image_dim(args))
    graphs.save_dataset_bundle(train_set, val_set, test_set, args.out)
    print(f"wrote {len(train_set.graphs)}/{len(val_set.graphs)}/"
          f"{len(test_set.graphs)} graphs (f={train_set.feature_dim}) "
          f"to {args.out}")
    return 0


def cmd_train(args) -> int:
    train_set, val_set, _ = graphs.load_dataset_bundle(args.graphs)
    model, history = gnn.train(train_set, val_set, _model_config(args),
                               _train_config(args),
                               class_names=train_set.class_names,
                               graph_build=train_set.build_meta)
    gnn.save_model(model, args.out)
    last = history.epochs[-1]
    print(f"wrote model ({gnn.count_parameters(model)} parameters) to "
          f"{args.out}; final train accuracy {last.train_accuracy:.4f}")
    return 0


def cmd_eval(args) -> int:
    _, _, test_set = graphs.load_dataset_bundle(args.graphs)
    model = gnn.load_model(args.model)
    report = metrics.evaluate(model, test_set)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(report.to_json() + "\n")
    print(f"{'Model':<24}{'AUC':>10}{'Accuracy':>10}{'Parameters':>12}")
    print(f"{'docgraph':<24}{report.macro_auc:>10.4f}"
          f"{report.accuracy:>10.4f}{gnn.count_parameters(model):>12}")
    return 0


def cmd_bench(args) -> int:
    corpus = ingest.load_corpus(args.corpus)
    split = ingest.split_dataset(
        corpus, (args.train_frac, args.val_frac, args.test_frac), args.seed)
    report = bench_mod.run_benchmark(
        corpus, split, _w2v_config(args), _policy(args), _image_dim(args),
        _model_config(args), _train_config(args))
    print(report.format_table())
    if args.cost_model:
        cost_model = bench_mod.CostModel.from_file(args.cost_model)
        for entry in bench_mod.estimate_cost(report, cost_model):
            print(f"{entry['instance_name']:<26}${entry['usd']:.4f}")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(report.to_json() + "\n")
    return 0


def cmd_predict(args) -> int:
    model = gnn.load_model(args.model)
    embeddings = textembed.load_embeddings(args.embeddings)
    with open(args.input, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    doc = ingest.document_from_json(obj, strict=True)
    result = classify_document(doc, model, embeddings)
    print(json.dumps(result))
    return 0


def cmd_serve(args) -> int:
    serve.serve_forever(args.model, args.embeddings, args.host, args.port)
    return 0


_COMMANDS = {
    "synth": cmd_synth,
    "embed": cmd_embed,
    "graphs": cmd_graphs,
    "train": cmd_train,
    "eval": cmd_eval,
    "bench": cmd_bench,
    "predict": cmd_predict,
    "serve": cmd_serve,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _apply_config(args)
        return _COMMANDS[args.command](args)
    except (ingest.ValidationError, ingest.CorpusParseError, ValueError,
            FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

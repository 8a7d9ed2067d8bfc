"""Command-line entry point: ``glar {prepare,cluster,train,eval,bench}``.

Exit codes: 0 success, 1 usage or config error, 2 data error, 3 numeric failure.
"""
import argparse
import contextlib
import csv
import json
import logging
import os
import sys
import time

import numpy as np

from .config import STRUCTURAL, RunConfig, load_config
from .exceptions import DataError, GLARError, LoadError, NumericError, ParameterError

logger = logging.getLogger("glar")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# config keys settable from flags: flag name -> (RunConfig field, type)
_OVERRIDES = {
    "dataset_dir": str, "output_dir": str, "k": int, "J": int, "m": int, "L": int, "dim": int,
    "batch_size": int, "learning_rate": float, "epochs": int, "patience": int,
    "negatives_train": int, "negatives_eval": int, "valid_max_queries": int, "auc_seeds": int,
    "seed": int,
}


def _add_config_args(p, with_dataset=True):
    p.add_argument("--config", help="key=value config file")
    for name, kind in _OVERRIDES.items():
        if name == "dataset_dir" and not with_dataset:
            continue
        p.add_argument(f"--{name.replace('_', '-')}", dest=name, type=kind, default=None)
    p.add_argument("--set-relations", dest="relational_multiplicity", action="store_false", default=None,
                   help="count incident relations as a set instead of with multiplicity")
    p.add_argument("--unfiltered", dest="filtered_eval", action="store_false", default=None,
                   help="do not filter known true answers from ranking negatives")
    p.add_argument("--threads", type=int, default=None, help="BLAS threads (falls back to GLAR_THREADS)")
    p.add_argument("--run-id", default=None, help="output subdirectory (default: <dataset>-seed<seed>)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="glar", description="Inductive link prediction with local and global anchors.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("prepare", help="load a split, print statistics, check inductive disjointness")
    p.add_argument("dataset_dir")
    p.add_argument("--inductive-dir", default=None)
    p.add_argument("--export", default=None, help="write canonical triples and id maps to this directory")

    p = sub.add_parser("cluster", help="fit global-anchor centroids on the training graph")
    _add_config_args(p)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    _add_config_args(p)

    p = sub.add_parser("eval", help="Hits@10 and AUC-PR of a checkpoint on the test split")
    p.add_argument("--checkpoint", required=True)
    _add_config_args(p)
    p.add_argument("--group-by-degree", action="store_true")
    p.add_argument("--dump-subgraphs", default=None, metavar="PATH",
                   help="write the opening subgraph of every directed test query as JSON lines")

    p = sub.add_parser("bench", help="time full test-set scoring at several negatives counts")
    p.add_argument("--checkpoint", required=True)
    _add_config_args(p)
    p.add_argument("--negatives", type=int, nargs="*", default=[20, 150])
    p.add_argument("--parallel-timing", action="store_true", help="do not force single-threaded timing")
    return parser


def resolve_config(args, snapshot_dir=None) -> RunConfig:
    """Config file (or a run's snapshot), then flag overrides, then validation."""
    base = RunConfig()
    if args.config:
        if not os.path.isfile(args.config):
            raise UsageError(f"config file not found: {args.config}")
        base = load_config(args.config)
    elif snapshot_dir and os.path.isfile(os.path.join(snapshot_dir, "config.txt")):
        base = load_config(os.path.join(snapshot_dir, "config.txt"))
    overrides = {name: getattr(args, name, None) for name in
                 list(_OVERRIDES) + ["relational_multiplicity", "filtered_eval", "threads"]}
    if overrides["threads"] is None and os.environ.get("GLAR_THREADS"):
        try:
            overrides["threads"] = int(os.environ["GLAR_THREADS"])
        except ValueError:
            raise UsageError(f"GLAR_THREADS must be an integer, got {os.environ['GLAR_THREADS']!r}") from None
    cfg = base.with_overrides(**overrides).validate()
    if not cfg.dataset_dir:
        raise UsageError("no dataset directory (use --dataset-dir or dataset_dir= in the config)")
    return cfg


def run_dir(cfg: RunConfig, run_id=None) -> str:
    name = run_id or f"{os.path.basename(cfg.dataset_dir.rstrip('/'))}-seed{cfg.seed}"
    path = os.path.join(cfg.output_dir, name)
    os.makedirs(path, exist_ok=True)
    with open(os.path.join(path, "config.txt"), "w", encoding="utf-8") as fh:
        fh.write(cfg.to_text())
    return path


def _threads(n):
    if n is None:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=n)


def _write_json(path, data):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(data, sort_keys=True, indent=1) + "\n")


def check_structure(model, cfg: RunConfig):
    """Refuse a checkpoint whose structural hyperparameters differ from ``cfg``."""
    have = {"k": model.k, "J": model.J, "m": model.n_clusters, "L": model.n_layers, "dim": model.dim}
    want = cfg.structural()
    diff = [f"{k}: checkpoint {have[k]} vs config {want[k]}" for k in STRUCTURAL if have[k] != want[k]]
    if diff:
        raise UsageError("checkpoint does not match the run config (" + "; ".join(diff) + ")")


# -- commands ------------------------------------------------------------------

def cmd_prepare(args) -> int:
    from .kg import dump_id_maps, load_split, write_split

    split = load_split(args.dataset_dir, args.inductive_dir)
    stats = split.statistics()
    print(f"{'graph':<8}{'#R':>6}{'#E':>9}{'#T':>9}")
    for part in ("train", "test"):
        s = stats[part]
        print(f"{part:<8}{s['relations']:>6}{s['entities']:>9}{s['triples']:>9}")
    print(f"valid triples: {stats['valid']['triples']}, test queries: {stats['test_queries']['triples']}")
    if args.export:
        dirs = write_split(split, os.path.join(args.export, split.name))
        dump_id_maps(split.train_graph, os.path.join(args.export, "train_ids.json"))
        dump_id_maps(split.test_graph, os.path.join(args.export, "test_ids.json"))
        print(f"exported to {dirs[0]} and {dirs[1]}")
    overlap = split.overlapping_entities()
    if overlap:
        shown = ", ".join(overlap[:5]) + (" ..." if len(overlap) > 5 else "")
        print(f"disjointness violation: {len(overlap)} entities in both graphs ({shown})")
        return EXIT_DATA
    print("inductive disjointness: ok")
    return EXIT_OK


def cmd_cluster(args) -> int:
    from .global_anchor import GlobalAnchorFeaturizer
    from .kg import augment_with_inverses, load_split

    cfg = resolve_config(args)
    split = load_split(cfg.dataset_dir)
    out = run_dir(cfg, args.run_id)
    with _threads(cfg.threads):
        g = augment_with_inverses(split.train_graph)
        gf = GlobalAnchorFeaturizer(cfg.m, cfg.J, cfg.relational_multiplicity, random_state=cfg.seed).fit(g)
        feats = gf.transform(g)
    km = gf.kmeans_
    labels = split.train_graph.entity_labels
    sizes = np.bincount(feats.anchors.assignment, minlength=cfg.m)
    _write_json(os.path.join(out, "clusters.json"), {
        "centroids": km.cluster_centers_.tolist(),
        "inertia_history": list(km.inertia_history_),
        "anchors": [None if a < 0 else labels[a] for a in feats.anchors.anchors.tolist()],
        "cluster_sizes": sizes.tolist(),
    })
    print(f"{cfg.m} clusters, {int((sizes == 0).sum())} empty, {km.n_iter_} iterations, "
          f"inertia {km.inertia_:.6f}")
    print(f"wrote {os.path.join(out, 'clusters.json')}")
    return EXIT_OK


def cmd_train(args) -> int:
    from .kg import load_split
    from .train_eval import train

    cfg = resolve_config(args)
    split = load_split(cfg.dataset_dir)
    out = run_dir(cfg, args.run_id)
    t0 = time.perf_counter()
    with _threads(cfg.threads):
        model = train(split, cfg)
    elapsed = time.perf_counter() - t0
    path = model.save(os.path.join(out, "checkpoint.json"))
    with open(os.path.join(out, "loss.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "loss", "valid_hits@10"])
        valid = model.valid_history_
        for i, value in enumerate(model.loss_history_):
            w.writerow([i + 1, repr(value), repr(valid[i]) if i < len(valid) else ""])
    _write_json(os.path.join(out, "train_times.json"), {"train_s": elapsed, "epochs": model.n_epochs_})
    print(f"trained {model.n_epochs_} epochs in {elapsed:.1f}s; checkpoint {path}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .estimator import GLAR
    from .kg import augment_with_inverses, load_split
    from .train_eval import evaluate, metrics_json

    model = GLAR.load(args.checkpoint)
    cfg = resolve_config(args, snapshot_dir=os.path.dirname(os.path.abspath(args.checkpoint)))
    check_structure(model, cfg)
    split = load_split(cfg.dataset_dir)
    out = run_dir(cfg, args.run_id)
    with _threads(cfg.threads):
        metrics, times = evaluate(model, split, cfg, group_by_degree=args.group_by_degree)
    with open(os.path.join(out, "metrics.json"), "w", encoding="utf-8") as fh:
        fh.write(metrics_json(metrics) + "\n")
    with open(os.path.join(out, "metrics.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["dataset", "version", "seed", "hits@10", "auc_pr"])
        w.writerow([metrics["dataset"], metrics["version"], metrics["seed"],
                    repr(metrics["hits@10"]), repr(metrics["auc_pr"])])
    _write_json(os.path.join(out, "wall_times.json"), times)
    if args.dump_subgraphs:
        from .evaluation import directed_queries
        from .subgraph import extract_opening_subgraph

        g = augment_with_inverses(split.test_graph)
        with open(args.dump_subgraphs, "w", encoding="utf-8") as fh:
            for h, r, _ in directed_queries(split.test_triples, g.relation_count).tolist():
                sub = extract_opening_subgraph(g, h, model.k)
                fh.write(json.dumps({"relation": r, **sub.to_json()}) + "\n")
    print(f"hits@10 {metrics['hits@10']:.4f}  auc_pr {metrics['auc_pr']:.4f}")
    if args.group_by_degree:
        for name, row in metrics["hits@10_by_degree"].items():
            value = "n/a" if row["hits@10"] is None else f"{row['hits@10']:.4f}"
            print(f"  degree {name:<7} queries {row['queries']:>5}  hits@10 {value}")
    print(f"wrote {os.path.join(out, 'metrics.json')}")
    return EXIT_OK


def cmd_bench(args) -> int:
    from .estimator import GLAR
    from .kg import load_split
    from .train_eval import bench_reasoning

    if not args.negatives:
        raise UsageError("--negatives needs at least one count")
    if any(n < 1 for n in args.negatives):
        raise UsageError("negatives counts must be positive")
    model = GLAR.load(args.checkpoint)
    cfg = resolve_config(args, snapshot_dir=os.path.dirname(os.path.abspath(args.checkpoint)))
    check_structure(model, cfg)
    split = load_split(cfg.dataset_dir)
    out = run_dir(cfg, args.run_id)
    threads = cfg.threads if args.parallel_timing else 1
    with _threads(threads):
        report = bench_reasoning(model, split, args.negatives, seed=cfg.seed, filtered=cfg.filtered_eval)
    path = os.path.join(out, "bench.csv")
    report.write_csv(path)
    for r in report.rows:
        print(f"negatives {r.negatives:>5}: {r.seconds:.3f}s  (extraction {r.extraction_s:.3f}s, "
              f"labeling {r.labeling_s:.3f}s, forward {r.forward_s:.3f}s, {r.extractions} extractions "
              f"for {r.queries} queries / {r.candidates} candidates)")
    ratio = report.ratio()
    if ratio is not None:
        lo = min(r.negatives for r in report.rows)
        hi = max(r.negatives for r in report.rows)
        print(f"ratio t({hi})/t({lo}) = {ratio:.3f}")
    print(f"wrote {path}")
    return EXIT_OK


COMMANDS = {"prepare": cmd_prepare, "cluster": cmd_cluster, "train": cmd_train, "eval": cmd_eval,
            "bench": cmd_bench}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ParameterError) as exc:
        print(f"glar: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, LoadError) as exc:
        print(f"glar: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"glar: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except GLARError as exc:
        print(f"glar: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

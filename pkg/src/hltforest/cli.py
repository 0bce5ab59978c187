"""Command-line entry points: prepare, learn, recommend, evaluate, serve.

Exit codes: 0 success, 1 usage problems, 2 rejected input data, 3 anything
unexpected.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time

from .car import rerank_all, write_explanations
from .data import (
    BinaryMatrix,
    Vocabulary,
    filter_min_activity,
    load_events,
    read_vocab,
    temporal_split,
    to_binary_matrix,
    write_vocab,
)
from .errors import ConfigError, DataError
from .evaluation import level_sweep, run_experiment, write_report
from .figures import comparison_figure, level_sweep_figure
from .forest import LearnerConfig
from .hierarchy import (
    export_hierarchy,
    learn_hierarchy,
    load_model,
    save_model,
    write_timing_log,
)
from .recommenders import (
    ItemKNNRecommender,
    PopularityRecommender,
    Recommender,
    UserKNNRecommender,
    WRMFRecommender,
    write_ranked_lists,
)
from .service import HierarchyService, make_server

_logger = logging.getLogger(__name__)

ALGORITHMS = ("popularity", "item-knn", "user-knn", "wrmf")


class _Parser(argparse.ArgumentParser):
    """argparse's default exit code for usage errors is 2; we reserve that."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(prog="hltforest", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("prepare", help="events file -> split matrices and vocabularies")
    p.add_argument("--events", required=True, help="delimited user,item,timestamp file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--delimiter", default=",")
    p.add_argument("--skip-header", action="store_true")
    p.add_argument("--min-user-events", type=int, default=3)
    p.add_argument("--min-item-events", type=int, default=5)
    p.add_argument(
        "--fractions",
        default="0.7,0.15,0.15",
        help="train,valid,test fractions (comma separated, sum to 1)",
    )

    p = sub.add_parser("learn", help="train matrix -> hierarchy checkpoint and export")
    p.add_argument("--data", required=True, help="directory written by prepare")
    p.add_argument("--out", required=True, help="model output directory")
    p.add_argument("--split-threshold", type=float, default=3.0)
    p.add_argument("--max-category-size", type=int, default=10)
    p.add_argument("--em-steps", type=int, default=10)
    p.add_argument("--local-em-steps", type=int, default=5)
    p.add_argument("--max-top", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--reps", type=int, default=5, help="representatives per exported node")

    p = sub.add_parser("recommend", help="write ranked lists for users")
    p.add_argument("--data", required=True)
    p.add_argument("--model", help="model directory (required with --car/--explain)")
    p.add_argument("--algo", choices=ALGORITHMS, default="item-knn")
    p.add_argument("--k", type=int, default=50)
    p.add_argument("--users", help="comma-separated user tokens (default: all)")
    p.add_argument("--out", required=True, help="ranked list file")
    p.add_argument("--car", action="store_true", help="category-aware re-ranking")
    p.add_argument("--alpha", type=int, default=5)
    p.add_argument("--level", type=int, default=1)
    p.add_argument("--pool-factor", type=int, default=4)
    p.add_argument("--explain", help="also write this explanation sidecar file")
    p.add_argument("--reps", type=int, default=3, help="representatives per explanation")
    p.add_argument("--context-level", type=int)
    p.add_argument("--n-neighbors", type=int, default=50)
    p.add_argument("--factors", type=int, default=32)
    p.add_argument("--regularization", type=float, default=0.01)
    p.add_argument("--c-weight", type=float, default=40.0)
    p.add_argument("--iterations", type=int, default=15)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("evaluate", help="metric report and figures for base vs re-ranked")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True, help="report output directory")
    p.add_argument("--algos", default="item-knn,wrmf", help="comma-separated algorithms")
    p.add_argument("--truth", choices=("valid", "test"), default="test")
    p.add_argument("--k", type=int, default=50)
    p.add_argument("--alpha", type=int, default=5)
    p.add_argument("--level", type=int, default=1)
    p.add_argument("--pool-factor", type=int, default=4)
    p.add_argument("--pair-budget", type=int, default=100_000)
    p.add_argument("--sweep-algo", help="also sweep re-ranking levels for this algorithm")
    p.add_argument("--n-neighbors", type=int, default=50)
    p.add_argument("--factors", type=int, default=32)
    p.add_argument("--regularization", type=float, default=0.01)
    p.add_argument("--c-weight", type=float, default=40.0)
    p.add_argument("--iterations", type=int, default=15)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("serve", help="read-only JSON API plus static frontend")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8571)
    p.add_argument("--assets", help="static frontend directory")
    p.add_argument("--algo", choices=ALGORITHMS, default="item-knn")
    p.add_argument("--k", type=int, default=20)
    p.add_argument("--alpha", type=int, default=5)
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--n-neighbors", type=int, default=50)
    p.add_argument("--factors", type=int, default=32)
    p.add_argument("--regularization", type=float, default=0.01)
    p.add_argument("--c-weight", type=float, default=40.0)
    p.add_argument("--iterations", type=int, default=15)
    p.add_argument("--seed", type=int, default=0)
    return parser


def _load_workspace(data_dir: str) -> tuple[Vocabulary, BinaryMatrix]:
    vocab = Vocabulary(
        users=read_vocab(os.path.join(data_dir, "users.vocab")),
        items=read_vocab(os.path.join(data_dir, "items.vocab")),
    )
    train = BinaryMatrix.load(os.path.join(data_dir, "train.matrix"))
    if train.n_users != vocab.n_users or train.n_items != vocab.n_items:
        raise DataError(f"{data_dir}: train matrix does not match vocabularies")
    return vocab, train


def _make_recommender(name: str, args: argparse.Namespace) -> Recommender:
    if name == "popularity":
        return PopularityRecommender()
    if name == "item-knn":
        return ItemKNNRecommender(n_neighbors=args.n_neighbors)
    if name == "user-knn":
        return UserKNNRecommender(n_neighbors=args.n_neighbors)
    if name == "wrmf":
        return WRMFRecommender(
            n_factors=args.factors,
            regularization=args.regularization,
            c_weight=args.c_weight,
            n_iterations=args.iterations,
            seed=args.seed,
        )
    raise ConfigError(f"unknown algorithm {name!r}")


def _cmd_prepare(args: argparse.Namespace) -> int:
    try:
        fractions = tuple(float(x) for x in args.fractions.split(","))
    except ValueError as exc:
        raise ConfigError(f"bad --fractions: {exc}") from exc
    log = load_events(args.events, delimiter=args.delimiter, skip_header=args.skip_header)
    fed = len(log.events)
    log = filter_min_activity(
        log, min_user_events=args.min_user_events, min_item_events=args.min_item_events
    )
    survived = len(log.events)
    train_log, valid_log, test_log = temporal_split(log, fractions)
    vocab = Vocabulary(
        users=sorted({ev.user for ev in log.events}),
        items=sorted({ev.item for ev in train_log.events}),
    )
    os.makedirs(args.out, exist_ok=True)
    write_vocab(os.path.join(args.out, "users.vocab"), vocab.users)
    write_vocab(os.path.join(args.out, "items.vocab"), vocab.items)
    dropped = {}
    for name, part in (("train", train_log), ("valid", valid_log), ("test", test_log)):
        dropped[name] = sum(1 for ev in part.events if ev.item not in vocab.item_index)
        matrix, _ = to_binary_matrix(part, vocab)
        matrix.save(os.path.join(args.out, f"{name}.matrix"))
    with open(os.path.join(args.out, "prepare.tsv"), "w", encoding="utf-8") as fh:
        fh.write("stat\tvalue\n")
        fh.write(f"events_read\t{fed}\n")
        fh.write(f"events_malformed\t{log.malformed}\n")
        fh.write(f"events_after_activity_filter\t{survived}\n")
        fh.write(f"users\t{vocab.n_users}\n")
        fh.write(f"items\t{vocab.n_items}\n")
        for name, part in (("train", train_log), ("valid", valid_log), ("test", test_log)):
            fh.write(f"{name}_events\t{len(part.events)}\n")
            fh.write(f"{name}_dropped_unknown_item\t{dropped[name]}\n")
    _logger.info(
        "prepared %d users x %d items (train %d / valid %d / test %d events)",
        vocab.n_users,
        vocab.n_items,
        len(train_log.events),
        len(valid_log.events),
        len(test_log.events),
    )
    return 0


def _cmd_learn(args: argparse.Namespace) -> int:
    vocab, train = _load_workspace(args.data)
    config = LearnerConfig(
        split_threshold=args.split_threshold,
        max_category_size=args.max_category_size,
        em_steps=args.em_steps,
        local_em_steps=args.local_em_steps,
        seed=args.seed,
    )
    t0 = time.perf_counter()
    model = learn_hierarchy(train, config, max_top=args.max_top)
    total = time.perf_counter() - t0
    model.meta = {
        "split_threshold": config.split_threshold,
        "max_category_size": config.max_category_size,
        "em_steps": config.em_steps,
        "local_em_steps": config.local_em_steps,
        "seed": config.seed,
        "max_top": args.max_top,
    }
    os.makedirs(args.out, exist_ok=True)
    save_model(model, args.out)
    export = export_hierarchy(model, vocab, reps_per_node=args.reps)
    with open(os.path.join(args.out, "hierarchy.json"), "w", encoding="utf-8") as fh:
        json.dump(export, fh, indent=2)
        fh.write("\n")
    write_timing_log(os.path.join(args.out, "timing.tsv"), model, total)
    _logger.info(
        "learned %d levels (%s categories) in %.2fs",
        model.depth,
        "/".join(str(f.n_categories) for f in model.layers),
        total,
    )
    return 0


def _resolve_users(args: argparse.Namespace, vocab: Vocabulary) -> list[int]:
    if args.users:
        out = []
        for token in args.users.split(","):
            idx = vocab.user_index.get(token)
            if idx is None:
                raise DataError(f"unknown user token {token!r}")
            out.append(idx)
        return out
    return list(range(vocab.n_users))


def _cmd_recommend(args: argparse.Namespace) -> int:
    vocab, train = _load_workspace(args.data)
    users = _resolve_users(args, vocab)
    rec = _make_recommender(args.algo, args).fit(train)
    needs_model = args.car or args.explain
    model = None
    if needs_model:
        if not args.model:
            raise ConfigError("--car/--explain require --model")
        model = load_model(args.model, train)
    if args.car:
        assert model is not None
        pool = rec.recommend(users, args.k * args.pool_factor)
        lists = rerank_all(pool, model, train, args.k, args.alpha, args.level)
    else:
        lists = rec.recommend(users, args.k)
    write_ranked_lists(args.out, lists, vocab)
    if args.explain:
        assert model is not None
        write_explanations(
            args.explain,
            lists,
            model,
            vocab,
            reps_per_node=args.reps,
            context_level=args.context_level,
        )
    _logger.info("wrote %d ranked lists to %s", len(lists), args.out)
    return 0


def _truth_from_matrix(matrix: BinaryMatrix) -> dict[int, set[int]]:
    return {
        u: set(matrix.row_items(u).tolist())
        for u in range(matrix.n_users)
        if len(matrix.row_items(u))
    }


def _cmd_evaluate(args: argparse.Namespace) -> int:
    vocab, train = _load_workspace(args.data)
    model = load_model(args.model, train)
    truth_matrix = BinaryMatrix.load(os.path.join(args.data, f"{args.truth}.matrix"))
    if truth_matrix.n_users != train.n_users or truth_matrix.n_items != train.n_items:
        raise DataError(f"{args.truth} matrix does not match the training matrix")
    truth = _truth_from_matrix(truth_matrix)
    names = [n.strip() for n in args.algos.split(",") if n.strip()]
    recs = {name: _make_recommender(name, args) for name in names}
    rows = run_experiment(
        train,
        truth,
        model,
        recs,
        k=args.k,
        alpha=args.alpha,
        level=args.level,
        pool_factor=args.pool_factor,
        seed=args.seed,
        pair_budget=args.pair_budget,
    )
    os.makedirs(args.out, exist_ok=True)
    write_report(os.path.join(args.out, "report.tsv"), rows)
    comparison_figure(rows, os.path.join(args.out, "comparison.png"))
    if args.sweep_algo:
        sweep_rows = level_sweep(
            train,
            truth,
            model,
            _make_recommender(args.sweep_algo, args),
            k=args.k,
            alpha=args.alpha,
            pool_factor=args.pool_factor,
            seed=args.seed,
            pair_budget=args.pair_budget,
        )
        write_report(os.path.join(args.out, "level_sweep.tsv"), sweep_rows)
        level_sweep_figure(sweep_rows, os.path.join(args.out, "level_sweep.png"))
    _logger.info("evaluation written to %s", args.out)
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    vocab, train = _load_workspace(args.data)
    model = load_model(args.model, train)
    service = HierarchyService(
        model,
        vocab,
        _make_recommender(args.algo, args),
        train,
        k=args.k,
        alpha=args.alpha,
        reps_per_node=args.reps,
        assets_dir=args.assets,
    )
    server = make_server(args.host, args.port, service)
    _logger.info("serving on http://%s:%d/ (ctrl-c to stop)", args.host, args.port)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


_COMMANDS = {
    "prepare": _cmd_prepare,
    "learn": _cmd_learn,
    "recommend": _cmd_recommend,
    "evaluate": _cmd_evaluate,
    "serve": _cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"hltforest: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"hltforest: {exc}", file=sys.stderr)
        return 2
    except Exception:  # pragma: no cover - defensive
        import traceback

        traceback.print_exc()
        return 3


if __name__ == "__main__":
    sys.exit(main())

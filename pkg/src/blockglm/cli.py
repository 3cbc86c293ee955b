"""Command line entry points: repartition, train, predict, eval.

Exit codes: 0 success, 2 usage error, 3 numerical failure, 4 I/O or data
format error.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import dataio
from .driver import SolverConfig, fit, gather_dense_weights, write_history_csv
from .errors import DataFormatError, LineSearchError, OracleError, TransportError
from .losses import BINARY_LOSSES, get_loss
from .metrics import auprc
from .runtime import WorkerFailure, spawn_spmd
from .wire import TcpTransport

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="blockglm")
    sub = parser.add_subparsers(dest="command", required=True)

    rp = sub.add_parser("repartition", help="split a LIBSVM file into feature shards")
    rp.add_argument("--data", required=True)
    rp.add_argument("--nodes", type=int, required=True)
    rp.add_argument("--seed", type=int, default=0)
    rp.add_argument("--out-dir", required=True)

    tr = sub.add_parser("train", help="fit a model over M workers")
    tr.add_argument("--data", required=True)
    tr.add_argument("--loss", choices=["squared", "logistic", "probit"], default="logistic")
    tr.add_argument("--l1", type=float, default=0.0)
    tr.add_argument("--l2", type=float, default=0.0)
    tr.add_argument("--nodes", type=int, default=1)
    tr.add_argument("--mode", choices=["bsp", "alb"], default="bsp")
    tr.add_argument("--kappa", type=float, default=0.75)
    tr.add_argument("--nu", type=float, default=1e-6)
    tr.add_argument("--mu-adaptive", choices=["on", "off"], default="on")
    tr.add_argument("--max-outer", type=int, default=100)
    tr.add_argument("--tol", type=float, default=1e-8)
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--transport", choices=["inproc", "tcp"], default="inproc")
    tr.add_argument("--rank", type=int, default=0, help="this process's rank (tcp only)")
    tr.add_argument("--peers", default="", help="comma separated host:port list (tcp only)")
    tr.add_argument("--metrics-out", default=None)
    tr.add_argument("--weights-out", default=None)

    pr = sub.add_parser("predict", help="score a LIBSVM file with trained weights")
    pr.add_argument("--data", required=True)
    pr.add_argument("--weights", required=True)
    pr.add_argument("--scores-out", default=None)

    ev = sub.add_parser("eval", help="area under the precision-recall curve")
    ev.add_argument("--scores", required=True)
    ev.add_argument("--labels", required=True)
    return parser


def _cmd_repartition(args) -> int:
    spec = dataio.PartitionSpec(M=args.nodes, seed=args.seed)
    with open(args.data) as fh:
        paths = dataio.repartition(fh, spec, args.out_dir)
    print(f"wrote {len(paths)} shards to {args.out_dir}")
    return EXIT_OK


def _load_records_checked(path: str, loss_kind: str) -> list[dataio.LibsvmRecord]:
    with open(path) as fh:
        records = dataio.parse_libsvm(fh)
    if loss_kind in BINARY_LOSSES:
        for i, rec in enumerate(records, start=1):
            if rec.label not in (-1.0, 1.0):
                raise DataFormatError(
                    f"record {i}: label {rec.label} invalid for {loss_kind} loss"
                )
    return records


def _write_weights(path: str, dense: np.ndarray, idmap: dataio.IdMap) -> None:
    with open(path, "w") as fh:
        for j in np.flatnonzero(dense):
            fh.write(f"{j} {float(dense[j])!r}\n")
    dataio.write_id_map(idmap, path + ".idmap")


def _cmd_train(args) -> int:
    loss = get_loss(args.loss)
    records = _load_records_checked(args.data, args.loss)
    config = SolverConfig(
        loss=loss,
        lambda1=args.l1,
        lambda2=args.l2,
        nu=args.nu,
        kappa=args.kappa,
        mode=args.mode,
        mu_adaptive=args.mu_adaptive == "on",
        max_outer=args.max_outer,
        tol=args.tol,
    )
    shards, idmap = dataio.shards_in_memory(records, args.nodes, args.seed)

    if args.transport == "inproc":
        def body(transport):
            beta_m, history = fit(shards[transport.rank], config, transport)
            dense = gather_dense_weights(shards[transport.rank], beta_m, transport)
            return dense, history

        results = spawn_spmd(args.nodes, body)
        dense, history = results[0]
        is_writer = True
    else:
        peers = [p for p in args.peers.split(",") if p]
        if len(peers) != args.nodes:
            raise DataFormatError("--peers must list one host:port per node")
        transport = TcpTransport(args.rank, peers)
        try:
            beta_m, history = fit(shards[args.rank], config, transport)
            dense = gather_dense_weights(shards[args.rank], beta_m, transport)
        finally:
            transport.close()
        is_writer = args.rank == 0

    if is_writer:
        if args.weights_out:
            _write_weights(args.weights_out, dense, idmap)
        if args.metrics_out:
            write_history_csv(history, args.metrics_out)
        final = history[-1].objective if history else float("nan")
        print(
            f"iterations={len(history)} objective={final!r} "
            f"nnz={int(np.count_nonzero(dense))}"
        )
    return EXIT_OK


def _load_weights(path: str) -> tuple[dict[int, float], dataio.IdMap]:
    weights: dict[int, float] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise DataFormatError(f"{path}:{lineno}: bad weight line")
            weights[int(parts[0])] = float(parts[1])
    return weights, dataio.load_id_map(path + ".idmap")


def _cmd_predict(args) -> int:
    weights, idmap = _load_weights(args.weights)
    to_internal = idmap.to_internal()
    with open(args.data) as fh:
        records = dataio.parse_libsvm(fh)
    scores = []
    for rec in records:
        margin = 0.0
        for fid, val in rec.entries:
            internal = to_internal.get(fid)
            if internal is not None:
                margin += weights.get(internal, 0.0) * val
        scores.append(margin)
    out = open(args.scores_out, "w") if args.scores_out else sys.stdout
    try:
        for s in scores:
            out.write(repr(s) + "\n")
    finally:
        if args.scores_out:
            out.close()
    return EXIT_OK


def _cmd_eval(args) -> int:
    with open(args.scores) as fh:
        scores = np.asarray([float(s) for s in fh.read().split()])
    labels = dataio.load_labels(args.labels)
    print(repr(auprc(scores, labels)))
    return EXIT_OK


_COMMANDS = {
    "repartition": _cmd_repartition,
    "train": _cmd_train,
    "predict": _cmd_predict,
    "eval": _cmd_eval,
}


def cli_main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return _COMMANDS[args.command](args)
    except WorkerFailure as failure:
        return _report_failure(failure.cause)
    except (LineSearchError, OracleError, DataFormatError, OSError,
            TransportError, ValueError) as exc:
        return _report_failure(exc)


def _report_failure(exc: BaseException) -> int:
    if isinstance(exc, (LineSearchError, OracleError)):
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    if isinstance(exc, DataFormatError):
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_IO
    if isinstance(exc, TransportError):
        print(f"transport failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    if isinstance(exc, OSError):
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    if isinstance(exc, ValueError):
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    raise exc


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()

"""Command-line entry point: ``renyikd <subcommand> ...``.

Exit codes: 0 success, 1 check failure, 2 usage/contract error,
3 degenerate data. Results go to stdout as one JSON object or CSV;
diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time

import numpy as np

from .entropy import EntropyOrder, entropy_eig, entropy_frob, mutual_information
from .errors import ContractError, DegenerateInputError, FormatError, RenyiKDError, ShapeError
from .gram import feature_gram, linear_gram, normalize_def1, trace_normalize
from .losses import DEFAULT_LAMBDA1, DEFAULT_LAMBDA2, LossWeights, breakdown, loss_d, loss_r
from .prng import make_rng
from .tensor import flatten_batch, l2_normalize_rows, load_tensor
from .train import TrainConfig, gradcheck_all, gradcheck_csv, gradcheck_passed, run_toy_training

EXIT_OK, EXIT_CHECK_FAILED, EXIT_USAGE, EXIT_DEGENERATE = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _order(alpha: float) -> EntropyOrder:
    try:
        return EntropyOrder(alpha)
    except ContractError as exc:
        raise UsageError(str(exc)) from exc


def _load_gram(path: str, as_gram: bool):
    x = load_tensor(path)
    if as_gram:
        if x.ndim != 2 or x.shape[0] != x.shape[1]:
            raise UsageError(f"{path}: --gram input must be square, got shape {x.shape}")
        return trace_normalize(0.5 * (x + x.T))
    if x.ndim < 2:
        x = x.reshape(-1, 1)
    return normalize_def1(linear_gram(flatten_batch(x)))


def cmd_entropy(args) -> int:
    order = _order(args.alpha)
    method = args.method or ("frob" if order.is_two else "eig")
    if method == "frob" and not order.is_two:
        raise UsageError("frob requires alpha=2")
    a = _load_gram(args.input, args.gram)
    bits = entropy_frob(a) if method == "frob" else entropy_eig(a, order)
    print(json.dumps({"bits": bits}))
    return EXIT_OK


def cmd_mi(args) -> int:
    order = _order(args.alpha)
    a = _load_gram(args.a, args.gram)
    b = _load_gram(args.b, args.gram)
    if a.n != b.n:
        raise UsageError(f"sample counts differ: {a.n} vs {b.n}")
    print(json.dumps({"bits": mutual_information(a, b, order)}))
    return EXIT_OK


def cmd_infoloss(args) -> int:
    try:
        weights = LossWeights(args.lambda1, args.lambda2)
    except ContractError as exc:
        raise UsageError(str(exc)) from exc
    z_i, z_m = load_tensor(args.zi), load_tensor(args.zm)
    r_t = l2_normalize_rows(flatten_batch(load_tensor(args.rt)))
    r_s = l2_normalize_rows(flatten_batch(load_tensor(args.rs)))
    if len({z_i.shape[0], z_m.shape[0], r_t.shape[0], r_s.shape[0]}) != 1:
        raise UsageError("all inputs must share the leading batch dimension")
    if r_t.shape[0] < 2:
        raise DegenerateInputError("information losses need B >= 2")
    l_r = loss_r(z_i, z_m, r_t).item()
    l_d = loss_d(r_t, r_s).item()
    print(breakdown(l_r, l_d, 0.0, weights).to_json())
    return EXIT_OK


def random_trace1_psd(n: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    """Trace-normalised linear Gram of ``n`` random unit rows in ``rank`` (default n) dimensions."""
    x = rng.standard_normal((n, rank or n))
    return feature_gram(x).entries


def bench(n: int, trials: int, alpha: float, seed: int = 0) -> list[dict]:
    order = EntropyOrder(alpha)
    rng = make_rng(seed, 0)
    mats = [random_trace1_psd(n, rng) for _ in range(trials)]
    rows = []
    for path, fn in (("frob", entropy_frob), ("eig", lambda m: entropy_eig(m, order))):
        times, vals = [], []
        for m in mats:
            t0 = time.perf_counter()
            vals.append(fn(m))
            times.append((time.perf_counter() - t0) * 1e3)
        rows.append({"path": path, "alpha": 2.0 if path == "frob" else order.alpha,
                     "mean_ms": float(np.mean(times)), "std_ms": float(np.std(times)),
                     "bits_first": vals[0]})
    frob_mean = rows[0]["mean_ms"]
    for r in rows:
        r["speedup_vs_frob"] = r["mean_ms"] / frob_mean if frob_mean > 0 else float("inf")
    return rows


def cmd_bench(args) -> int:
    if args.n < 2:
        raise UsageError("--n must be >= 2")
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    _order(args.alpha)
    rows = bench(args.n, args.trials, args.alpha, args.seed)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    sys.stdout.write(buf.getvalue())
    return EXIT_OK


def cmd_train(args) -> int:
    try:
        config = TrainConfig.from_json(args.config)
    except (ValueError, TypeError, OSError) as exc:
        raise UsageError(f"invalid config: {exc}") from exc
    report = run_toy_training(config)
    report.write_csv(args.out)
    print(json.dumps(report.summary()))
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    rows = gradcheck_all(args.seed, corrupt=args.corrupt_gradient)
    sys.stdout.write(gradcheck_csv(rows))
    return EXIT_OK if gradcheck_passed(rows) else EXIT_CHECK_FAILED


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="renyikd", description="Matrix-based Renyi entropy and distillation losses.")
    sub = p.add_subparsers(dest="command", required=True)

    e = sub.add_parser("entropy", help="entropy (bits) of a feature or Gram matrix")
    e.add_argument("--input", required=True)
    e.add_argument("--alpha", type=float, required=True)
    e.add_argument("--method", choices=("eig", "frob"))
    e.add_argument("--gram", action="store_true", help="input is an n x n Gram matrix, not features")
    e.set_defaults(func=cmd_entropy)

    m = sub.add_parser("mi", help="mutual information (bits) between two inputs")
    m.add_argument("--a", required=True)
    m.add_argument("--b", required=True)
    m.add_argument("--alpha", type=float, required=True)
    m.add_argument("--gram", action="store_true")
    m.set_defaults(func=cmd_mi)

    i = sub.add_parser("infoloss", help="evaluate L_r, L_d and their weighted sum")
    for flag in ("--zi", "--zm", "--rt", "--rs"):
        i.add_argument(flag, required=True)
    i.add_argument("--lambda1", type=float, default=DEFAULT_LAMBDA1)
    i.add_argument("--lambda2", type=float, default=DEFAULT_LAMBDA2)
    i.set_defaults(func=cmd_infoloss)

    b = sub.add_parser("bench", help="time the Frobenius path against the eigenvalue path")
    b.add_argument("--n", type=int, default=512)
    b.add_argument("--trials", type=int, default=20)
    b.add_argument("--alpha", type=float, default=2.0, help="order used by the eigenvalue path")
    b.add_argument("--seed", type=int, default=0)
    b.set_defaults(func=cmd_bench)

    t = sub.add_parser("train", help="run the toy teacher/student loop")
    t.add_argument("--config", required=True)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    g = sub.add_parser("gradcheck", help="finite-difference check of every analytic gradient")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--corrupt-gradient", action="store_true", help=argparse.SUPPRESS)
    g.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ContractError, ShapeError, FormatError, OSError) as exc:
        print(f"renyikd {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DegenerateInputError as exc:
        print(f"renyikd {args.command}: degenerate input: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except RenyiKDError as exc:
        print(f"renyikd {args.command}: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE


if __name__ == "__main__":
    sys.exit(main())

"""Command-line front end: featurize corpora, build memory snapshots, run
single-shot operations, and drive full experiments."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .experiments import cross_validate, load_config, write_csv
from .featurizer import (load_features, load_idx, featurize_values,
                         save_features, write_pgm)
from .memory import Hamr4D, MemParams, PairCue, QuantizedFn
from .retrieval import (Direction, SearchConfig, retrieve_rs, retrieve_ss,
                        retrieve_st)

_RETRIEVERS = {"rs": retrieve_rs, "st": retrieve_st, "ss": retrieve_ss}


def _params(args) -> MemParams:
    return MemParams(iota=args.iota, kappa=args.kappa, xi=args.xi)


def _add_params(sub) -> None:
    sub.add_argument("--iota", type=float, default=0.0,
                     help="plane-mean threshold factor (default 0)")
    sub.add_argument("--kappa", type=float, default=0.0,
                     help="mass threshold factor (default 0)")
    sub.add_argument("--xi", type=int, default=0,
                     help="tolerated violations (default 0)")


def _load_pair_features(a_path, b_path):
    a_values, a_labels, a_levels = load_features(a_path)
    b_values, b_labels, b_levels = load_features(b_path)
    if a_values.shape[0] != b_values.shape[0]:
        raise ValueError(
            f"{a_values.shape[0]} records in {a_path} but "
            f"{b_values.shape[0]} in {b_path}")
    return (a_values, a_labels, a_levels), (b_values, b_labels, b_levels)


def _cmd_featurize(args) -> int:
    transpose = {"yes": True, "no": False}.get(args.transpose)
    if transpose is None:
        transpose = "emnist" in Path(args.images).name.lower()
    labeled = load_idx(args.images, args.labels, transpose=transpose)
    values = featurize_values(labeled.images)
    save_features(args.out, values, labeled.labels)
    print(f"featurized {len(labeled)} images -> {args.out}", file=sys.stderr)
    return 0


def _cmd_fill(args) -> int:
    (a_values, _, a_levels), (b_values, _, b_levels) = \
        _load_pair_features(args.a, args.b)
    count = a_values.shape[0]
    if args.limit > 0:
        count = min(count, args.limit)
    mem = Hamr4D(a_values.shape[1], b_values.shape[1], a_levels, b_levels,
                 cap=args.cap)
    for i in range(count):
        mem.register(PairCue(QuantizedFn(a_values[i], a_levels),
                             QuantizedFn(b_values[i], b_levels)))
    mem.save(args.out)
    print(f"registered {count} pairs -> {args.out}", file=sys.stderr)
    return 0


def _cmd_recognize(args) -> int:
    mem = Hamr4D.load(args.memory)
    (a_values, _, a_levels), (b_values, _, b_levels) = \
        _load_pair_features(args.a, args.b)
    params = _params(args)
    for i in range(a_values.shape[0]):
        cue = PairCue(QuantizedFn(a_values[i], a_levels),
                      QuantizedFn(b_values[i], b_levels))
        res = mem.recognize(cue, params)
        print(f"{i}\t{int(res.accepted)}\t{res.violations}\t{res.rho:.9g}")
    return 0


def _cmd_retrieve(args) -> int:
    mem = Hamr4D.load(args.memory)
    values, labels, n_levels = load_features(args.cue)
    if not 0 <= args.index < values.shape[0]:
        raise ValueError(
            f"--index {args.index} outside the {values.shape[0]} records "
            f"of {args.cue}")
    cue = QuantizedFn(values[args.index], n_levels)
    direction = Direction.parse(args.dir)
    cfg = SearchConfig(n_samples=args.samples, descent_budget=args.budget,
                       rng_seed=args.seed,
                       uniform_fallback=args.uniform_fallback)
    outcome = _RETRIEVERS[args.method](mem, cue, direction, cfg,
                                       _params(args))
    if outcome.object is None:
        print(f"eham: retrieval failed: {outcome.failure}", file=sys.stderr)
        return 1
    print(f"distance {outcome.distance:.9g} after {outcome.evaluations} "
          f"evaluations", file=sys.stderr)
    if args.out:
        save_features(args.out, outcome.object.values[None, :],
                      np.asarray([labels[args.index]]),
                      outcome.object.n_levels)
    else:
        print(" ".join(str(int(v)) for v in outcome.object.values))
    return 0


def _cmd_entropy(args) -> int:
    mem = Hamr4D.load(args.memory)
    print(f"{mem.entropy():.12g}")
    return 0


def _cmd_experiment(args) -> int:
    config = load_config(args.config)
    rows, summary = cross_validate(config, jobs=args.jobs)
    write_csv(list(rows) + list(summary), args.out)
    print(f"wrote {len(rows) + len(summary)} rows -> {args.out}",
          file=sys.stderr)
    return 0


def _cmd_dump(args) -> int:
    values, _, n_levels = load_features(args.features)
    if not 0 <= args.index < values.shape[0]:
        raise ValueError(
            f"--index {args.index} outside the {values.shape[0]} records "
            f"of {args.features}")
    write_pgm(args.out, values[args.index], n_levels)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eham",
        description="Entropic hetero-associative memory over quantized "
                    "image functions")
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("featurize",
                       help="encode an IDX image/label pair as a feature file")
    s.add_argument("--images", required=True, help="IDX images (.gz accepted)")
    s.add_argument("--labels", required=True, help="IDX labels (.gz accepted)")
    s.add_argument("--transpose", choices=("auto", "yes", "no"),
                   default="auto",
                   help="transpose images; auto = yes for filenames "
                        "containing 'emnist'")
    s.add_argument("--out", required=True, help="output .ehfn path")
    s.set_defaults(func=_cmd_featurize)

    s = sub.add_parser("fill",
                       help="register records of two feature files pairwise "
                            "into a memory snapshot")
    s.add_argument("--a", required=True, help="source-side features")
    s.add_argument("--b", required=True, help="target-side features")
    s.add_argument("--cap", type=int, default=65535)
    s.add_argument("--limit", type=int, default=0,
                   help="register only the first N pairs (0 = all)")
    s.add_argument("--out", required=True, help="output .eham snapshot")
    s.set_defaults(func=_cmd_fill)

    s = sub.add_parser("recognize",
                       help="test feature pairs against a memory; prints "
                            "index, accepted, violations, rho per line")
    s.add_argument("--memory", required=True)
    s.add_argument("--a", required=True)
    s.add_argument("--b", required=True)
    _add_params(s)
    s.set_defaults(func=_cmd_recognize)

    s = sub.add_parser("retrieve",
                       help="retrieve the partner of one cue record")
    s.add_argument("--memory", required=True)
    s.add_argument("--cue", required=True, help="feature file holding the cue")
    s.add_argument("--index", type=int, default=0,
                   help="cue record index (default 0)")
    s.add_argument("--method", choices=tuple(_RETRIEVERS), default="ss")
    s.add_argument("--dir", choices=("a2b", "b2a"), default="a2b")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--samples", type=int, default=128)
    s.add_argument("--budget", type=int, default=800)
    s.add_argument("--uniform-fallback", action="store_true",
                   help="sample empty plane columns uniformly instead of "
                        "failing")
    _add_params(s)
    s.add_argument("--out", default="",
                   help="write the retrieved function as a one-record "
                        "feature file instead of printing values")
    s.set_defaults(func=_cmd_retrieve)

    s = sub.add_parser("entropy", help="print the memory's mean plane entropy")
    s.add_argument("--memory", required=True)
    s.set_defaults(func=_cmd_entropy)

    s = sub.add_parser("experiment",
                       help="run a config-driven experiment, write metrics CSV")
    s.add_argument("--config", required=True, help="key=value config file")
    s.add_argument("--out", required=True, help="output CSV path")
    s.add_argument("--jobs", type=int, default=1,
                   help="folds to run in parallel")
    s.set_defaults(func=_cmd_experiment)

    s = sub.add_parser("dump",
                       help="render a feature record as an 8x8 PGM image")
    s.add_argument("--features", required=True)
    s.add_argument("--index", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_dump)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"eham: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

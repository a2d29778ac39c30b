"""Command-line entry point: ``dctc <command> [flags]``.

Every command accepts ``--config FILE`` (a JSON object of flag values, or a
manifest written by an earlier run) and explicit flags override it. A
``manifest.json`` describing the resolved configuration is written next
to each command's outputs.

Exit codes: 0 success, 1 invalid input or configuration, 2 runtime failure
(including training divergence), 3 a verification check failed.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from importlib import metadata
from pathlib import Path

from .alignment import accuracy, collapse, estimate_map_alignment, estimate_self_alignment, format_dump_line
from .ctc import lattice_for, num_threads
from .losses import DEFAULT_LAMBDA
from .toy.checkpoint import load_checkpoint, save_checkpoint, write_atomic
from .toy.model import ToyModel
from .toy.synth import SynthConfig, generate_dataset, load_dataset, save_dataset
from .toy.train import (TrainConfig, TrainingDiverged, init_model, predict, run_frames, train,
                        write_metrics_csv)
from .types import DomainError, softmax_columns

log = logging.getLogger("dctc")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_CHECK = 0, 1, 2, 3
# argparse keys that are never part of a run's configuration
_META = {"command", "config", "func", "verbose"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0.0.0"


def _positive_int(s: str) -> int:
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _nonneg_int(s: str) -> int:
    v = int(s)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {v}")
    return v


def _pair(s: str) -> list:
    try:
        lo, hi = (int(x) for x in s.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'lo,hi', got {s!r}") from None
    return [lo, hi]


def _threads(args) -> int:
    return 1 if args.deterministic else num_threads()


def write_manifest(out_dir: Path, args, inputs: dict, outputs: dict, started: float) -> None:
    config = {k: v for k, v in vars(args).items() if k not in _META}
    doc = {
        "command": args.command,
        "config": config,
        "inputs": inputs,
        "outputs": outputs,
        "seed": args.seed,
        "version": _version(),
        "duration_s": round(time.perf_counter() - started, 3),
    }
    write_atomic(out_dir / "manifest.json", json.dumps(doc, indent=1, sort_keys=True) + "\n")


def _out_dir(args) -> Path:
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {out}: {exc}") from None
    if not os.access(out, os.W_OK):
        raise UsageError(f"output directory {out} is not writable")
    return out


def _split_path(data: str, split: str) -> Path:
    p = Path(data)
    if p.is_dir():
        p = p / f"{split}.tsv"
    if not p.is_file():
        raise UsageError(f"dataset not found: {p}")
    return p


# ---------------------------------------------------------------- commands

def cmd_gen_data(args) -> int:
    started = time.perf_counter()
    cfg = SynthConfig(vocab_size=args.vocab_size, feature_dim=args.feature_dim,
                      frames_per_char=tuple(args.frames_per_char), gap_frames=tuple(args.gap_frames),
                      noise_sigma=args.noise_sigma, label_len=tuple(args.label_len),
                      n_train=args.n_train, n_test=args.n_test, seed=args.seed)
    out = _out_dir(args)
    train_ds, test_ds = generate_dataset(cfg)
    train_ds.vocab.save(out / "vocab.txt")
    save_dataset(train_ds, out / "train.tsv")
    save_dataset(test_ds, out / "test.tsv")
    outputs = {"vocab": "vocab.txt", "train": "train.tsv", "test": "test.tsv"}
    write_manifest(out, args, {}, outputs, started)
    print(f"wrote {len(train_ds)} train / {len(test_ds)} test samples to {out}")
    return EXIT_OK


def _train_config(args) -> TrainConfig:
    return TrainConfig(loss_kind=args.loss, lam=args.lam, lr=args.lr, momentum=args.momentum,
                       epochs=args.epochs, batch_size=args.batch_size, seed=args.seed,
                       log_every=args.log_every, estimator_kind=args.estimator,
                       aacc_batches=args.aacc_batches, alpha_f=args.alpha_f, gamma_f=args.gamma_f,
                       mode=args.mode, hidden_dim=args.hidden_dim, context=args.context,
                       init_scale=args.init_scale)


def cmd_train(args) -> int:
    started = time.perf_counter()
    train_path, test_path = _split_path(args.data, "train"), _split_path(args.data, "test")
    train_ds = load_dataset(train_path)
    test_ds = load_dataset(test_path, train_ds.vocab)
    out = _out_dir(args)
    ckpt, metrics = out / "checkpoint.json", out / "metrics.csv"
    if args.resume:
        state = load_checkpoint(args.resume)
        model, cfg = None, state.cfg
    else:
        state = None
        cfg = _train_config(args)
        model = init_model(cfg, train_ds.feature_dim, train_ds.vocab.num_classes)
    try:
        state = train(model, train_ds, test_ds, cfg, state=state, stop_after=args.stop_after,
                      threads=_threads(args))
    except TrainingDiverged as exc:
        diag = out / "diverged.json"
        save_checkpoint(exc.state, diag, str(metrics))
        write_metrics_csv(exc.state.history, metrics)
        print(f"error: training diverged: {exc}; diagnostic checkpoint at {diag}", file=sys.stderr)
        return EXIT_RUNTIME
    write_metrics_csv(state.history, metrics)
    save_checkpoint(state, ckpt, "metrics.csv")
    inputs = {"train": str(train_path), "test": str(test_path)}
    if args.resume:
        inputs["resume"] = str(args.resume)
    write_manifest(out, args, inputs, {"checkpoint": "checkpoint.json", "metrics": "metrics.csv"}, started)
    last = state.history[-1] if state.history else None
    if last is not None:
        print(f"iter {last['iter']}\tloss {last['loss_total']:.4f}\ttest_acc {last['test_acc']:.4f}")
    return EXIT_OK


def _load_model(args, feature_dim: int, num_classes: int) -> ToyModel:
    if args.checkpoint:
        if not Path(args.checkpoint).is_file():
            raise UsageError(f"checkpoint not found: {args.checkpoint}")
        model = load_checkpoint(args.checkpoint).model
        if model.num_classes != num_classes or model.feature_dim != feature_dim:
            raise UsageError("checkpoint does not match the dataset's vocabulary or feature size")
        return model
    cfg = TrainConfig(seed=args.seed, mode=args.mode, hidden_dim=args.hidden_dim, context=args.context,
                      init_scale=args.init_scale)
    return init_model(cfg, feature_dim, num_classes)


def cmd_eval(args) -> int:
    started = time.perf_counter()
    path = _split_path(args.data, args.split)
    ds = load_dataset(path)
    model = _load_model(args, ds.feature_dim, ds.vocab.num_classes)
    out = _out_dir(args)
    preds = [ds.vocab.decode(p) for p in predict(model, ds.samples)]
    truths = [s.label.text(ds.vocab) for s in ds.samples]
    acc = accuracy(preds, truths, fold_case=args.fold_case)
    write_atomic(out / "eval.tsv", f"split\t{args.split}\nn\t{len(ds)}\nfold_case\t{int(args.fold_case)}\n"
                 f"acc\t{acc!r}\n")
    write_manifest(out, args, {"data": str(path), "checkpoint": args.checkpoint}, {"report": "eval.tsv"},
                   started)
    print(f"acc\t{acc:.4f}")
    return EXIT_OK


def cmd_align(args) -> int:
    started = time.perf_counter()
    path = _split_path(args.data, args.split)
    ds = load_dataset(path)
    model = _load_model(args, ds.feature_dim, ds.vocab.num_classes)
    out = _out_dir(args)
    samples = ds.samples[:args.limit] if args.limit else ds.samples
    map_lines, self_lines = [], []
    hit_map = hit_self = n = skipped = 0
    for i, (s, U) in enumerate(zip(samples, run_frames(model, samples) if samples else [])):
        P = softmax_columns(U)
        lat = lattice_for(P, s.label)
        if not lat.feasible:
            skipped += 1
            continue
        z_map = estimate_map_alignment(P, lat)
        z_self = estimate_self_alignment(P)
        map_lines.append(format_dump_line(i, z_map, s.label, ds.vocab))
        self_lines.append(format_dump_line(i, z_self, s.label, ds.vocab))
        hit_map += collapse(z_map.ids) == s.label.ids
        hit_self += collapse(z_self.ids) == s.label.ids
        n += 1
    aacc_map = hit_map / n if n else 0.0
    aacc_self = hit_self / n if n else 0.0
    write_atomic(out / "align_map.tsv", "".join(line + "\n" for line in map_lines))
    write_atomic(out / "align_self.tsv", "".join(line + "\n" for line in self_lines))
    summary = f"estimator\taacc\tn\tskipped\nmap\t{aacc_map!r}\t{n}\t{skipped}\nself\t{aacc_self!r}\t{n}\t{skipped}\n"
    write_atomic(out / "aacc.tsv", summary)
    write_manifest(out, args, {"data": str(path), "checkpoint": args.checkpoint},
                   {"map": "align_map.tsv", "self": "align_self.tsv", "summary": "aacc.tsv"}, started)
    print(f"aacc_map\t{aacc_map:.4f}\naacc_self\t{aacc_self:.4f}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .checks import run_gradcheck

    started = time.perf_counter()
    out = _out_dir(args)
    report = run_gradcheck(args.instances, args.seed, args.step, args.tol_loss, args.tol_fd, fd=not args.no_fd)
    text = "\n".join(report.lines()) + "\n"
    write_atomic(out / "gradcheck.tsv", text)
    write_manifest(out, args, {}, {"report": "gradcheck.tsv"}, started)
    sys.stdout.write(text)
    return EXIT_OK if report.ok else EXIT_CHECK


def cmd_bench(args) -> int:
    from .bench import run_bench

    started = time.perf_counter()
    out = _out_dir(args)
    rep = run_bench(args.K, args.T, args.L, args.batch, args.repeats, args.seed, args.lam)
    write_atomic(out / "bench.json", json.dumps(rep, indent=1, sort_keys=True) + "\n")
    write_manifest(out, args, {}, {"report": "bench.json"}, started)
    print(f"ctc_us_per_sample\t{rep['ctc_us_per_sample']:.1f}\ndctc_us_per_sample\t{rep['dctc_us_per_sample']:.1f}"
          f"\ndctc_over_ctc\t{rep['dctc_over_ctc']:.3f}")
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _add_model_flags(p, d: TrainConfig) -> None:
    p.add_argument("--mode", choices=("linear", "hidden"), default=d.mode)
    p.add_argument("--hidden-dim", type=_positive_int, default=d.hidden_dim)
    p.add_argument("--context", type=_nonneg_int, default=d.context)
    p.add_argument("--init-scale", type=float, default=d.init_scale)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dctc", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def command(name, func, help_, out_default):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=func)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=out_default)
        p.add_argument("--config", help="JSON file of flag values (or a previous manifest.json)")
        p.add_argument("--deterministic", action=argparse.BooleanOptionalAction, default=True,
                       help="serial evaluation (default); --no-deterministic honours DCTC_THREADS")
        return p

    s = SynthConfig()
    p = command("gen-data", cmd_gen_data, "generate the synthetic train/test splits", "data")
    p.add_argument("--vocab-size", type=_positive_int, default=s.vocab_size)
    p.add_argument("--feature-dim", type=_positive_int, default=s.feature_dim)
    p.add_argument("--frames-per-char", type=_pair, default=list(s.frames_per_char), metavar="LO,HI")
    p.add_argument("--gap-frames", type=_pair, default=list(s.gap_frames), metavar="LO,HI")
    p.add_argument("--label-len", type=_pair, default=list(s.label_len), metavar="LO,HI")
    p.add_argument("--noise-sigma", type=float, default=s.noise_sigma)
    p.add_argument("--n-train", type=_nonneg_int, default=s.n_train)
    p.add_argument("--n-test", type=_nonneg_int, default=s.n_test)

    t = TrainConfig()
    p = command("train", cmd_train, "train the toy model", "run")
    p.add_argument("--data", required=True, help="dataset directory with train.tsv and test.tsv")
    p.add_argument("--loss", choices=("ctc", "dctc", "focal-ctc", "focal_ctc"), default=t.loss_kind)
    p.add_argument("--lambda", dest="lam", type=float, default=DEFAULT_LAMBDA)
    p.add_argument("--lr", type=float, default=t.lr)
    p.add_argument("--momentum", type=float, default=t.momentum)
    p.add_argument("--epochs", type=_positive_int, default=t.epochs)
    p.add_argument("--batch-size", type=_positive_int, default=t.batch_size)
    p.add_argument("--log-every", type=_positive_int, default=t.log_every)
    p.add_argument("--estimator", choices=("map", "self"), default=t.estimator_kind)
    p.add_argument("--aacc-batches", type=_positive_int, default=t.aacc_batches)
    p.add_argument("--alpha-f", type=float, default=t.alpha_f)
    p.add_argument("--gamma-f", type=float, default=t.gamma_f)
    _add_model_flags(p, t)
    p.add_argument("--resume", help="continue from a checkpoint (its stored config is used)")
    p.add_argument("--stop-after", type=_nonneg_int, help="stop once this many updates are done")

    for name, func, help_, out in (("eval", cmd_eval, "sequence accuracy of a model on a split", "eval"),
                                   ("align", cmd_align, "dump MAP and self alignments with AACC", "align")):
        p = command(name, func, help_, out)
        p.add_argument("--data", required=True, help="dataset directory or .tsv file")
        p.add_argument("--split", choices=("train", "test"), default="test")
        src = p.add_mutually_exclusive_group(required=True)
        src.add_argument("--checkpoint")
        src.add_argument("--random-init", action="store_true", help="use a freshly initialised model")
        _add_model_flags(p, t)
        if name == "eval":
            p.add_argument("--fold-case", action="store_true", help="compare case-insensitively")
        else:
            p.add_argument("--limit", type=_nonneg_int, default=0, help="only the first N samples (0 = all)")

    p = command("gradcheck", cmd_gradcheck, "oracle and finite-difference verification", "gradcheck")
    p.add_argument("--instances", type=_positive_int, default=200)
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--tol-loss", type=float, default=1e-9)
    p.add_argument("--tol-fd", type=float, default=1e-4)
    p.add_argument("--no-fd", action="store_true", help="skip the finite-difference suite")

    p = command("bench", cmd_bench, "time CTC against DCTC loss evaluation", "bench")
    p.add_argument("-K", type=_positive_int, default=100)
    p.add_argument("-T", type=_positive_int, default=64)
    p.add_argument("-L", type=_positive_int, default=12)
    p.add_argument("--batch", type=_positive_int, default=32)
    p.add_argument("--repeats", type=_positive_int, default=5)
    p.add_argument("--lambda", dest="lam", type=float, default=DEFAULT_LAMBDA)
    return parser


def _apply_config(parser, argv) -> argparse.Namespace:
    """Load ``--config`` as subcommand defaults, then parse so explicit flags win."""
    argv = list(sys.argv[1:] if argv is None else argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    pre.add_argument("command", nargs="?")
    known, _ = pre.parse_known_args(argv)
    subs = parser._subparsers._group_actions[0].choices
    if not known.config or known.command not in subs:
        return parser.parse_args(argv)
    try:
        doc = json.loads(Path(known.config).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {known.config}: {exc}") from None
    if isinstance(doc, dict) and "config" in doc and "command" in doc:
        if doc["command"] != known.command:
            raise UsageError(f"manifest is for '{doc['command']}', not '{known.command}'")
        doc = doc["config"]
    if not isinstance(doc, dict):
        raise UsageError("config must be a JSON object")
    sub = subs[known.command]
    unknown = set(doc) - {a.dest for a in sub._actions} - _META
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    doc = {k: v for k, v in doc.items() if k not in _META}
    for action in sub._actions:
        # a required flag is satisfied by the config file
        if action.dest in doc:
            action.required = False
    sub.set_defaults(**doc)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except SystemExit as exc:
        # argparse exits for --help and usage errors; surface the code instead
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except (UsageError, DomainError, FileNotFoundError) as exc:
        print(f"dctc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, RuntimeError, FloatingPointError) as exc:
        print(f"dctc: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())

"""Command-line surface for the full pipeline.

Subcommands: synth, train, fuse, infer, eval, gradcheck, coverage. All
tabular output is CSV; every command is deterministic given its flags (all
randomness flows from explicit seeds) and prints a reproducibility header
comment line. Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys

import numpy as np

from . import bagging, data, ensembles, evaluation
from .network import init_network
from .rng import Rng
from .training import LossKind, grad_check, random_check_frame


def _cfg_hash(args: argparse.Namespace) -> str:
    payload = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    blob = json.dumps(payload, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def _echo_header(args: argparse.Namespace) -> None:
    seed = getattr(args, "seed", "-")
    print(f"# seed={seed} cfg-hash={_cfg_hash(args)}")


def _write_rows(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args) -> int:
    _echo_header(args)
    seq = data.synth_har(args.d, args.k, args.t, args.regime, args.snr, args.seed)
    data.save_csv(seq, args.out)
    sidecar = {
        "generator": "synth_har",
        "d": args.d,
        "k": args.k,
        "t": args.t,
        "regime": args.regime,
        "snr": args.snr,
        "seed": args.seed,
    }
    with open(args.out + ".meta.json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"# wrote {args.out} ({seq.num_samples} samples, {seq.num_channels} channels)")
    return 0


def _load_splits(args):
    schema = data.CsvSchema(num_classes=args.k, label_col=args.label_col)
    seq = data.load_csv(args.data, schema)
    fractions = tuple(float(f) for f in args.split.split(","))
    ranges = data.fraction_ranges(seq.num_samples, fractions)
    train, val, test = data.holdout_split(seq, *ranges)
    stats = data.fit_normalizer(train)
    return (
        data.apply_normalizer(stats, train),
        data.apply_normalizer(stats, val),
        data.apply_normalizer(stats, test),
        stats,
    )


def cmd_train(args) -> int:
    _echo_header(args)
    train, val, _, stats = _load_splits(args)
    cfg = bagging.BaggingConfig(
        b_low=args.b_low,
        b_high=args.b_high,
        l_low=args.l_low,
        l_high=args.l_high,
        max_epoch=args.max_epoch,
        loss=LossKind(args.loss.upper()),
        dropout_p=args.dropout,
        seed=args.seed,
    )
    os.makedirs(args.outdir, exist_ok=True)
    data.save_norm_stats(stats, os.path.join(args.outdir, "norm_stats.csv"),
                         train.channel_names)
    print("epoch,train_loss,val_f1")

    def on_epoch(epoch, train_loss, val_f1):
        print(f"{epoch},{train_loss!r},{val_f1!r}")
        sys.stdout.flush()

    learners = bagging.run_bagging(
        train, val, cfg,
        hidden_dim=args.hidden,
        num_layers=args.layers,
        learning_rate=args.lr,
        on_epoch=on_epoch,
    )
    manifest = bagging.save_learners(learners, args.outdir)
    print(f"# wrote {manifest}")
    return 0


def cmd_fuse(args) -> int:
    _echo_header(args)
    if args.mixed:
        if not (args.ce_manifest and args.f1_manifest and args.m_each):
            raise ValueError("--mixed requires --ce-manifest, --f1-manifest and --m-each")
        ens = ensembles.mixed_ensemble(
            bagging.load_learners(args.ce_manifest),
            bagging.load_learners(args.f1_manifest),
            args.m_each,
        )
    else:
        if not (args.manifest and args.m):
            raise ValueError("either --mixed ... or --manifest with --m is required")
        ens = ensembles.select_top_m(bagging.load_learners(args.manifest), args.m)
    ensembles.save_ensemble(ens, args.out)
    print(f"# wrote {args.out} ({ens.size} members: {ens.provenance})")
    return 0


def cmd_infer(args) -> int:
    _echo_header(args)
    ens = ensembles.load_ensemble(args.ensemble)
    k = ens.members[0].net.num_classes
    schema = data.CsvSchema(num_classes=k, label_col=args.label_col)
    seq = data.load_csv(args.data, schema)
    if args.norm:
        seq = data.apply_normalizer(data.load_norm_stats(args.norm), seq)
    probs, preds = ensembles.ensemble_infer(ens, seq.X.T)
    header = ["t", "pred", "label"] + [f"p_{i}" for i in range(k)]
    rows = [
        [t, int(preds[t]), int(seq.z[t])] + [repr(float(v)) for v in probs[t]]
        for t in range(seq.num_samples)
    ]
    _write_rows(args.out, header, rows)
    print(f"# wrote {args.out} ({seq.num_samples} predictions)")
    return 0


def cmd_eval(args) -> int:
    _echo_header(args)
    with open(args.pred, "r", encoding="utf-8", newline="") as fh:
        rows = [r for r in csv.DictReader(fh) if r.get("t")]
    if not rows:
        raise ValueError(f"{args.pred}: no prediction rows")
    preds = np.array([int(r["pred"]) for r in rows])
    labels = np.array([int(r["label"]) for r in rows])
    k = args.k if args.k else int(max(preds.max(), labels.max())) + 1
    cm = evaluation.confusion(preds, labels, k)
    class_f1 = evaluation.per_class_f1(cm)
    os.makedirs(args.outdir, exist_ok=True)
    _write_rows(
        os.path.join(args.outdir, "class_f1.csv"),
        ["class", "f1"],
        [[i, repr(float(v))] for i, v in enumerate(class_f1)],
    )
    _write_rows(
        os.path.join(args.outdir, "confusion.csv"),
        ["true", "pred", "count"],
        [[i, j, int(cm[i, j])] for i in range(k) for j in range(k)],
    )
    print(f"mean_f1,{evaluation.mean_f1(cm)!r}")
    return 0


def cmd_gradcheck(args) -> int:
    _echo_header(args)
    print("seed,loss,tensor,max_rel_error,ok")
    worst = 0.0
    failed = False
    for trial in range(args.seeds):
        rng = Rng(args.seed + trial)
        net = init_network(3, 4, 3, num_layers=2, rng=rng)
        frame = random_check_frame(net, rng)
        for loss in (LossKind.CE, LossKind.F1):
            report = grad_check(net, frame, loss, tolerance=args.tolerance)
            for tensor, err in report.max_rel_error.items():
                ok = err < args.tolerance
                failed = failed or not ok
                worst = max(worst, err)
                print(f"{args.seed + trial},{loss.value},{tensor},{err:.3e},{int(ok)}")
    print(f"# worst max_rel_error={worst:.3e} tolerance={args.tolerance:g}")
    return 1 if failed else 0


def cmd_coverage(args) -> int:
    _echo_header(args)
    cfg = bagging.BaggingConfig(
        b_low=args.b_low, b_high=args.b_high, l_low=args.l_low, l_high=args.l_high,
        max_epoch=1, seed=args.seed,
    )
    rng = Rng(args.seed)
    unused = [
        bagging.epoch_coverage(bagging.make_schedule(args.t, cfg, rng, epoch), args.t)
        for epoch in range(args.epochs)
    ]
    arr = np.array(unused)
    print("epochs,t,mean_unused,min_unused,max_unused")
    print(
        f"{args.epochs},{args.t},"
        f"{float(arr.mean())!r},{float(arr.min())!r},{float(arr.max())!r}"
    )
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lstmens",
        description="Epoch-wise bagged LSTM ensembles for sample-wise "
                    "sequence classification",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic activity dataset CSV")
    p.add_argument("--d", type=int, required=True, help="number of channels")
    p.add_argument("--k", type=int, required=True, help="number of classes")
    p.add_argument("--t", type=int, required=True, help="number of samples")
    p.add_argument("--regime", choices=["balanced", "imbalanced"], default="balanced")
    p.add_argument("--snr", type=float, default=4.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="run epoch-wise bagged training")
    p.add_argument("--data", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--label-col", type=int, default=0)
    p.add_argument("--split", default="0.8,0.1,0.1",
                   help="train,val,test fractions over the stream")
    p.add_argument("--hidden", type=int, default=256)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--b-low", type=int, default=128)
    p.add_argument("--b-high", type=int, default=256)
    p.add_argument("--l-low", type=int, default=16)
    p.add_argument("--l-high", type=int, default=32)
    p.add_argument("--max-epoch", type=int, default=100)
    p.add_argument("--loss", choices=["ce", "f1"], default="ce")
    p.add_argument("--dropout", type=float, default=0.5)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--outdir", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("fuse", help="build an ensemble manifest from learners")
    p.add_argument("--manifest", help="learner manifest CSV")
    p.add_argument("--m", type=int, help="ensemble size for top-M selection")
    p.add_argument("--mixed", action="store_true",
                   help="fuse top --m-each learners from two loss runs")
    p.add_argument("--ce-manifest")
    p.add_argument("--f1-manifest")
    p.add_argument("--m-each", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("infer", help="sample-wise ensemble inference over a CSV")
    p.add_argument("--ensemble", required=True, help="ensemble manifest")
    p.add_argument("--data", required=True)
    p.add_argument("--label-col", type=int, default=0)
    p.add_argument("--norm", help="normalizer stats CSV fitted on the training split")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="score an inference CSV")
    p.add_argument("--pred", required=True, help="output of the infer command")
    p.add_argument("--k", type=int, default=0, help="number of classes (0 = infer)")
    p.add_argument("--outdir", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck",
                       help="finite-difference check of the analytic gradients")
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("coverage",
                       help="Monte-Carlo estimate of per-epoch unused data")
    p.add_argument("--t", type=int, default=100000)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--b-low", type=int, default=128)
    p.add_argument("--b-high", type=int, default=256)
    p.add_argument("--l-low", type=int, default=16)
    p.add_argument("--l-high", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_coverage)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except BrokenPipeError:
        return 1
    except (ValueError, OSError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

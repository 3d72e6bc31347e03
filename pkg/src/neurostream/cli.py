"""``neurostream`` command line.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .data import Dataset, Emotion, SynthSpec, default_manifest_path, gen_synthetic, load_csv, save_csv
from .errors import ConfigError, NeurostreamError
from .harness import ExperimentConfig, compare_variants, evaluate, predict, train
from .hemisplit import LEFT, RIGHT, partition_check
from .model import ModelParams, layer_table, param_count
from .preprocess import PreprocConfig, preprocess
from .spectral import SpectralConfig, spectral_features, write_features
from .temporal import temporal_scan

log = logging.getLogger("neurostream")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _read_json(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _experiment(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_dict(_read_json(args.config))
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_(seed=args.seed)
    if getattr(args, "variant", None):
        cfg = cfg.with_(variant=args.variant)
    return cfg


def _load(path, manifest=None) -> Dataset:
    return load_csv(path, manifest if manifest else default_manifest_path(path))


def _outdir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


# ------------------------------------------------------------- commands


def cmd_synth(args):
    spec = SynthSpec.from_dict(_read_json(args.spec))
    ds = gen_synthetic(spec, args.seed)
    out = _outdir(args.out)
    csv_path = out / f"{args.name}.csv"
    save_csv(ds, csv_path)
    print(f"wrote {len(ds)} recordings to {csv_path}")


def cmd_preprocess(args):
    cfg = PreprocConfig.from_dict(_read_json(args.config))
    ds = _load(args.inp, args.manifest)
    out = Path(args.out)
    save_csv(ds.map(lambda r: preprocess(r, cfg)), out)
    print(f"wrote {len(ds)} pre-processed recordings to {out}")


def cmd_features(args):
    cfg = SpectralConfig.from_dict(_read_json(args.config))
    ds = _load(args.inp, args.manifest)
    chans = {"all": None, "left": LEFT, "right": RIGHT}[args.channels]
    tensors = [spectral_features(r, cfg, chans) for r in ds]
    write_features(args.out, tensors, [None if r.label is None else int(r.label) for r in ds])
    t = tensors[0]
    print(f"wrote {len(tensors)} feature tensors ({t.frames} frames x {len(t.channels)} channels x {t.n_bins} bins) to {args.out}")


def cmd_train(args):
    cfg = _experiment(args)
    tr = _load(args.train, args.train_manifest)
    va = _load(args.val, args.val_manifest) if args.val else None
    params, report = train(tr, va, cfg)
    out = _outdir(args.out)
    params.save(out / "model.ckpt", {"experiment": cfg.to_dict()})
    report.write_json(out / "report.json")
    report.write_confusion_csv(out / "confusion.csv")
    report.write_loss_csv(out / "loss.csv")
    print(f"best epoch {report.best_epoch}: validation accuracy {report.accuracy:.2f}% -> {out}")


def _load_model(args) -> tuple[ModelParams, ExperimentConfig]:
    params, meta = ModelParams.load(args.model)
    if args.config:
        cfg = _experiment(args)
    else:
        cfg = ExperimentConfig.from_dict(meta.get("experiment", {}))
    return params, cfg


def cmd_eval(args):
    params, cfg = _load_model(args)
    report = evaluate(_load(args.data, args.manifest), params, cfg)
    out = _outdir(args.out)
    report.write_json(out / "eval.json")
    report.write_confusion_csv(out / "confusion.csv")
    print(f"accuracy {report.accuracy:.2f}% on {report.n} recordings")


def cmd_predict(args):
    params, cfg = _load_model(args)
    pred = predict(_load(args.data, args.manifest), params, cfg)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject", "trial", "label"] + [f"p_{e.label}" for e in Emotion])
        for (s, t), lab, p in zip(pred.ids, pred.labels, pred.probabilities):
            w.writerow([s, t, lab.label] + [repr(float(v)) for v in p])
    print(f"wrote {len(pred.labels)} predictions to {args.out}")


def cmd_temporal_scan(args):
    cfg = _experiment(args)
    seeds = [cfg.seed + i for i in range(args.n_seeds)]
    report = temporal_scan(_load(args.train, args.train_manifest), _load(args.val, args.val_manifest), cfg, seeds)
    report.write_csv(args.out)
    for e in report.entries:
        acc = "skipped" if e.val_acc is None else f"train {e.train_acc:6.2f}%  val {e.val_acc:6.2f}%"
        print(f"{e.variant:>4} j{e.j}: {acc}")


def cmd_compare(args):
    cfg = _experiment(args)
    cmp = compare_variants(_load(args.train, args.train_manifest), _load(args.val, args.val_manifest), cfg, args.n_seeds)
    cmp.write_csv(args.out)
    for r in cmp.rows:
        print(f"{r.variant:>4}: {r.mean:6.2f} +/- {r.std:5.2f}")
    print(f"bi - mono: {cmp.difference:+.2f} points")


def cmd_gradcheck(args):
    from .gradsuite import run_suite

    results = run_suite(args.trials, args.seed or 0, args.ops)
    ok = True
    for r in results:
        flag = "ok" if r.passed(args.tol) else "FAIL"
        ok &= r.passed(args.tol)
        print(f"{r.name:>13}: max rel err {r.max_error:.3e} (h={r.step:g}, {r.trials} trials, {r.seconds:.1f}s) {flag}")
    return 0 if ok else 3


def cmd_inspect(args):
    if args.partition:
        for line in partition_check().lines():
            print(line)
    if args.model is not None:
        exp = ExperimentConfig.from_dict(_read_json(args.model)) if args.model else ExperimentConfig()
        fs = args.fs
        n_bins = len(exp.spectral.bin_indices(fs))
        n_ch = len(LEFT) if exp.variant == "bi" else 21
        n_features = n_ch * n_bins
        print(f"variant {exp.variant}: {n_ch} channels x {n_bins} bins = {n_features} features per stream")
        for name, shape, count in layer_table(exp.model, exp.variant, n_features):
            print(f"  {name:<16} {str(shape):<18} {count:>9}")
        print(f"  {'total':<35} {param_count(exp.model, n_features, exp.variant):>9}")
    if not args.partition and args.model is None:
        print(f"neurostream {__version__}")


# --------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="neurostream", description="Bi-hemispheric EEG emotion classification")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="generate labelled synthetic EEG")
    s.add_argument("--spec", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--name", default="synth")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("preprocess", help="re-reference, filter and trim a CSV")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--manifest")
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_preprocess)

    s = sub.add_parser("features", help="STFT magnitude features to a binary container")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--manifest")
    s.add_argument("--config")
    s.add_argument("--channels", choices=("all", "left", "right"), default="all")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_features)

    def experiment_args(s, seeds=False):
        s.add_argument("--config")
        s.add_argument("--seed", type=int)
        s.add_argument("--variant", choices=("mono", "bi"))
        if seeds:
            s.add_argument("--n-seeds", type=int, default=1)

    def train_val(s, val_required=True):
        s.add_argument("--train", required=True)
        s.add_argument("--train-manifest")
        s.add_argument("--val", required=val_required)
        s.add_argument("--val-manifest")

    s = sub.add_parser("train", help="train a model")
    train_val(s, val_required=False)
    experiment_args(s)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_train)

    for name, func, out_help in (("eval", cmd_eval, "output directory"), ("predict", cmd_predict, "predictions CSV")):
        s = sub.add_parser(name, help=f"{name} with a trained checkpoint")
        s.add_argument("--data", required=True)
        s.add_argument("--manifest")
        s.add_argument("--model", required=True)
        experiment_args(s)
        s.add_argument("--out", required=True, help=out_help)
        s.set_defaults(func=func)

    s = sub.add_parser("temporal-scan", help="per-interval train/eval over eight segments")
    train_val(s)
    experiment_args(s, seeds=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_temporal_scan)

    s = sub.add_parser("compare", help="mono vs bi over several seeds")
    train_val(s)
    experiment_args(s)
    s.add_argument("--n-seeds", type=int, default=5)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("gradcheck", help="finite-difference check of every op")
    s.add_argument("--seed", type=int)
    s.add_argument("--trials", type=int, default=20)
    s.add_argument("--tol", type=float, default=1e-4)
    s.add_argument("--ops", nargs="*")
    s.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("inspect", help="print the electrode partition or a model layer table")
    s.add_argument("--partition", action="store_true")
    s.add_argument("--model", nargs="?", const="", default=None, help="experiment config JSON (optional)")
    s.add_argument("--fs", type=float, default=300.0)
    s.set_defaults(func=cmd_inspect)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        rc = args.func(args)
    except NeurostreamError as exc:
        print(f"neurostream: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, KeyError, TypeError) as exc:
        # missing files and malformed JSON configs
        code = 2 if isinstance(exc, OSError) else 1
        print(f"neurostream: {type(exc).__name__}: {exc}", file=sys.stderr)
        return code
    return rc or 0


if __name__ == "__main__":
    sys.exit(main())

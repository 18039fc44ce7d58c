"""Command-line entry point: ``corgan <command> [flags]``.

Every command accepts ``--config FILE`` (``key = value`` lines), ``--seed``
and ``--out``. Flags given on the command line override config values, and
the fully resolved settings are written to ``<out>/<command>.cfg``.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import data as dio
from .errors import ConfigurationError, CorganError
from .evaluation import (CLASSIFIER_KINDS, binary_classification_eval, dimension_wise_prediction,
                         dimension_wise_probability)
from .models import (build, default_descriptor, generate, load_checkpoint, save_checkpoint)
from .privacy import AttackSetup, run_attack, sweep_known_records, sweep_synthetic_volume
from .tensor import sample_noise
from .training import TrainingConfig, pretrain_autoencoder, train_gan

logger = logging.getLogger("corgan")


def _int_list(text: str) -> list[int]:
    return [int(float(t)) for t in text.replace(" ", "").split(",") if t]


def _float_list(text: str) -> list[float]:
    return [float(t) for t in text.replace(" ", "").split(",") if t]


def _str_list(text: str) -> list[str]:
    return [t for t in text.replace(" ", "").split(",") if t]


def _bool(text: str) -> bool:
    low = str(text).lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=None, help="key = value settings file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".", help="output directory")


def _training_flags(p: argparse.ArgumentParser, epochs: int) -> None:
    d = TrainingConfig()
    p.add_argument("--epochs", type=int, default=epochs)
    p.add_argument("--batch-size", type=int, default=d.batch_size)
    p.add_argument("--lr-ae", type=float, default=d.lr_ae)
    p.add_argument("--lr-g", type=float, default=d.lr_g)
    p.add_argument("--lr-d", type=float, default=d.lr_d)
    p.add_argument("--beta1", type=float, default=d.beta1)
    p.add_argument("--beta2", type=float, default=d.beta2)
    p.add_argument("--adam-eps", type=float, default=d.eps)
    p.add_argument("--d-steps", type=int, default=d.d_steps)
    p.add_argument("--drop-prob", type=float, default=d.drop_prob)
    p.add_argument("--checkpoint-every", type=int, default=d.checkpoint_every)
    p.add_argument("--patience", type=int, default=d.patience)
    p.add_argument("--monitor-size", type=int, default=d.monitor_size)


def _arch_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--family", choices=("corgan", "mlp-baseline"), default="corgan")
    p.add_argument("--code-width", type=int, default=128)
    p.add_argument("--noise-width", type=int, default=128)
    p.add_argument("--mbd-kernels", type=int, default=32)
    p.add_argument("--mbd-dim", type=int, default=8)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="corgan", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-corpus", help="write a synthetic corpus")
    _common(p)
    p.add_argument("--kind", choices=("binary", "continuous"), default="binary")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--band", type=int, default=2)
    p.add_argument("--marginals", type=_float_list, default=None, help="comma-separated, one per column")
    p.add_argument("--positive-fraction", type=float, default=0.2)
    p.add_argument("--name", default=None, help="output file name")

    p = sub.add_parser("pretrain-ae", help="pretrain the denoising autoencoder")
    _common(p)
    p.add_argument("--data", required=True)
    _arch_flags(p)
    _training_flags(p, epochs=50)

    p = sub.add_parser("train", help="adversarial training")
    _common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--mode", choices=("discrete", "continuous"), default="discrete")
    p.add_argument("--ae", default=None, help="autoencoder checkpoint (discrete mode)")
    p.add_argument("--header", type=_bool, default=False, help="continuous CSV has a header row")
    _arch_flags(p)
    _training_flags(p, epochs=TrainingConfig().epochs)

    p = sub.add_parser("generate", help="sample synthetic records")
    _common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--name", default=None)

    p = sub.add_parser("eval", help="fidelity protocols")
    _common(p)
    p.add_argument("--mode", choices=("discrete", "continuous"), default="discrete")
    p.add_argument("--train-real", required=True)
    p.add_argument("--test-real", default=None)
    p.add_argument("--syn", required=True)
    p.add_argument("--runs", type=int, default=100)
    p.add_argument("--classifiers", type=_str_list, default=list(CLASSIFIER_KINDS))
    p.add_argument("--header", type=_bool, default=False)

    p = sub.add_parser("privacy-audit", help="membership-inference attack")
    _common(p)
    p.add_argument("--train-real", required=True)
    p.add_argument("--test-real", required=True)
    p.add_argument("--syn", required=True)
    p.add_argument("--known", type=int, default=100, help="known records U in total (U/2 per side)")
    p.add_argument("--sweep-known", type=_int_list, default=None, help="U values for the known-record sweep")
    p.add_argument("--sweep-sizes", type=_int_list, default=None, help="synthetic sizes for the volume sweep")
    p.add_argument("--model", default=None, help="generator checkpoint for the volume sweep")
    p.add_argument("--thresholds", type=int, default=100)
    p.add_argument("--threshold-mean", type=float, default=0.5)
    p.add_argument("--threshold-std", type=float, default=0.01)
    return parser


# ---------------------------------------------------------------------------
# config handling
# ---------------------------------------------------------------------------

def read_config(path) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _apply_config(sub: argparse.ArgumentParser, path) -> None:
    """Install config-file values as defaults of ``sub`` so explicit flags still win."""
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"--config: file not found: {path}")
    values = read_config(path)
    actions = {a.dest: a for a in sub._actions if a.dest not in ("help", "config")}
    unknown = sorted(set(values) - set(actions))
    if unknown:
        raise ConfigurationError(f"--config: unknown keys {unknown}")
    defaults = {}
    for key, text in values.items():
        action = actions[key]
        try:
            defaults[key] = action.type(text) if action.type else text
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise ConfigurationError(f"--config: bad value for {key}: {exc}") from None
        if action.choices and defaults[key] not in action.choices:
            raise ConfigurationError(f"--config: {key} must be one of {list(action.choices)}")
        action.required = False
    sub.set_defaults(**defaults)


def _format_value(v) -> str:
    if isinstance(v, (list, tuple)):
        return ",".join(_format_value(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_resolved(args: argparse.Namespace, out: Path) -> None:
    items = {k: v for k, v in sorted(vars(args).items()) if k not in ("config", "verbose", "func") and v is not None}
    text = "".join(f"{k} = {_format_value(v)}\n" for k, v in items.items())
    (out / f"{args.command}.cfg").write_text(text, encoding="utf-8")


def _need_file(args, flag: str) -> Path:
    value = getattr(args, flag.lstrip("-").replace("-", "_"))
    path = Path(value)
    if not path.is_file():
        raise ConfigurationError(f"{flag}: file not found: {value}")
    return path


def _training_config(args, component: str) -> TrainingConfig:
    return TrainingConfig(
        epochs=args.epochs, batch_size=args.batch_size, lr_ae=args.lr_ae, lr_g=args.lr_g, lr_d=args.lr_d,
        beta1=args.beta1, beta2=args.beta2, eps=args.adam_eps, d_steps=args.d_steps,
        seed=dio.derive_seed(args.seed, component), drop_prob=args.drop_prob,
        checkpoint_every=args.checkpoint_every, patience=args.patience, monitor_size=args.monitor_size)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_synth_corpus(args, out: Path) -> None:
    seed = dio.derive_seed(args.seed, "synth-corpus")
    if args.kind == "binary":
        corpus = dio.synth_corpus(args.n, args.m, args.band, args.marginals, seed)
        path = out / (args.name or "corpus.bin")
        dio.write_binary_matrix(path, corpus)
        means = corpus.column_means()
        print(f"wrote {path}: {corpus.n_rows} x {corpus.n_cols}, mean marginal {means.mean():.4f}")
    else:
        if args.m < 2:
            raise ConfigurationError(f"synth_corpus: m must be >= 2, got {args.m}")
        corpus = dio.synth_continuous(args.n, args.m, args.positive_fraction, seed)
        path = out / (args.name or "corpus.csv")
        dio.write_continuous_csv(path, corpus)
        print(f"wrote {path}: {corpus.n_rows} x {corpus.n_cols}, positive fraction {corpus.labels.mean():.4f}")


def _descriptor(args, mode: str, width: int, n_classes: int = 0):
    return default_descriptor(mode, args.family, width, args.code_width, args.noise_width, args.mbd_kernels,
                              args.mbd_dim, n_classes=n_classes)


def cmd_pretrain_ae(args, out: Path) -> None:
    data = dio.load_binary_matrix(_need_file(args, "--data"))
    bundle = build(_descriptor(args, "discrete", data.n_cols), dio.derive_seed(args.seed, "pretrain-ae.init"))
    log = pretrain_autoencoder(bundle.autoencoder, data, _training_config(args, "pretrain-ae.train"))
    save_checkpoint(out / "ae.ckpt", bundle)
    log.write_csv(out / "pretrain_log.csv")
    print(f"pretrained autoencoder: BCE {log.records[0].loss_ae:.5f} -> {log.records[-1].loss_ae:.5f}")


def _scale(values: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    span = np.where(hi > lo, hi - lo, 1.0)
    return 2.0 * (values - lo) / span - 1.0


def _unscale(values: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    span = np.where(hi > lo, hi - lo, 1.0)
    return (values + 1.0) / 2.0 * span + lo


def cmd_train(args, out: Path) -> None:
    cfg = _training_config(args, "train.gan")
    ckpt = out / "model.ckpt"
    if args.mode == "discrete":
        if args.ae is None:
            raise ConfigurationError("--ae: discrete mode needs a pretrained autoencoder checkpoint")
        data = dio.load_binary_matrix(_need_file(args, "--data"))
        bundle = load_checkpoint(_need_file(args, "--ae"))
        if bundle.descriptor.record_width != data.n_cols:
            raise ConfigurationError(f"--data has {data.n_cols} columns but --ae expects "
                                     f"{bundle.descriptor.record_width}")
        log = train_gan(bundle.generator, bundle.discriminator, bundle.decoder, data, cfg, "discrete",
                        bundle.descriptor.noise_width, on_checkpoint=lambda e: save_checkpoint(ckpt, bundle))
        save_checkpoint(ckpt, bundle)
        log.write_csv(out / "train_log.csv")
        print(f"trained {log.records[-1].epoch} epochs (best {log.best_epoch}); "
              f"column-mean gap {log.records[log.best_epoch - 1].monitor:.4f}")
        return
    if args.ae is not None:
        raise ConfigurationError("--ae: continuous mode eliminates the autoencoder")
    data = dio.load_continuous_csv(_need_file(args, "--data"), header=args.header)
    classes = np.unique(data.labels)
    bundle = build(_descriptor(args, "continuous", data.n_cols, n_classes=len(classes)),
                   dio.derive_seed(args.seed, "train.init"))
    lo, hi = data.values.min(axis=0), data.values.max(axis=0)
    scaled = _scale(data.values, lo, hi)
    bundle.extras = {"class_labels": classes.astype(np.float64),
                     "class_prior": np.array([np.mean(data.labels == c) for c in classes]),
                     "scaler_min": lo, "scaler_max": hi}
    for i, c in enumerate(classes):
        rows = scaled[data.labels == c]
        sub_cfg = TrainingConfig(**{**vars(cfg), "seed": dio.derive_seed(args.seed, f"train.gan.class{c}")})
        log = train_gan(bundle.generators[i], bundle.discriminators[i], None, rows, sub_cfg, "continuous",
                        bundle.descriptor.noise_width, on_checkpoint=lambda e: save_checkpoint(ckpt, bundle))
        log.write_csv(out / f"train_log_class{int(c)}.csv")
        print(f"class {int(c)}: {len(rows)} rows, {log.records[-1].epoch} epochs (best {log.best_epoch})")
    save_checkpoint(ckpt, bundle)


def generate_records(bundle, count: int, seed: int) -> dio.RecordMatrix:
    """``count`` records from a trained bundle; continuous bundles return labelled, unscaled rows."""
    d = bundle.descriptor
    rng = np.random.default_rng(seed)
    if d.mode == "discrete":
        return generate(bundle.generator, bundle.decoder, sample_noise(count, d.noise_width, rng), "discrete")
    labels_all = bundle.extras["class_labels"].astype(np.int64)
    prior = bundle.extras["class_prior"]
    counts = np.floor(prior * count).astype(int)
    counts[np.argmax(prior)] += count - counts.sum()
    values, labels = [], []
    for i, (c, k) in enumerate(zip(labels_all, counts)):
        if k == 0:
            continue
        rec = generate(bundle.generators[i], None, sample_noise(int(k), d.noise_width, rng), "continuous")
        values.append(_unscale(rec.values, bundle.extras["scaler_min"], bundle.extras["scaler_max"]))
        labels.append(np.full(int(k), c))
    values, labels = np.concatenate(values), np.concatenate(labels)
    order = rng.permutation(count)
    return dio.RecordMatrix(values[order], "continuous", labels[order])


def cmd_generate(args, out: Path) -> None:
    if args.count < 1:
        raise ConfigurationError(f"--count must be positive, got {args.count}")
    bundle = load_checkpoint(_need_file(args, "--model"))
    records = generate_records(bundle, args.count, dio.derive_seed(args.seed, "generate"))
    if bundle.descriptor.mode == "discrete":
        path = out / (args.name or "synthetic.bin")
        dio.write_binary_matrix(path, records)
    else:
        path = out / (args.name or "synthetic.csv")
        dio.write_continuous_csv(path, records)
    print(f"wrote {records.n_rows} records to {path}")


def _load(path_flag: str, args, mode: str):
    path = _need_file(args, path_flag)
    if mode == "discrete":
        return dio.load_binary_matrix(path)
    return dio.load_continuous_csv(path, header=args.header)


def cmd_eval(args, out: Path) -> None:
    train = _load("--train-real", args, args.mode)
    syn = _load("--syn", args, args.mode)
    test = _load("--test-real", args, args.mode) if args.test_real else None
    if train.n_cols != syn.n_cols or (test is not None and test.n_cols != train.n_cols):
        raise ConfigurationError(f"width mismatch: --train-real {train.n_cols}, --syn {syn.n_cols}"
                                 + (f", --test-real {test.n_cols}" if test is not None else ""))
    if args.mode == "discrete":
        prob = dimension_wise_probability(train, syn)
        prob.write_csv(out / "dimension_probability.csv")
        prob.write_scatter(out / "dimension_probability_scatter.txt")
        print(f"dimension-wise probability: mean abs deviation {prob.mean_abs_deviation:.6f}, "
              f"max deviation {prob.max_deviation:.6f}")
        if test is not None:
            pred = dimension_wise_prediction(train, test, syn, args.runs, args.classifiers,
                                             dio.derive_seed(args.seed, "eval.dimpred"))
            pred.write_csv(out / "dimension_prediction.csv")
            note = f" (only {pred.usable_dimensions} usable dimensions)" if pred.shortfall else ""
            print(f"dimension-wise prediction: F1 diff {pred.mean_diff:.4f} +/- {pred.std_diff:.4f}, "
                  f"mean |diff| {pred.mean_abs_diff:.4f}{note}")
        return
    if test is None:
        raise ConfigurationError("--test-real: binary classification needs a real test set")
    report = binary_classification_eval(train, test, syn, args.classifiers)
    report.write_csv(out / "binary_classification.csv")
    for setting, name in (("A", "real -> real"), ("B", "synthetic -> real")):
        roc, prc = report.average(setting)
        print(f"setting {setting} ({name}): AUROC {roc:.4f}, AUPRC {prc:.4f}")
    if report.degenerate:
        print("warning: a classifier saw a single class and predicts a constant")


def cmd_privacy_audit(args, out: Path) -> None:
    tr = dio.load_binary_matrix(_need_file(args, "--train-real"))
    te = dio.load_binary_matrix(_need_file(args, "--test-real"))
    syn = dio.load_binary_matrix(_need_file(args, "--syn"))
    if not tr.n_cols == te.n_cols == syn.n_cols:
        raise ConfigurationError(f"width mismatch: --train-real {tr.n_cols}, --test-real {te.n_cols}, "
                                 f"--syn {syn.n_cols}")
    seed = dio.derive_seed(args.seed, "privacy-audit")
    kw = dict(n_thresholds=args.thresholds, threshold_mean=args.threshold_mean, threshold_std=args.threshold_std)
    report = run_attack(AttackSetup.sample(tr, te, syn, args.known // 2, seed=seed, **kw))
    report.write_csv(out / "attack.csv")
    b = report.best
    if b is None:
        print("best attack: no threshold flagged any record (precision reported as 0, recall 0)")
    else:
        print(f"best attack (max F1): threshold {b.threshold:.5f}, precision {b.precision:.4f}, "
              f"recall {b.recall:.4f}")
    if args.sweep_known:
        table = sweep_known_records(args.sweep_known, tr, te, syn, seed=seed, **kw)
        table.write_csv(out / "sweep_known.csv")
        for U, rep in zip(table.keys, table.reports):
            p, r = (rep.best.precision, rep.best.recall) if rep.best else (0.0, 0.0)
            print(f"U={U}: precision {p:.4f}, recall {r:.4f}")
    if args.sweep_sizes:
        if args.model is None:
            raise ConfigurationError("--model: the volume sweep needs a generator checkpoint")
        bundle = load_checkpoint(_need_file(args, "--model"))
        gen_seed = dio.derive_seed(args.seed, "privacy-audit.generate")
        table = sweep_synthetic_volume(args.sweep_sizes, tr, te, lambda s: generate_records(bundle, s, gen_seed),
                                       U=args.known, seed=seed, **kw)
        table.write_csv(out / "sweep_volume.csv")
        for s, rep in zip(table.keys, table.reports):
            p, r = (rep.best.precision, rep.best.recall) if rep.best else (0.0, 0.0)
            print(f"|S_syn|={s}: precision {p:.4f}, recall {r:.4f}")


COMMANDS = {
    "synth-corpus": cmd_synth_corpus,
    "pretrain-ae": cmd_pretrain_ae,
    "train": cmd_train,
    "generate": cmd_generate,
    "eval": cmd_eval,
    "privacy-audit": cmd_privacy_audit,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    known, _ = pre.parse_known_args(argv)
    command = next((a for a in argv if a in COMMANDS), None)
    if known.config and command:
        try:
            _apply_config(parser._subparsers._group_actions[0].choices[command], known.config)
        except (CorganError, OSError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](args, out)
        write_resolved(args, out)
    except (CorganError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""Command-line entry point: every pipeline stage as a subcommand.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error. On
failure a single machine-readable line is written to stderr:
``error\t<usage|data|internal>\t<message>``.
"""

from __future__ import annotations

import argparse
import os
import sys
from datetime import date

from . import fileio, plotting
from .classifier import (
    LabeledDataset,
    NetworkConfig,
    build_model,
    evaluate,
    load_model,
    save_model,
    train,
    write_train_report,
)
from .errors import DataError
from .experiment import config_from_json, default_config, run_experiment
from .novelty import (
    calibrate_threshold,
    classify_novelty,
    distance_from_origin,
    family_stats,
    read_calibration_json,
    read_signature_csv,
    roc_curve,
    signature_batch,
    strip_softmax,
    write_calibration_json,
    write_roc_csv,
    write_signature_csv,
    write_stats_csv,
)
from .rng import RngStream
from .synth import (
    SyntheticFamilySpec,
    generate_family,
    random_prototype,
    separated_prototype,
    temporal_split,
)
from .vectorizer import (
    VectorRecord,
    build_dictionary,
    read_dictionary,
    read_vector_file,
    tokenize_report,
    vectorize,
    write_dictionary,
    write_vector_file,
)

PROG = "deeporigin"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parse_widths(text: str) -> list[int]:
    try:
        widths = [int(part) for part in text.split(",")]
    except ValueError:
        raise UsageError(f"--widths expects comma-separated integers, got {text!r}")
    return widths


def _parse_date(text: str) -> date:
    try:
        return date.fromisoformat(text)
    except ValueError:
        raise UsageError(f"expected an ISO-8601 date, got {text!r}")


def _read_model(path):
    with open(path, "rb") as f:
        return load_model(f.read())


def _f17(x) -> str:
    return format(float(x), ".17g")


# ---------------------------------------------------------------------------
# Subcommand handlers
# ---------------------------------------------------------------------------

def _cmd_build_dict(args) -> int:
    corpus = []
    for path in args.reports:
        with open(path, "rb") as f:
            corpus.append(tokenize_report(f.read()))
    dictionary = build_dictionary(corpus, cap=args.cap)
    write_dictionary(dictionary, args.out)
    print(f"dictionary: {len(dictionary)} tokens from {len(corpus)} reports -> {args.out}")
    return 0


def _read_labels_file(path) -> dict[str, tuple[str, date]]:
    table = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataError(f"labels file line {lineno}: expected 3 tab-separated fields")
            table[parts[0]] = (parts[1], date.fromisoformat(parts[2]))
    return table


def _cmd_vectorize(args) -> int:
    dictionary = read_dictionary(args.dict)
    labels = _read_labels_file(args.labels) if args.labels else {}
    records = []
    for path in args.reports:
        with open(path, "rb") as f:
            tokens = tokenize_report(f.read())
        sample_id = os.path.basename(path)
        family, seen = labels.get(sample_id, ("unlabeled", date(1970, 1, 1)))
        records.append(VectorRecord(sample_id, family, seen, vectorize(tokens, dictionary)))
    write_vector_file(records, args.out)
    print(f"vectorized {len(records)} reports over {len(dictionary)} features -> {args.out}")
    return 0


def _cmd_train(args) -> int:
    widths = _parse_widths(args.widths)
    records = read_vector_file(args.data, dimension=widths[0])
    data = LabeledDataset.from_records(records)
    if args.cutoff:
        before, _ = temporal_split(data.samples, _parse_date(args.cutoff))
        data = LabeledDataset.from_samples(before)
    config = NetworkConfig(
        layer_widths=widths,
        dropout_rate=args.dropout,
        input_noise_rate=args.noise,
        learning_rate=args.lr,
        batch_size=args.batch_size,
        epochs=args.epochs,
        validation_fraction=args.val_fraction,
        seed=args.seed,
        freeze_prelu_alpha=args.relu,
    )
    model, report = train(build_model(config), data)
    fileio.write_bytes(args.out, save_model(model))
    if args.report:
        write_train_report(report, args.report)
    last = report.epochs[-1] if report.epochs else None
    if last is not None:
        print(
            f"trained {args.epochs} epochs: train_acc={last.train_acc:.4f} "
            f"val_acc={last.val_acc:.4f} -> {args.out}"
        )
    else:
        print(f"trained 0 epochs (initialization only) -> {args.out}")
    return 0


def _cmd_evaluate(args) -> int:
    model = _read_model(args.model)
    records = read_vector_file(args.data, dimension=model.input_dim)
    data = LabeledDataset.from_records(records)
    if args.cutoff:
        _, after = temporal_split(data.samples, _parse_date(args.cutoff))
        data = LabeledDataset.from_samples(after)
    accuracy, confusion = evaluate(model, data)
    print(f"accuracy\t{accuracy!r}")
    if args.confusion:
        labels = model.label_index
        lines = ["true\\pred," + ",".join(labels)]
        for i, lab in enumerate(labels):
            lines.append(lab + "," + ",".join(str(int(v)) for v in confusion[i]))
        fileio.write_text(args.confusion, "\n".join(lines) + "\n")
    return 0


def _cmd_sign(args) -> int:
    model = _read_model(args.model)
    records = read_vector_file(args.data, dimension=model.input_dim)
    sm = strip_softmax(model)
    sigs = signature_batch(
        sm,
        [r.vector for r in records],
        sample_ids=[r.sample_id for r in records],
        labels=[r.family_label for r in records],
    )
    write_signature_csv(sigs, args.out)
    print(f"signed {len(sigs)} samples ({sm.signature_dim}-dim) -> {args.out}")
    return 0


def _cmd_stats(args) -> int:
    sigs = read_signature_csv(args.signatures)
    stats = family_stats(sigs)
    write_stats_csv(stats, args.out)
    for row in stats.rows:
        print(f"{row.family}\t{row.mean_distance:.6f}\t{row.std_distance:.6f}\t{row.count}")
    return 0


def _distances(path) -> list[float]:
    return [distance_from_origin(s) for s in read_signature_csv(path)]


def _cmd_roc(args) -> int:
    roc = roc_curve(_distances(args.known), _distances(args.novel))
    write_roc_csv(roc, args.out)
    if args.figure:
        plotting.render_roc_png(roc, None, args.figure)
    print(f"auc\t{roc.auc!r}")
    return 0


def _cmd_calibrate(args) -> int:
    roc = roc_curve(_distances(args.known), _distances(args.novel))
    cal = calibrate_threshold(roc)
    write_calibration_json(cal, args.out)
    if args.roc_out:
        write_roc_csv(roc, args.roc_out)
    print(
        f"threshold\t{cal.threshold!r}\ntpr\t{cal.tpr_at_threshold!r}\n"
        f"fpr\t{cal.fpr_at_threshold!r}\naccuracy\t{cal.accuracy_at_threshold!r}\n"
        f"auc\t{cal.auc!r}"
    )
    return 0


def _cmd_score(args) -> int:
    model = _read_model(args.model)
    cal = read_calibration_json(args.calibration)
    records = read_vector_file(args.vector, dimension=model.input_dim)
    sm = strip_softmax(model)
    sigs = signature_batch(
        sm,
        [r.vector for r in records],
        sample_ids=[r.sample_id for r in records],
    )
    for sig in sigs:
        verdict = classify_novelty(distance_from_origin(sig), cal)
        print(
            f"{sig.sample_id}\t{_f17(verdict.distance)}\t{verdict.verdict}\t"
            f"{_f17(verdict.margin)}"
        )
    return 0


def _cmd_synth(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    proto_rng = RngStream(args.seed, "prototypes")
    known_protos = [random_prototype(args.dim, proto_rng) for _ in range(args.known)]
    placed = list(known_protos)
    novel_protos = []
    for _ in range(args.novel):
        p = separated_prototype(args.dim, placed, proto_rng)
        novel_protos.append(p)
        placed.append(p)

    def emit(labels_protos, date_start, date_end, out_name):
        samples = []
        for label, proto in labels_protos:
            spec = SyntheticFamilySpec(
                family_label=label,
                prototype=proto,
                dimension=args.dim,
                flip_rate=args.flip,
                sample_count=args.samples,
                date_start=date_start,
                date_end=date_end,
            )
            samples.extend(generate_family(spec, RngStream(args.seed, f"family:{label}")))
        records = [
            VectorRecord(s.sample_id, s.family_label, s.first_seen, s.vector)
            for s in samples
        ]
        path = os.path.join(args.out, out_name)
        write_vector_file(records, path)
        return len(records), path

    known_pairs = [(f"known-{i + 1:02d}", p) for i, p in enumerate(known_protos)]
    novel_pairs = [(f"novel-{i + 1:02d}", p) for i, p in enumerate(novel_protos)]
    nk, kpath = emit(known_pairs, date(2015, 1, 1), date(2017, 12, 31), "known.tsv")
    nn_, npath = emit(novel_pairs, date(2017, 1, 19), date(2017, 12, 31), "novel.tsv")
    print(f"known\t{nk}\t{kpath}\nnovel\t{nn_}\t{npath}")
    return 0


def _cmd_experiment(args) -> int:
    if args.config:
        with open(args.config, "r", encoding="utf-8") as f:
            cfg = config_from_json(f.read())
        if args.seed is not None:
            cfg.seed = args.seed
            cfg.network.seed = args.seed
        if args.epochs is not None:
            cfg.network.epochs = args.epochs
        if args.ablation:
            cfg.ablation_relu = True
    else:
        cfg = default_config(
            seed=args.seed if args.seed is not None else 7,
            epochs=args.epochs if args.epochs is not None else 100,
            ablation_relu=args.ablation,
        )
    if args.cutoff:
        cfg.cutoff_date = _parse_date(args.cutoff)
    result = run_experiment(cfg, args.out)
    print(f"test_accuracy\t{result.test_accuracy!r}")
    print(f"novelty_auc\t{result.roc.auc!r}")
    print(f"threshold\t{result.calibration.threshold!r}")
    print(f"eval_tpr\t{result.eval_tpr!r}")
    print(f"eval_fpr\t{result.eval_fpr!r}")
    if result.ablation:
        print(f"relu_test_accuracy\t{result.ablation['relu_test_accuracy']!r}")
    print(f"summary\t{result.files['summary.json']}")
    return 0


def _cmd_plot2d(args) -> int:
    if args.scatter:
        with open(args.scatter, "rb") as f:
            points = plotting.parse_scatter_csv(f.read())
    else:
        if not (args.known or args.novel):
            raise UsageError("plot2d needs --scatter, or --known and/or --novel")
        points = []
        if args.known:
            points.extend(
                plotting.points_from_signatures(read_signature_csv(args.known), is_novel=False)
            )
        if args.novel:
            points.extend(
                plotting.points_from_signatures(read_signature_csv(args.novel), is_novel=True)
            )
    spec = plotting.PlotSpec(width=args.width, height=args.height)
    plotting.write_scatter_files(points, csv_path=args.csv, svg_path=args.out, spec=spec)
    if args.figure:
        plotting.render_scatter_png(points, args.figure)
    print(f"plotted {len(points)} points -> {args.out}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(
        prog=PROG,
        description=(
            "Family classification and novelty triage over Boolean report "
            "vectors: deep signatures, origin distances, ROC-calibrated "
            "known/novel verdicts."
        ),
    )
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="COMMAND")

    p = sub.add_parser("build-dict", help="build a token dictionary from report files")
    p.add_argument("reports", nargs="+", help="report files (treated as UTF-8 text)")
    p.add_argument("--cap", type=int, default=20_000, help="max dictionary size")
    p.add_argument("--out", required=True, help="output dictionary file")
    p.set_defaults(func=_cmd_build_dict)

    p = sub.add_parser("vectorize", help="convert reports to a sparse vector file")
    p.add_argument("reports", nargs="+")
    p.add_argument("--dict", required=True, help="dictionary file")
    p.add_argument("--labels", help="TSV: sample_id, family, first-seen date")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_vectorize)

    p = sub.add_parser("train", help="train a family classifier")
    p.add_argument("--data", required=True, help="vector file")
    p.add_argument("--widths", required=True, help="comma-separated layer widths")
    p.add_argument("--cutoff", help="train only on samples first seen before this date")
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--dropout", type=float, default=0.4)
    p.add_argument("--noise", type=float, default=0.4)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--val-fraction", type=float, default=0.10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--relu", action="store_true", help="freeze activation slopes at zero")
    p.add_argument("--report", help="write per-epoch metrics CSV here")
    p.add_argument("--out", required=True, help="output model file")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="accuracy and confusion on labeled vectors")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--cutoff", help="evaluate only samples first seen on/after this date")
    p.add_argument("--confusion", help="write the confusion matrix CSV here")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("sign", help="emit signatures (softmax head stripped)")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_sign)

    p = sub.add_parser("stats", help="per-family origin-distance statistics")
    p.add_argument("--signatures", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("roc", help="ROC curve from known/novel signature files")
    p.add_argument("--known", required=True)
    p.add_argument("--novel", required=True)
    p.add_argument("--figure", help="also render a PNG figure here")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_roc)

    p = sub.add_parser("calibrate", help="pick the Youden-optimal threshold")
    p.add_argument("--known", required=True)
    p.add_argument("--novel", required=True)
    p.add_argument("--roc-out", help="also write the ROC CSV here")
    p.add_argument("--out", required=True, help="output calibration JSON")
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("score", help="known/novel verdict per sample")
    p.add_argument("--model", required=True)
    p.add_argument("--calibration", required=True)
    p.add_argument("--vector", required=True, help="vector file to score")
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("synth", help="generate a synthetic labeled corpus")
    p.add_argument("--dim", type=int, default=500)
    p.add_argument("--known", type=int, default=14, help="number of known families")
    p.add_argument("--novel", type=int, default=4, help="number of novel families")
    p.add_argument("--samples", type=int, default=200, help="samples per family")
    p.add_argument("--flip", type=float, default=0.05, help="bit flip rate")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--out", required=True, help="output directory (known.tsv, novel.tsv)")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("experiment", help="run the full staged experiment")
    p.add_argument("--config", help="experiment config JSON (default: stock desk-scale)")
    p.add_argument("--seed", type=int, help="override the seed")
    p.add_argument("--epochs", type=int, help="override training epochs")
    p.add_argument("--cutoff", help="override the temporal-split date")
    p.add_argument("--ablation", action="store_true",
                   help="also train with frozen activation slopes and report both accuracies")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("plot2d", help="deterministic SVG scatter of 2D signatures")
    p.add_argument("--scatter", help="scatter CSV (sample_id,family,is_novel,x,y)")
    p.add_argument("--known", help="2D signature CSV of known samples")
    p.add_argument("--novel", help="2D signature CSV of novel samples")
    p.add_argument("--csv", help="also write the scatter CSV here")
    p.add_argument("--figure", help="also render a PNG figure here")
    p.add_argument("--width", type=int, default=640)
    p.add_argument("--height", type=int, default=480)
    p.add_argument("--out", required=True, help="output SVG file")
    p.set_defaults(func=_cmd_plot2d)

    return parser


def _fail(kind: str, message: str) -> None:
    flat = " ".join(str(message).split())
    sys.stderr.write(f"error\t{kind}\t{flat}\n")


def cli_dispatch(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "func", None) is None:
            raise UsageError("missing command")
        return args.func(args)
    except SystemExit as e:  # --help
        return int(e.code or 0)
    except UsageError as e:
        _fail("usage", str(e))
        sys.stderr.write(parser.format_usage())
        return 1
    except (ValueError, OSError) as e:
        _fail("data", str(e))
        return 2
    except Exception as e:  # pragma: no cover - defensive
        _fail("internal", f"{type(e).__name__}: {e}")
        return 3


def main() -> None:
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()

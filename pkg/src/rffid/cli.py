"""Command-line workflow: synth, train, eval, sweep-snr, infer, ablation.

Every command is a pure function of (config file, seed, input artifacts):
rerunning with the same seed reproduces every output byte-for-byte. The
one deliberate exception is wall-clock timing, which goes to its own file
(timing.json) and is excluded from manifests.

Exit codes: 0 success, 2 configuration error, 3 data/format error,
4 training divergence.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import evaluation
from .config import RunConfig, load_config, resolved_dict
from .datasets import (
    ROGUE_LABEL,
    DatasetSplit,
    EnrollmentDb,
    build_synthetic_dataset,
    enroll,
    load_archive,
    load_enrollment,
    save_archive,
    save_enrollment,
)
from .dsp import preprocess_packet, spectrogram_shape
from .errors import ConfigError, FormatError, InputError, RffidError, TrainingDivergedError
from .inference import calibrate_threshold, infer
from .models import (
    PredictionModel,
    SiameseModel,
    checkpoint_metadata,
    model_from_metadata,
)
from .nn import load_checkpoint, save_checkpoint
from .signals import ComplexBaseband
from .training import train_joint, train_prediction, train_siamese

_TIMING_FILE = "timing.json"  # wall-clock output, excluded from manifests

ARCHIVE_FILES = {"train": "train.spga", "test": "test.spga", "calib": "calib.spga"}
PREDICTION_CKPT = "prediction.ckpt"
SIAMESE_CKPT = "siamese.ckpt"
ENROLLMENT_FILE = "enrollment.enrl"


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(out_dir: Path, command: str, cfg: RunConfig, outputs: list[str]) -> None:
    manifest = {
        "command": command,
        "seed": cfg.seed,
        "config": resolved_dict(cfg),
        "outputs": {name: _sha256(out_dir / name) for name in sorted(outputs)},
    }
    _write_json(out_dir / f"manifest_{command.replace('-', '_')}.json", manifest)


def _out_dir(cfg: RunConfig) -> Path:
    path = Path(cfg.out_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_split(out_dir: Path, name: str) -> DatasetSplit:
    path = out_dir / ARCHIVE_FILES[name]
    if not path.exists():
        raise FormatError(f"missing archive {path}; run `rffid synth` first")
    return load_archive(path)


def cmd_synth(cfg: RunConfig) -> list[str]:
    out_dir = _out_dir(cfg)
    written = []
    counts = {}
    for split, filename in ARCHIVE_FILES.items():
        data = build_synthetic_dataset(cfg.scenario, split, cfg.seed)
        save_archive(data, out_dir / filename)
        written.append(filename)
        counts[split] = len(data.items)
    _write_manifest(out_dir, "synth", cfg, written)
    print(f"synth: wrote {counts} items to {out_dir}")
    return written


def _build_models(cfg: RunConfig, shape: tuple[int, int]) -> tuple[PredictionModel, SiameseModel]:
    pred = PredictionModel(cfg.prediction_preset, cfg.scenario.identity_count, shape)
    sia = SiameseModel(shape, cfg.embedding_dim)
    return pred, sia


def _training_enrollment(cfg: RunConfig, train: DatasetSplit) -> EnrollmentDb:
    """Enrollment averages clean packets unless configured otherwise; with
    augmentation on, the clean variants are regenerated deterministically."""
    if cfg.scenario.augment.enabled and not cfg.enroll_from_augmented:
        from dataclasses import replace

        clean_scenario = replace(
            cfg.scenario, augment=replace(cfg.scenario.augment, enabled=False)
        )
        return enroll(build_synthetic_dataset(clean_scenario, "train", cfg.seed))
    return enroll(train)


def cmd_train(cfg: RunConfig) -> dict:
    out_dir = _out_dir(cfg)
    train = _load_split(out_dir, "train")
    expected = spectrogram_shape(cfg.scenario.lora, cfg.scenario.stft)
    if train.shape != expected:
        raise ConfigError(
            f"train archive shape {train.shape} does not match the configured "
            f"pipeline shape {expected}"
        )

    pred_model, sia_model = _build_models(cfg, train.shape)
    enrollment = _training_enrollment(cfg, train)
    started = time.perf_counter()
    if cfg.training_mode == "joint":
        report = train_joint(
            train, pred_model, sia_model, cfg.pairing, cfg.optimizer,
            enrollment=enrollment,
        )
        pred_params = report.prediction_params
        sia_params = report.siamese_params
        ce_curve, con_curve = report.ce_curve, report.con_curve
    else:
        pred_params, ce_curve = train_prediction(train, pred_model, cfg.optimizer)
        sia_params, con_curve = train_siamese(
            train, enrollment, pred_model, pred_params, sia_model,
            cfg.pairing, cfg.optimizer,
        )
    wall = time.perf_counter() - started

    save_checkpoint(pred_params, out_dir / PREDICTION_CKPT, checkpoint_metadata(pred_model))
    save_checkpoint(sia_params, out_dir / SIAMESE_CKPT, checkpoint_metadata(sia_model))
    save_enrollment(enrollment, out_dir / ENROLLMENT_FILE)

    report_doc = {
        "mode": cfg.training_mode,
        "seed": cfg.seed,
        "cross_entropy_curve": [float(v) for v in ce_curve],
        "contrastive_curve": [float(v) for v in con_curve],
        "epochs_run": len(ce_curve),
        "checkpoints": {
            "prediction": PREDICTION_CKPT,
            "siamese": SIAMESE_CKPT,
            "enrollment": ENROLLMENT_FILE,
        },
        "config": resolved_dict(cfg),
    }
    _write_json(out_dir / "train_report.json", report_doc)
    outputs = [PREDICTION_CKPT, SIAMESE_CKPT, ENROLLMENT_FILE, "train_report.json"]
    _write_manifest(out_dir, "train", cfg, outputs)
    print(
        f"train: mode={cfg.training_mode} epochs={len(ce_curve)} "
        f"final_ce={ce_curve[-1]:.4f} final_con={con_curve[-1]:.4f} "
        f"wall={wall:.1f}s"
    )
    return report_doc


def _load_models(out_dir: Path):
    pred_params, pred_meta = load_checkpoint(out_dir / PREDICTION_CKPT)
    sia_params, sia_meta = load_checkpoint(out_dir / SIAMESE_CKPT)
    pred_model = model_from_metadata(pred_meta)
    sia_model = model_from_metadata(sia_meta)
    enrollment = load_enrollment(out_dir / ENROLLMENT_FILE)
    return pred_model, pred_params, sia_model, sia_params, enrollment


def _resolve_threshold(cfg: RunConfig, out_dir: Path, models) -> float:
    if cfg.threshold.method == "fixed":
        return calibrate_threshold([], [], cfg.threshold)
    pred_model, pred_params, sia_model, sia_params, enrollment = models
    calib = _load_split(out_dir, "calib")
    outcome = evaluation.evaluate_split(
        calib, pred_model, pred_params, sia_model, sia_params, enrollment, 0.0
    )
    labels = outcome["labels"]
    distances = [d.distance for d in outcome["decisions"]]
    legit = [s for s, lab in zip(distances, labels) if lab != ROGUE_LABEL]
    rogue = [s for s, lab in zip(distances, labels) if lab == ROGUE_LABEL]
    return calibrate_threshold(legit, rogue, cfg.threshold)


def cmd_eval(cfg: RunConfig) -> dict:
    out_dir = _out_dir(cfg)
    models = _load_models(out_dir)
    pred_model, pred_params, sia_model, sia_params, enrollment = models
    threshold = _resolve_threshold(cfg, out_dir, models)
    test = _load_split(out_dir, "test")
    outcome = evaluation.evaluate_split(
        test, pred_model, pred_params, sia_model, sia_params, enrollment, threshold
    )

    detection = outcome.get("detection", {})
    metrics = {
        "closed_set_accuracy": outcome.get("closed_set_accuracy"),
        "accuracy": detection.get("accuracy"),
        "precision": detection.get("precision"),
        "recall": detection.get("recall"),
        "f1": detection.get("f1"),
        "auc": outcome.get("auc"),
        "eer": outcome.get("eer"),
        "rogue_detection_rate": outcome.get("rogue_detection_rate"),
        "threshold": threshold,
        "test_items": len(test.items),
    }
    _write_json(out_dir / "metrics.json", metrics)
    _write_json(out_dir / _TIMING_FILE, {"time_per_1000_s": outcome["time_per_1000_s"]})

    roc = outcome.get("roc")
    roc_rows = []
    if roc is not None:
        roc_rows = [
            [float(t), float(p[0]), float(p[1])]
            for t, p in zip(roc.thresholds, roc.points)
        ]
    _write_csv(out_dir / "roc_points.csv", ["threshold", "fpr", "tpr"], roc_rows)

    confusion = outcome.get("confusion")
    classes = list(range(test.identity_count))
    rows = (
        [[int(v) for v in row] for row in confusion.counts] if confusion is not None else []
    )
    _write_csv(out_dir / "confusion.csv", [f"pred_{c}" for c in classes], rows)

    decision_rows = [
        [i, int(lab), d.predicted, d.distance, d.threshold, d.verdict]
        for i, (d, lab) in enumerate(zip(outcome["decisions"], outcome["labels"]))
    ]
    _write_csv(
        out_dir / "decisions.csv",
        ["index", "true_label", "predicted", "distance", "threshold", "verdict"],
        decision_rows,
    )
    outputs = ["metrics.json", "roc_points.csv", "confusion.csv", "decisions.csv"]
    _write_manifest(out_dir, "eval", cfg, outputs)
    print(
        "eval: closed_set_accuracy={closed_set_accuracy} auc={auc} eer={eer} "
        "threshold={threshold}".format(**{k: metrics[k] for k in
                                          ("closed_set_accuracy", "auc", "eer", "threshold")})
    )
    return metrics


def _parse_snr_list(text: str) -> list[float | None]:
    values: list[float | None] = []
    for token in text.split(","):
        token = token.strip()
        if not token:
            continue
        values.append(None if token.lower() == "none" else float(token))
    if not values:
        raise ConfigError("--snr list is empty")
    return values


def cmd_sweep_snr(cfg: RunConfig, snr_list: list[float | None]) -> list[dict]:
    out_dir = _out_dir(cfg)
    models = _load_models(out_dir)
    pred_model, pred_params, sia_model, sia_params, enrollment = models
    threshold = _resolve_threshold(cfg, out_dir, models)
    rows = evaluation.snr_sweep(
        cfg.scenario, snr_list, pred_model, pred_params, sia_model, sia_params,
        enrollment, threshold, cfg.seed,
    )
    csv_rows = [
        [r["snr_db"], r["closed_set_accuracy"], r["rogue_detection_rate"],
         r["auc"], r["eer"]]
        for r in rows
    ]
    _write_csv(
        out_dir / "sweep.csv",
        ["snr_db", "closed_set_accuracy", "rogue_detection_rate", "auc", "eer"],
        csv_rows,
    )
    _write_manifest(out_dir, "sweep-snr", cfg, ["sweep.csv"])
    print(f"sweep-snr: {len(rows)} rows -> {out_dir / 'sweep.csv'}")
    return rows


def cmd_ablation(cfg: RunConfig) -> dict:
    out_dir = _out_dir(cfg)
    models = _load_models(out_dir)
    pred_model, pred_params, sia_model, sia_params, enrollment = models
    train = _load_split(out_dir, "train")
    test = _load_split(out_dir, "test")

    threshold = _resolve_threshold(cfg, out_dir, models)
    outcome = evaluation.evaluate_split(
        test, pred_model, pred_params, sia_model, sia_params, enrollment, threshold
    )
    fp_curve, _, _ = evaluation.fingerprint_siamese_roc(
        train, test, pred_model, pred_params, cfg.pairing, cfg.optimizer,
        embedding_dim=cfg.embedding_dim,
    )
    doc = {
        "spectrogram_auc": outcome.get("auc"),
        "spectrogram_eer": outcome.get("eer"),
        "fingerprint_auc": fp_curve.auc,
        "fingerprint_eer": fp_curve.eer,
    }
    _write_json(out_dir / "ablation.json", doc)
    fp_rows = [
        [float(t), float(p[0]), float(p[1])]
        for t, p in zip(fp_curve.thresholds, fp_curve.points)
    ]
    _write_csv(
        out_dir / "fingerprint_roc_points.csv", ["threshold", "fpr", "tpr"], fp_rows
    )
    _write_manifest(out_dir, "ablation", cfg, ["ablation.json", "fingerprint_roc_points.csv"])
    print(
        f"ablation: spectrogram_auc={doc['spectrogram_auc']:.4f} "
        f"fingerprint_auc={doc['fingerprint_auc']:.4f}"
    )
    return doc


def cmd_infer(cfg: RunConfig, packet_path: str, threshold_arg: float | None) -> dict:
    out_dir = _out_dir(cfg)
    models = _load_models(out_dir)
    pred_model, pred_params, sia_model, sia_params, enrollment = models
    if threshold_arg is not None:
        threshold = threshold_arg
    else:
        metrics_path = out_dir / "metrics.json"
        if metrics_path.exists():
            threshold = json.loads(metrics_path.read_text())["threshold"]
        else:
            threshold = _resolve_threshold(cfg, out_dir, models)

    try:
        samples = np.load(packet_path)
    except (OSError, ValueError) as exc:
        raise FormatError(f"cannot read packet file {packet_path}: {exc}") from exc
    if samples.ndim != 1 or not np.iscomplexobj(samples):
        raise FormatError(
            f"packet file must hold a 1-D complex array, got shape {samples.shape} "
            f"dtype {samples.dtype}"
        )
    signal = ComplexBaseband(samples, cfg.scenario.lora.sample_rate_hz)
    observed = preprocess_packet(signal, cfg.scenario.lora, cfg.scenario.stft)
    decision = infer(
        observed, pred_model, pred_params, sia_model, sia_params, enrollment, threshold
    )
    doc = {
        "verdict": decision.verdict,
        "predicted": decision.predicted,
        "distance": decision.distance,
        "threshold": decision.threshold,
        "probability": decision.probability,
    }
    print(json.dumps(doc, sort_keys=True))
    return doc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rffid",
        description="Open-set RF fingerprint identification workflow",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="path to the JSON run config")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="override the output directory")

    common(sub.add_parser("synth", help="synthesize train/test/calib archives"))
    common(sub.add_parser("train", help="train the prediction and siamese networks"))
    common(sub.add_parser("eval", help="calibrate the threshold and evaluate the test archive"))

    sweep = sub.add_parser("sweep-snr", help="re-evaluate the test split across SNRs")
    common(sweep)
    sweep.add_argument("--snr", required=True,
                       help="comma-separated SNR list in dB ('none' = noiseless)")

    infer_p = sub.add_parser("infer", help="decide a single packet file (.npy complex)")
    common(infer_p)
    infer_p.add_argument("--packet", required=True, help="complex baseband .npy file")
    infer_p.add_argument("--threshold", type=float, default=None,
                         help="decision threshold (default: calibrated)")

    common(sub.add_parser("ablation", help="compare against the fingerprint-input siamese"))
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, seed_override=args.seed, out_override=args.out)
        if args.command == "synth":
            cmd_synth(cfg)
        elif args.command == "train":
            cmd_train(cfg)
        elif args.command == "eval":
            cmd_eval(cfg)
        elif args.command == "sweep-snr":
            cmd_sweep_snr(cfg, _parse_snr_list(args.snr))
        elif args.command == "infer":
            cmd_infer(cfg, args.packet, args.threshold)
        elif args.command == "ablation":
            cmd_ablation(cfg)
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except TrainingDivergedError as exc:
        print(f"training error: {exc}", file=sys.stderr)
        return 4
    except (FormatError, InputError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except RffidError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

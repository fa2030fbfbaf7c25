"""Command-line pipeline driver.

Subcommands: synth, preprocess, train, evaluate, export-spectrogram.
Configuration is layered (built-in defaults, then --config JSON, then
flags); every run writes the fully resolved values to
``effective_config.json`` in the output directory, so a run can be
replayed by passing that snapshot back as --config.

Exit codes: 0 success, 2 input/configuration error, 3 numeric failure.
Set NEUROINCEPT_LOG=DEBUG|INFO|WARNING|ERROR for verbosity.
"""

from __future__ import annotations

import argparse
import copy
import json
import logging
import os
import sys
from dataclasses import asdict

import numpy as np

from . import framing
from . import io as nio
from .audio import LogMelSpectrogram, align, logmel
from .dsp import (CONTEXT_ORDER, CONTEXT_STEP, DspConfig, EegRecording,
                  extract_hg_features, zscore_apply, zscore_fit)
from .evaluation import MetricError, evaluate_protocol, report_to_csv
from .model import (InceptionConfig, ModelConfig, NeuroInceptDecoder,
                    load_checkpoint, save_checkpoint)
from .stgi import StgiConfig
from .synthetic import SyntheticSpec, generate_synthetic
from .training import (TrainConfig, TrainingError, mse, ridge_baseline,
                       ridge_predict, split_80_20, split_indices,
                       split_random, train)

logger = logging.getLogger("neuroincept")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3

DURATION_TOLERANCE_S = 0.5


class CliInputError(Exception):
    pass


# ---------------------------------------------------------------------------
# layered configuration
# ---------------------------------------------------------------------------


def default_config() -> dict:
    return {
        "dsp": asdict(DspConfig()),
        "model": {
            "gru_units": [128, 256, 512],
            "dense_units": [1024, 512, 256],
            "output_dim": 128,
            "context_len": 2 * CONTEXT_ORDER + 1,
            "branch_filters": 32,
            "post_conv_filters": 64,
        },
        "train": asdict(TrainConfig()),
        "stgi": asdict(StgiConfig()),
        "synth": {
            "n_channels": 4,
            "duration_s": 60.0,
            "seed": 7,
            "noise_sigma": 0.0,
            "carrier_low": 70.0,
            "carrier_high": 170.0,
            "eeg_fs": 1024.0,
            "n_bins": 128,
            "participant": "synthetic01",
        },
        "eval": {"seed": 0},
    }


def _merge(base: dict, override: dict, path: str = "") -> None:
    for key, value in override.items():
        if key == "run":
            continue  # provenance block from a replayed snapshot
        if key not in base:
            raise CliInputError(f"unknown config key {path + key!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise CliInputError(f"config key {path + key!r} must be a section")
            _merge(base[key], value, path + key + ".")
        else:
            base[key] = value


def load_config(path=None) -> dict:
    cfg = copy.deepcopy(default_config())
    if path:
        try:
            with open(path, "r", encoding="utf-8") as f:
                doc = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise CliInputError(f"cannot read config {path}: {e}") from e
        if not isinstance(doc, dict):
            raise CliInputError(f"config {path} must hold a JSON object")
        _merge(cfg, doc)
    return cfg


def write_snapshot(cfg: dict, args, out_dir) -> None:
    os.makedirs(out_dir, exist_ok=True)
    snapshot = copy.deepcopy(cfg)
    snapshot["run"] = {
        "command": args.command,
        "seed": args.seed,
        "manifest": getattr(args, "manifest", None),
        "participant": getattr(args, "participant", None),
        "out": str(out_dir),
    }
    with open(os.path.join(out_dir, "effective_config.json"), "w",
              encoding="utf-8") as f:
        json.dump(snapshot, f, indent=2, sort_keys=True)
        f.write("\n")


def _train_config(cfg: dict, seed) -> TrainConfig:
    doc = dict(cfg["train"])
    if seed is not None:
        doc["seed"] = seed
    try:
        return TrainConfig(**doc)
    except (TypeError, ValueError) as e:
        raise CliInputError(f"bad train config: {e}") from e


def _model_config(cfg: dict, n_channels: int) -> ModelConfig:
    doc = cfg["model"]
    try:
        return ModelConfig(
            n_channels=n_channels,
            context_len=int(doc["context_len"]),
            gru_units=tuple(int(u) for u in doc["gru_units"]),
            dense_units=tuple(int(u) for u in doc["dense_units"]),
            output_dim=int(doc["output_dim"]),
            inception=InceptionConfig(
                branch_filters=int(doc["branch_filters"]),
                post_conv_filters=int(doc["post_conv_filters"])),
        )
    except (TypeError, ValueError, KeyError) as e:
        raise CliInputError(f"bad model config: {e}") from e


def _stgi_config(cfg: dict) -> StgiConfig:
    doc = dict(cfg["stgi"])
    for key in ("temporal_rates_hz", "spectral_scales_cyc_per_bin"):
        doc[key] = tuple(doc[key])
    try:
        return StgiConfig(**doc)
    except (TypeError, ValueError) as e:
        raise CliInputError(f"bad stgi config: {e}") from e


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------


def cmd_synth(args, cfg: dict) -> int:
    doc = dict(cfg["synth"])
    participant = doc.pop("participant")
    if args.participant:
        participant = args.participant
    if args.seed is not None:
        doc["seed"] = args.seed
    try:
        spec = SyntheticSpec(**doc)
    except (TypeError, ValueError) as e:
        raise CliInputError(f"bad synth spec: {e}") from e

    data = generate_synthetic(spec)
    out = args.out
    os.makedirs(out, exist_ok=True)
    eeg_path = os.path.join(out, f"{participant}_eeg.nifs")
    target_path = os.path.join(out, f"{participant}_logmel.nifs")
    latent_path = os.path.join(out, f"{participant}_latent.nifs")
    nio.write_store(eeg_path, data.recording.samples, dtype="f8")
    nio.write_store(target_path, data.targets.values, dtype="f8")
    nio.write_store(latent_path, data.latent_features.values, dtype="f8")

    manifest = nio.DatasetManifest()
    manifest.participants.append(nio.ParticipantEntry(
        id=participant,
        eeg_path=os.path.abspath(eeg_path),
        audio_path=os.path.abspath(target_path),
        eeg_fs=spec.eeg_fs,
        audio_fs=spec.eeg_fs,
        n_channels=spec.n_channels,
    ))
    nio.save_manifest(os.path.join(out, "manifest.txt"), manifest)
    write_snapshot(cfg, args, out)
    logger.info("synth: %s channels x %s samples, %s target rows",
                data.recording.n_channels, data.recording.n_samples,
                data.targets.frames)
    print(f"wrote synthetic participant {participant!r} to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# preprocess
# ---------------------------------------------------------------------------


def _load_eeg(entry: nio.ParticipantEntry) -> EegRecording:
    if entry.eeg_path.endswith(".nifs"):
        samples = nio.read_store(entry.eeg_path)
        if samples.ndim != 2:
            raise CliInputError(
                f"{entry.eeg_path}: EEG store must be C x N, got {samples.shape}")
        return EegRecording(fs=entry.eeg_fs, samples=samples)
    audio = nio.read_wav(entry.eeg_path)
    return EegRecording(fs=audio.fs, samples=audio.samples[None, :])


def _load_targets(entry: nio.ParticipantEntry):
    """Either a speech WAV (log-mel computed here) or a precomputed
    T x bins store such as the synthetic ground truth."""
    if entry.audio_path.endswith(".nifs"):
        values = nio.read_store(entry.audio_path)
        if values.ndim != 2:
            raise CliInputError(
                f"{entry.audio_path}: target store must be T x bins, "
                f"got {values.shape}")
        return LogMelSpectrogram(values, framing.frame_times(values.shape[0]))
    return logmel(nio.read_wav(entry.audio_path))


def _check_durations(rec: EegRecording, mel: LogMelSpectrogram,
                     precomputed: bool) -> None:
    eeg_s = rec.n_samples / rec.fs
    if precomputed:
        # precomputed target stores already dropped 2*order*step context rows
        expected = framing.num_frames(rec.n_samples, rec.fs) \
            - 2 * CONTEXT_ORDER * CONTEXT_STEP
        gap_s = abs(mel.frames - expected) * framing.HOP_S
    else:
        audio_s = (mel.frames - 1) * framing.HOP_S + framing.WINDOW_S
        gap_s = abs(eeg_s - audio_s)
    if gap_s > DURATION_TOLERANCE_S:
        raise nio.DatasetError(
            f"EEG and audio durations disagree by {gap_s:.2f} s "
            f"(tolerance {DURATION_TOLERANCE_S} s)")


def cmd_preprocess(args, cfg: dict) -> int:
    manifest = nio.load_manifest(args.manifest)
    entry = manifest.get(args.participant)
    try:
        dsp_cfg = DspConfig(**cfg["dsp"])
    except (TypeError, ValueError) as e:
        raise CliInputError(f"bad dsp config: {e}") from e

    rec = _load_eeg(entry)
    mel = _load_targets(entry)
    _check_durations(rec, mel, precomputed=entry.audio_path.endswith(".nifs"))

    features = extract_hg_features(rec, dsp_cfg)
    X, Y = align(features, mel, dsp_cfg.context_order, dsp_cfg.context_step)

    # standardize X with statistics from the temporal training side only
    tr, _ = split_indices(X.shape[0])
    mean, std, degenerate = zscore_fit(X[tr])
    Xz = zscore_apply(X, mean, std, degenerate)

    out = args.out
    os.makedirs(out, exist_ok=True)
    pid = entry.id
    nio.write_store(os.path.join(out, f"{pid}_hg.nifs"), features.values)
    nio.write_store(os.path.join(out, f"{pid}_logmel.nifs"),
                    np.asarray(mel.values))
    nio.write_store(os.path.join(out, f"{pid}_X.nifs"), Xz)
    nio.write_store(os.path.join(out, f"{pid}_Y.nifs"), np.asarray(Y))

    stats = {
        "participant": pid,
        "eeg_samples": int(rec.n_samples),
        "eeg_fs": rec.fs,
        "n_channels": int(rec.n_channels),
        "frames_unstacked": int(framing.num_frames(rec.n_samples, rec.fs)),
        "rows_stacked": int(features.frames),
        "rows_aligned": int(X.shape[0]),
        "dropped_context_rows": 2 * dsp_cfg.context_order * dsp_cfg.context_step,
        "dropped_alignment_rows": int(features.frames - X.shape[0]),
        "zscore": {
            "applied": True,
            "fit_rows": int(tr.stop),
            "degenerate_columns": [int(i) for i in np.where(degenerate)[0]],
            "mean": [float(v) for v in mean],
            "std": [float(v) for v in std],
        },
    }
    with open(os.path.join(out, f"{pid}_stats.json"), "w",
              encoding="utf-8") as f:
        json.dump(stats, f, indent=2, sort_keys=True)
        f.write("\n")
    write_snapshot(cfg, args, out)
    print(f"preprocessed {pid!r}: {X.shape[0]} aligned rows "
          f"({features.dim} features, {mel.bins} bins) in {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------


def _resolve_xy(args) -> tuple:
    if args.features and args.targets:
        return args.features, args.targets
    if args.data and args.participant:
        return (os.path.join(args.data, f"{args.participant}_X.nifs"),
                os.path.join(args.data, f"{args.participant}_Y.nifs"))
    raise CliInputError(
        "need --features/--targets or --data with --participant")


def _split(X, Y, tcfg: TrainConfig):
    if tcfg.split_mode == "random":
        return split_random(X, Y, tcfg.split_ratio, tcfg.seed)
    return split_80_20(X, Y, tcfg.split_ratio)


def cmd_train(args, cfg: dict) -> int:
    x_path, y_path = _resolve_xy(args)
    X = nio.read_store(x_path)
    Y = nio.read_store(y_path)
    tcfg = _train_config(cfg, args.seed)
    (Xtr, Ytr), (Xva, Yva) = _split(X, Y, tcfg)
    logger.info("train: %d train rows, %d held-out validation rows",
                Xtr.shape[0], Xva.shape[0])

    n_channels, rem = divmod(X.shape[1], int(cfg["model"]["context_len"]))
    if rem:
        raise CliInputError(
            f"feature width {X.shape[1]} is not a multiple of "
            f"context_len {cfg['model']['context_len']}")
    mcfg = _model_config(cfg, n_channels)
    decoder = NeuroInceptDecoder(mcfg, seed=tcfg.seed)

    out = args.out
    os.makedirs(out, exist_ok=True)
    if args.dry_run:
        save_checkpoint(decoder, os.path.join(out, "checkpoint"))
        write_snapshot(cfg, args, out)
        print(f"dry run: wrote initialized checkpoint to {out}/checkpoint")
        return EXIT_OK

    decoder, report = train(Xtr, Ytr, tcfg, decoder=decoder)
    save_checkpoint(decoder, os.path.join(out, "checkpoint"))
    with open(os.path.join(out, "train_report.csv"), "w",
              encoding="utf-8") as f:
        f.write("epoch,train_loss,monitor_loss\n")
        for epoch, tl, ml in report.to_rows():
            f.write(f"{epoch},{tl!r},{ml!r}\n")
    write_snapshot(cfg, args, out)

    lam = args.ridge_lambda
    W = ridge_baseline(Xtr, Ytr, lam)
    baseline = mse(ridge_predict(Xva, W), Yva)
    val = mse(decoder.predict_chunked(Xva), Yva)
    print(f"trained {report.stopped_epoch} epochs "
          f"(best {report.best_epoch}, monitor {min(report.monitor_loss):.6g}); "
          f"validation MSE {val:.6g} vs ridge baseline {baseline:.6g}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------


def cmd_evaluate(args, cfg: dict) -> int:
    x_path, y_path = _resolve_xy(args)
    X = nio.read_store(x_path)
    Y = nio.read_store(y_path)
    tcfg = _train_config(cfg, args.seed)
    (_, _), (Xva, Yva) = _split(X, Y, tcfg)

    if args.identity:
        pred = Yva.copy()
        participant = args.participant or "identity"
    else:
        if not args.checkpoint:
            raise CliInputError("need --checkpoint (or --identity)")
        decoder = load_checkpoint(args.checkpoint)
        if decoder.cfg.input_dim != X.shape[1]:
            raise CliInputError(
                f"checkpoint expects {decoder.cfg.input_dim} features, "
                f"store has {X.shape[1]}")
        pred = decoder.predict_chunked(Xva)
        participant = args.participant or "?"

    seed = args.seed if args.seed is not None else int(cfg["eval"]["seed"])
    report = evaluate_protocol(pred, Yva, participant=participant, seed=seed,
                               stgi_cfg=_stgi_config(cfg))
    out = args.out
    os.makedirs(out, exist_ok=True)
    report_to_csv(report, os.path.join(out, "eval_report.csv"))
    nio.write_store(os.path.join(out, "predicted_logmel.nifs"), pred)
    write_snapshot(cfg, args, out)
    print(f"evaluated {participant!r}: PCC {report.pcc_mean:.4f} "
          f"(std {report.pcc_std:.4f}), STGI {report.stgi_mean:.4f} "
          f"(std {report.stgi_std:.4f}), MSE {report.mse_mean:.6g}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# export-spectrogram
# ---------------------------------------------------------------------------


def cmd_export_spectrogram(args, cfg: dict) -> int:
    values = nio.read_store(args.store)
    if values.ndim != 2 or values.size == 0:
        raise CliInputError(
            f"{args.store}: expected a nonempty T x bins store, "
            f"got shape {values.shape}")
    out = args.out
    os.makedirs(out, exist_ok=True)
    stem = os.path.splitext(os.path.basename(args.store))[0]

    csv_path = os.path.join(out, f"{stem}.csv")
    with open(csv_path, "w", encoding="utf-8") as f:
        for row in values:
            f.write(",".join(repr(float(v)) for v in row) + "\n")

    lo, hi = float(values.min()), float(values.max())
    if hi > lo:
        scaled = np.rint((values - lo) / (hi - lo) * 255.0).astype(np.uint8)
    else:
        scaled = np.full(values.shape, 128, dtype=np.uint8)
    # rows = mel bins bottom-up, columns = frames
    image = scaled.T[::-1]
    pgm_path = os.path.join(out, f"{stem}.pgm")
    with open(pgm_path, "wb") as f:
        f.write(f"P5\n{image.shape[1]} {image.shape[0]}\n255\n".encode("ascii"))
        f.write(image.tobytes())
    with open(os.path.join(out, f"{stem}_scale.json"), "w",
              encoding="utf-8") as f:
        json.dump({"min": lo, "max": hi, "frames": int(values.shape[0]),
                   "bins": int(values.shape[1])}, f, indent=2)
        f.write("\n")
    print(f"exported {values.shape[0]} x {values.shape[1]} spectrogram "
          f"to {csv_path} and {pgm_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="neuroincept",
        description="Speech spectrogram decoding from intracranial EEG")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--manifest", help="dataset manifest path")
        p.add_argument("--participant", help="participant id")
        p.add_argument("--config", help="JSON config overriding defaults")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("synth", help="generate a synthetic participant")
    common(p)

    p = sub.add_parser("preprocess", help="EEG/audio to aligned feature stores")
    common(p)

    for name in ("train", "evaluate"):
        p = sub.add_parser(name)
        common(p)
        p.add_argument("--data", help="directory holding <pid>_X/_Y stores")
        p.add_argument("--features", help="explicit X store path")
        p.add_argument("--targets", help="explicit Y store path")
        if name == "train":
            p.add_argument("--dry-run", action="store_true",
                           help="write the initialized checkpoint and stop")
            p.add_argument("--ridge-lambda", type=float, default=0.0)
        else:
            p.add_argument("--checkpoint", help="checkpoint directory")
            p.add_argument("--identity", action="store_true",
                           help="score the targets against themselves")

    p = sub.add_parser("export-spectrogram", help="store to CSV + PGM")
    common(p)
    p.add_argument("--store", required=True, help="T x bins store to export")
    return parser


_COMMANDS = {
    "synth": cmd_synth,
    "preprocess": cmd_preprocess,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "export-spectrogram": cmd_export_spectrogram,
}


def main(argv=None) -> int:
    level = os.environ.get("NEUROINCEPT_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)

    required = {"preprocess": ("manifest", "participant")}
    for field_name in required.get(args.command, ()):
        if getattr(args, field_name) is None:
            print(f"error: --{field_name} is required for {args.command}",
                  file=sys.stderr)
            return EXIT_INPUT

    try:
        cfg = load_config(args.config)
        return _COMMANDS[args.command](args, cfg)
    except (CliInputError, nio.DatasetError, MetricError, ValueError,
            OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except (TrainingError, FloatingPointError) as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())

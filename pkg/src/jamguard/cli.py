"""Batch command-line front end.

Subcommands: synth, import, preprocess, train, cv, explain, fpga.  Exit
codes are a stable contract: 0 success, 1 usage error, 2 data error
(including partial preprocessing failures), 3 internal error.  All
randomness flows from ``master_seed``; wall-clock timings are written to
separate ``*_timing*`` / report files so every other artifact is
bit-reproducible.  The ``JAMGUARD_THREADS`` environment variable caps
the worker count of record-parallel stages.
"""
from __future__ import annotations

import argparse
import concurrent.futures
import os
import sys
import time
from typing import Any

import numpy as np

from . import config as _config
from . import evaluate as _evaluate
from . import fpga as _fpga
from .binarize import BinarizeMethod, BoolImage, load_bool_image, save_bool_image
from .ctm import CtmConfig, ConvTsetlinClassifier, load_model, save_model
from .errors import DataError, UsageError
from .explain import export_heatmap, literal_heatmap
from .pipeline import PreprocessParams, preprocess_capture, reference_waveform
from .signal import (CaptureRecord, IQBuffer, JammerSpec, SynthConfig,
                     load_iq_csv, read_dataset, read_manifest, save_iq_csv,
                     synth_dataset, write_dataset)


def _worker_count() -> int:
    env = os.environ.get("JAMGUARD_THREADS", "")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise UsageError(f"JAMGUARD_THREADS must be an integer, got {env!r}")
        if n < 1:
            raise UsageError("JAMGUARD_THREADS must be >= 1")
        return n
    return min(8, os.cpu_count() or 1)


def _prepare_outdir(path: str, force: bool) -> None:
    if os.path.isdir(path) and os.listdir(path):
        if not force:
            raise UsageError(f"output directory {path} is not empty; use --force")
    os.makedirs(path, exist_ok=True)


def _synth_config(cfg: dict[str, Any], n_pure: int, n_jam: int) -> SynthConfig:
    return SynthConfig(
        n_pure=n_pure, n_jam=n_jam, master_seed=cfg["master_seed"],
        sample_rate=cfg["signal.sample_rate"], center_freq=cfg["signal.center_freq"],
        fft_size=cfg["signal.fft_size"], cp_len=cfg["signal.cp_len"],
        capture_len=cfg["signal.capture_len"], sector_id=cfg["signal.sector_id"],
        snr_db=(cfg["signal.snr_db_min"], cfg["signal.snr_db_max"]),
        gain_sweep_db=(cfg["signal.gain_db_min"], cfg["signal.gain_db_max"],
                       cfg["signal.gain_db_step"]),
        jammer_kinds=_config.jammer_kinds(cfg),
        jammer_calib_db=cfg["signal.jammer_calib_db"],
        cfo_max_hz=cfg["signal.cfo_max_hz"],
        timing_offset=(cfg["signal.timing_offset_min"],
                       cfg["signal.timing_offset_max"]),
        traffic=cfg["signal.traffic"],
        traffic_power_db=cfg["signal.traffic_power_db"],
        traffic_bands=_config.traffic_bands(cfg),
        traffic_duty=cfg["signal.traffic_duty"])


def _ctm_config(cfg: dict[str, Any]) -> CtmConfig:
    return CtmConfig(
        n_clauses=cfg["ctm.n_clauses"], threshold=cfg["ctm.threshold"],
        specificity=cfg["ctm.specificity"],
        patch_dim=(cfg["ctm.patch_h"], cfg["ctm.patch_w"]),
        max_included_literals=cfg["ctm.max_included_literals"],
        n_states=cfg["ctm.n_states"], seed=cfg["master_seed"],
        epochs=cfg["ctm.epochs"],
        boost_true_positive=cfg["ctm.boost_true_positive"])


def cmd_synth(args) -> int:
    cfg = _config.load_config(args.config, args.set)
    if args.seed is not None:
        cfg["master_seed"] = args.seed
    if args.n_pure <= 0 or args.n_jam <= 0:
        raise UsageError("--n-pure and --n-jam must be positive")
    _prepare_outdir(args.out, args.force)
    records = synth_dataset(_synth_config(cfg, args.n_pure, args.n_jam))
    write_dataset(records, args.out, _synth_config(cfg, args.n_pure, args.n_jam))
    _config.write_config(cfg, os.path.join(args.out, "resolved_config.txt"))
    print(f"wrote {len(records)} captures to {args.out}")
    return 0


def cmd_import(args) -> int:
    cfg = _config.load_config(args.config, args.set)
    _prepare_outdir(args.out, args.force)
    if not os.path.exists(args.meta):
        raise DataError(f"sidecar metadata file {args.meta} not found")
    entries = []
    with open(args.meta) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            toks = line.split()
            pairs = {}
            for tok in toks[1:]:
                k, sep, v = tok.partition("=")
                if not sep:
                    raise DataError(f"{args.meta}: line {lineno}: malformed token {tok!r}")
                pairs[k] = v
            if "label" not in pairs:
                raise DataError(f"{args.meta}: line {lineno}: missing label")
            entries.append((toks[0], pairs))
    lines = [f"meta sample_rate={cfg['signal.sample_rate']!r}",
             f"meta center_freq={cfg['signal.center_freq']!r}"]
    for i, (fname, pairs) in enumerate(entries):
        src = os.path.join(args.csv_dir, fname)
        if not os.path.exists(src):
            raise DataError(f"{args.meta}: referenced file {src} not found")
        iq = load_iq_csv(src, cfg["signal.sample_rate"], cfg["signal.center_freq"])
        rec_id = f"rec_{i:05d}"
        save_iq_csv(iq, os.path.join(args.out, f"{rec_id}.csv"))
        parts = [f"record id={rec_id}", f"file={rec_id}.csv",
                 f"label={pairs['label']}",
                 f"seed={pairs.get('seed', 0)}",
                 f"snr_db={pairs.get('snr_db', 0.0)}"]
        if pairs.get("kind"):
            parts += [f"kind={pairs['kind']}",
                      f"gain_db={pairs.get('gain_db', 0.0)}"]
        lines.append(" ".join(parts))
    with open(os.path.join(args.out, "manifest.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    _config.write_config(cfg, os.path.join(args.out, "resolved_config.txt"))
    print(f"imported {len(entries)} captures to {args.out}")
    return 0


def cmd_preprocess(args) -> int:
    cfg = _config.load_config(args.config, args.set)
    if args.method is not None:
        cfg["binarize.method"] = _config._parse_value("binarize.method", args.method)
    manifest_path = os.path.join(args.data, "manifest.txt")
    if not os.path.exists(manifest_path):
        raise DataError(f"no manifest.txt in {args.data}")
    meta, rows = read_manifest(manifest_path)
    _prepare_outdir(args.out, args.force)
    params = PreprocessParams.from_config(cfg)
    sample_rate = float(meta.get("sample_rate", cfg["signal.sample_rate"]))
    center_freq = float(meta.get("center_freq", cfg["signal.center_freq"]))
    reference = reference_waveform(params)

    def work(row):
        iq = load_iq_csv(os.path.join(args.data, row["file"]), sample_rate, center_freq)
        return preprocess_capture(iq, params, reference)

    results: list = [None] * len(rows)
    failures: list[str] = []
    with concurrent.futures.ThreadPoolExecutor(max_workers=_worker_count()) as pool:
        futures = {pool.submit(work, row): i for i, row in enumerate(rows)}
        for fut in concurrent.futures.as_completed(futures):
            i = futures[fut]
            try:
                results[i] = fut.result()
            except DataError as exc:
                failures.append(rows[i]["id"])
                print(f"warning: skipping {rows[i]['id']}: {exc}", file=sys.stderr)

    lines = []
    for row, result in zip(rows, results):
        if result is None:
            continue
        img, diag = result
        fname = f"{row['id']}.jgb"
        save_bool_image(img, os.path.join(args.out, fname))
        lines.append(f"file={fname} id={row['id']} label={row['label']} "
                     f"cfo_hz={diag['cfo_hz']!r} timing_offset={diag['timing_offset']}")
    with open(os.path.join(args.out, "labels.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    _config.write_config(cfg, os.path.join(args.out, "resolved_config.txt"))
    done = len(rows) - len(failures)
    print(f"preprocessed {done}/{len(rows)} captures to {args.out}")
    return 2 if failures else 0


def _load_bool_dataset(path: str) -> tuple[list[BoolImage], np.ndarray]:
    labels_path = os.path.join(path, "labels.txt")
    if not os.path.exists(labels_path):
        raise DataError(f"no labels.txt in {path}")
    images = []
    labels = []
    with open(labels_path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line:
                continue
            pairs = dict(tok.partition("=")[::2] for tok in line.split())
            if "file" not in pairs or "label" not in pairs:
                raise DataError(f"{labels_path}: line {lineno}: need file= and label=")
            images.append(load_bool_image(os.path.join(path, pairs["file"])))
            labels.append(1 if pairs["label"] == "jammed" else 0)
    if not images:
        raise UsageError(f"no records listed in {labels_path}")
    return images, np.asarray(labels, dtype=np.int64)


def cmd_train(args) -> int:
    cfg = _config.load_config(args.config, args.set)
    images, labels = _load_bool_dataset(args.data)
    ctm_cfg = _ctm_config(cfg)
    clf = ConvTsetlinClassifier(
        n_clauses=ctm_cfg.n_clauses, threshold=ctm_cfg.threshold,
        specificity=ctm_cfg.specificity, patch_dim=ctm_cfg.patch_dim,
        max_included_literals=ctm_cfg.max_included_literals,
        n_states=ctm_cfg.n_states, epochs=ctm_cfg.epochs, seed=ctm_cfg.seed,
        boost_true_positive=ctm_cfg.boost_true_positive)
    X = np.stack([img.bits for img in images])
    t0 = time.perf_counter()
    clf.fit(X, labels)
    train_s = time.perf_counter() - t0
    os.makedirs(args.out, exist_ok=True)
    model_path = os.path.join(args.out, "model.jgtm")
    nbytes = save_model(clf.model_, model_path)
    _config.write_config(cfg, os.path.join(args.out, "resolved_config.txt"))
    with open(os.path.join(args.out, "train_report.txt"), "w") as fh:
        fh.write(f"train_s={train_s:.3f}\nmodel_bytes={nbytes}\n"
                 f"n_samples={len(images)}\n")
    print(f"trained on {len(images)} samples in {train_s:.1f} s; "
          f"model {nbytes} bytes at {model_path}")
    return 0


def cmd_cv(args) -> int:
    cfg = _config.load_config(args.config, args.set)
    images, labels = _load_bool_dataset(args.data)
    dataset = list(zip([img.bits for img in images], labels))
    report = _evaluate.cross_validate(dataset, _ctm_config(cfg), method=None,
                                      k=cfg["eval.k"], seed=cfg["master_seed"])
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "cv_report.csv"), "w") as fh:
        fh.write(report.metrics_csv())
    with open(os.path.join(args.out, "cv_timing.csv"), "w") as fh:
        fh.write(report.timing_csv())
    with open(os.path.join(args.out, "cv_report.txt"), "w") as fh:
        fh.write(report.table_text())
    _config.write_config(cfg, os.path.join(args.out, "resolved_config.txt"))
    print(report.table_text(), end="")
    print(f"mean accuracy {report.mean['accuracy']:.4f} "
          f"± {report.stddev['accuracy']:.4f} (sample stddev over {report.k} folds)")
    return 0


def cmd_explain(args) -> int:
    model = load_model(args.model)
    heat = literal_heatmap(model)
    os.makedirs(args.out, exist_ok=True)
    written = export_heatmap(heat, os.path.join(args.out, "heatmap"))
    print("wrote " + ", ".join(written))
    return 0


def cmd_fpga(args) -> int:
    cfg = _config.load_config(args.config, args.set)
    profiles = _fpga.emit_profiles(clock_hz=cfg["fpga.clock_hz"],
                                   efficiency=cfg["fpga.efficiency"],
                                   patches_per_sample=cfg["fpga.patches_per_sample"])
    print(_fpga.profiles_text(profiles), end="")
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write(_fpga.profiles_csv(profiles))
        print(f"wrote {args.csv}")
    return 0


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="jamguard",
                     description="PSS jamming-detection workbench")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="key=value config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key (repeatable)")

    p = sub.add_parser("synth", help="synthesize a labeled capture dataset")
    common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--n-pure", type=int, required=True)
    p.add_argument("--n-jam", type=int, required=True)
    p.add_argument("--seed", type=int, default=None, help="override master_seed")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("import", help="ingest external IQ CSVs with a sidecar label file")
    common(p)
    p.add_argument("--csv-dir", required=True)
    p.add_argument("--meta", required=True,
                   help="sidecar: '<file> label=... [snr_db=..] [kind=..] [gain_db=..]' per line")
    p.add_argument("--out", required=True)
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_import)

    p = sub.add_parser("preprocess", help="sync + spectrogram + booleanize a dataset")
    common(p)
    p.add_argument("--data", required=True, help="dataset directory (synth/import output)")
    p.add_argument("--out", required=True)
    p.add_argument("--method", default=None,
                   help="booleanization method override")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train the detector on a preprocessed directory")
    common(p)
    p.add_argument("--data", required=True, help="preprocess output directory")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("cv", help="stratified k-fold cross-validation")
    common(p)
    p.add_argument("--data", required=True, help="preprocess output directory")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("explain", help="per-pixel contribution maps from a model")
    common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("fpga", help="emit FPGA footprint projections")
    common(p)
    p.add_argument("--csv", default=None, help="also write the table as CSV")
    p.set_defaults(func=cmd_fpga)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - deliberate catch-all at the boundary
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

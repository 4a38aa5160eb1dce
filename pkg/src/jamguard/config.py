"""Layered key=value run configuration.

Resolution order: built-in defaults, then an optional config file, then
``--set key=value`` command-line overrides (flags win).  Unknown keys
are rejected.  Every command writes its resolved configuration next to
its outputs so a run can be reproduced from the artifact alone.
"""
from __future__ import annotations

import os
from typing import Any

from .errors import UsageError

# key -> default; the default's type drives parsing
DEFAULTS: dict[str, Any] = {
    "master_seed": 1,

    "signal.sample_rate": 15.625e6,
    "signal.center_freq": 632e6,
    "signal.fft_size": 1024,
    "signal.cp_len": 72,
    "signal.capture_len": 8192,
    "signal.sector_id": 0,
    "signal.snr_db_min": 10.0,
    "signal.snr_db_max": 30.0,
    "signal.gain_db_min": -80.0,
    "signal.gain_db_max": -40.0,
    "signal.gain_db_step": 2.0,
    "signal.jammer_kinds": "cw_tone,gaussian_wideband,pss_replay",
    "signal.jammer_calib_db": 52.0,
    "signal.cfo_max_hz": 5000.0,
    "signal.timing_offset_min": 64,
    "signal.timing_offset_max": 2048,
    "signal.traffic": True,
    "signal.traffic_power_db": -3.0,
    "signal.traffic_bands": "0:300:0,210:80:-7",
    "signal.traffic_duty": 0.7,

    "sync.cfo_grid_step_hz": 100.0,
    "sync.cfo_grid_span_hz": 7500.0,
    "sync.window_len": 72,
    "sync.lag": 1024,

    "spectro.window": "hann",
    "spectro.frames": 100,
    "spectro.side": 100,
    "spectro.crop_center_half": True,
    "spectro.normalize": "log_minmax",

    "binarize.method": "enhanced_otsu",
    "binarize.block_size": 11,
    "binarize.offset": 0.0,
    "binarize.denoise_sigma_mult": 1.0,
    "binarize.variant": "directional",

    "ctm.n_clauses": 200,
    "ctm.threshold": 477,
    "ctm.specificity": 2.081,
    "ctm.patch_h": 10,
    "ctm.patch_w": 10,
    "ctm.max_included_literals": 22,
    "ctm.n_states": 128,
    "ctm.epochs": 10,
    "ctm.boost_true_positive": False,

    "eval.k": 5,

    "fpga.clock_hz": 100e6,
    "fpga.efficiency": 0.8,
    "fpga.patches_per_sample": 8281,
}


def _parse_value(key: str, raw: str) -> Any:
    default = DEFAULTS[key]
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw
    except ValueError:
        raise UsageError(f"config key {key!r}: cannot parse {raw!r} as "
                         f"{type(default).__name__}") from None


def load_config(path: str | os.PathLike | None = None,
                overrides: list[str] | None = None) -> dict[str, Any]:
    """Resolve defaults < file < overrides into one flat dict."""
    cfg = dict(DEFAULTS)

    def apply(key: str, raw: str, where: str):
        key = key.strip()
        if key not in DEFAULTS:
            raise UsageError(f"unknown config key {key!r} ({where})")
        cfg[key] = _parse_value(key, raw)

    if path is not None:
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                key, sep, raw = line.partition("=")
                if not sep:
                    raise UsageError(f"{path}:{lineno}: expected key=value, got {line!r}")
                apply(key, raw, f"{path}:{lineno}")
    for item in overrides or []:
        key, sep, raw = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects key=value, got {item!r}")
        apply(key, raw, "--set")
    return cfg


def write_config(cfg: dict[str, Any], path: str | os.PathLike) -> None:
    with open(path, "w") as fh:
        for key in sorted(cfg):
            fh.write(f"{key} = {cfg[key]}\n")


def jammer_kinds(cfg: dict[str, Any]) -> tuple[str, ...]:
    return tuple(k.strip() for k in cfg["signal.jammer_kinds"].split(",") if k.strip())


def traffic_bands(cfg: dict[str, Any]) -> tuple[tuple[int, int, float], ...]:
    """Parse 'center:width:db,...' into traffic band triples."""
    bands = []
    for part in cfg["signal.traffic_bands"].split(","):
        part = part.strip()
        if not part:
            continue
        try:
            center, width, db = part.split(":")
            bands.append((int(center), int(width), float(db)))
        except ValueError:
            raise UsageError(f"signal.traffic_bands: cannot parse {part!r}; "
                             "expected center:width:db") from None
    return tuple(bands)

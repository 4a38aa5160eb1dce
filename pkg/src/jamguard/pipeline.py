"""Capture -> Boolean image preprocessing chain.

Shared by the CLI ``preprocess`` command and the evaluation harness:
estimate and remove the carrier offset, align the capture to the
estimated symbol start (circular shift, so the frame count is
preserved), image it with the short-time FFT, optionally crop to the
middle half of the band, pool to a square, normalize, booleanize.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from .binarize import BinarizeMethod, BoolImage, booleanize
from .signal import IQBuffer, gen_pss_symbols, map_ssb_grid, ofdm_modulate
from .spectro import (Spectrogram, crop_center_band, default_hop, normalize,
                      resize_square, stft)
from .sync import correct_cfo, default_cfo_grid, estimate_cfo, schmidl_cox


@dataclass(frozen=True)
class PreprocessParams:
    sample_rate: float = 15.625e6
    fft_size: int = 1024
    cp_len: int = 72
    sector_id: int = 0
    cfo_grid_step_hz: float = 100.0
    cfo_grid_span_hz: float = 7500.0
    sc_window: int = 72
    sc_lag: int = 1024
    window: str = "hann"
    frames: int = 100
    side: int = 100
    crop_center_half: bool = True
    normalize_mode: str = "log_minmax"
    method: BinarizeMethod = field(default_factory=BinarizeMethod)

    @classmethod
    def from_config(cls, cfg: dict[str, Any]) -> "PreprocessParams":
        return cls(
            sample_rate=cfg["signal.sample_rate"],
            fft_size=cfg["signal.fft_size"],
            cp_len=cfg["signal.cp_len"],
            sector_id=cfg["signal.sector_id"],
            cfo_grid_step_hz=cfg["sync.cfo_grid_step_hz"],
            cfo_grid_span_hz=cfg["sync.cfo_grid_span_hz"],
            sc_window=cfg["sync.window_len"],
            sc_lag=cfg["sync.lag"],
            window=cfg["spectro.window"],
            frames=cfg["spectro.frames"],
            side=cfg["spectro.side"],
            crop_center_half=cfg["spectro.crop_center_half"],
            normalize_mode=cfg["spectro.normalize"],
            method=BinarizeMethod(
                kind=cfg["binarize.method"],
                block_size=cfg["binarize.block_size"],
                offset=cfg["binarize.offset"],
                denoise_sigma_mult=cfg["binarize.denoise_sigma_mult"],
                variant=cfg["binarize.variant"]))


def reference_waveform(params: PreprocessParams) -> IQBuffer:
    """Locally generated clean PSS symbol used for the CFO search."""
    grid = map_ssb_grid(gen_pss_symbols(params.sector_id))
    return ofdm_modulate(grid, params.fft_size, params.cp_len, params.sample_rate)


def capture_to_spectrogram(iq: IQBuffer, params: PreprocessParams,
                           reference: Optional[IQBuffer] = None
                           ) -> tuple[Spectrogram, dict]:
    """Synchronize and image one capture; returns (image, diagnostics)."""
    if reference is None:
        reference = reference_waveform(params)
    grid = default_cfo_grid(params.cfo_grid_step_hz, params.cfo_grid_span_hz)
    est = estimate_cfo(iq, reference, grid)
    corrected = correct_cfo(iq, est.freq_hz)
    # Align to the SSB start.  The matched-filter lag from the CFO search
    # anchors the PSS itself; the cyclic-prefix metric cannot tell the
    # SSB symbol apart from any other CP-OFDM symbol in a live downlink,
    # so it is computed only as a diagnostic here.
    aligned = IQBuffer(samples=np.roll(corrected.samples, -est.peak_lag),
                       sample_rate=iq.sample_rate, center_freq=iq.center_freq)
    timing = schmidl_cox(corrected, params.sc_window, lag=params.sc_lag,
                         normalization="symmetric")
    hop = default_hop(len(aligned), params.fft_size, params.frames)
    spec = stft(aligned, params.fft_size, hop, window=params.window)
    if params.crop_center_half:
        spec = crop_center_band(spec, 0.5)
    spec = resize_square(spec, params.side)
    spec = normalize(spec, params.normalize_mode)
    diag = {"cfo_hz": est.freq_hz, "timing_offset": est.peak_lag,
            "cp_metric_offset": timing.offset_samples, "hop": hop}
    return spec, diag


def preprocess_capture(iq: IQBuffer, params: PreprocessParams,
                       reference: Optional[IQBuffer] = None
                       ) -> tuple[BoolImage, dict]:
    """Full chain: synchronized spectrogram plus booleanization."""
    spec, diag = capture_to_spectrogram(iq, params, reference)
    return booleanize(spec, params.method), diag

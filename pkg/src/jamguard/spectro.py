"""Time-frequency imaging: STFT magnitude, pooling resize, normalization.

The pipeline turns a synchronized capture into a square magnitude image
(100 x 100 by default): short-time FFT columns with DC centered,
optional crop to the middle half of the band, block-mean pooling down to
the square, then a normalization pass so the binarizers see a fixed
value range.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from scipy.signal import get_window

WINDOWS = ("hann", "hamming", "rect")
NORMALIZE_MODES = ("minmax", "zscore", "log_minmax")


@dataclass
class Spectrogram:
    """H x W nonnegative magnitude image; rows are frequency (low to high),
    columns are time frames."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError("spectrogram values must be 2-D")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


def stft(iq, fft_size: int, hop: int, window: str = "hann") -> Spectrogram:
    """Magnitude STFT with DC-centered frequency axis.

    Column t is |DFT| of the windowed samples [t*hop, t*hop + fft_size).
    """
    if window not in WINDOWS:
        raise ValueError(f"window must be one of {WINDOWS}")
    if hop < 1:
        raise ValueError("hop must be >= 1")
    samples = iq.samples
    if samples.size < fft_size:
        raise ValueError(f"capture of {samples.size} samples shorter than one "
                         f"frame of {fft_size}")
    win = (np.ones(fft_size) if window == "rect"
           else get_window(window, fft_size, fftbins=True))
    n_frames = (samples.size - fft_size) // hop + 1
    starts = np.arange(n_frames) * hop
    frames = samples[starts[:, None] + np.arange(fft_size)] * win
    spec = np.fft.fftshift(np.fft.fft(frames, axis=1), axes=1)
    return Spectrogram(values=np.abs(spec).T)


def default_hop(capture_len: int, fft_size: int, frames: int = 100) -> int:
    """Hop that spreads ``frames`` columns across the capture."""
    hop = (capture_len - fft_size) // (frames - 1)
    return max(hop, 1)


def crop_center_band(spec: Spectrogram, fraction: float = 0.5) -> Spectrogram:
    """Keep the middle ``fraction`` of the frequency rows."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must be in (0, 1]")
    keep = max(1, int(round(spec.height * fraction)))
    lo = (spec.height - keep) // 2
    return Spectrogram(values=spec.values[lo:lo + keep].copy())


def _block_edges(n: int, parts: int) -> np.ndarray:
    return (np.arange(parts + 1) * n) // parts


def resize_square(spec: Spectrogram, side: int = 100) -> Spectrogram:
    """Block-mean pooling onto a side x side grid.

    Blocks partition each axis as evenly as possible.  Upsizing is out
    of scope and rejected.
    """
    h, w = spec.values.shape
    if h < side or w < side:
        raise ValueError(f"cannot upsize {h}x{w} to {side}x{side}")
    re = _block_edges(h, side)
    ce = _block_edges(w, side)
    sums = np.add.reduceat(np.add.reduceat(spec.values, re[:-1], axis=0), ce[:-1], axis=1)
    counts = np.outer(np.diff(re), np.diff(ce))
    return Spectrogram(values=sums / counts)


def normalize(spec: Spectrogram, mode: str = "log_minmax") -> Spectrogram:
    """Map values onto a fixed range; constant images become all-zero.

    minmax -> [0, 1]; zscore -> zero mean, unit variance; log_minmax ->
    log1p then minmax.
    """
    if mode not in NORMALIZE_MODES:
        raise ValueError(f"mode must be one of {NORMALIZE_MODES}")
    v = spec.values
    if not np.all(np.isfinite(v)):
        raise ValueError("spectrogram contains non-finite values")
    if mode == "log_minmax":
        v = np.log1p(v)
    if mode in ("minmax", "log_minmax"):
        lo, hi = v.min(), v.max()
        out = np.zeros_like(v) if hi == lo else (v - lo) / (hi - lo)
    else:
        mu, sd = v.mean(), v.std()
        out = np.zeros_like(v) if sd == 0 else (v - mu) / sd
    return Spectrogram(values=out)


def save_pgm(spec: Spectrogram, path: str | os.PathLike) -> None:
    """8-bit binary PGM (maxval 255), values min-max scaled."""
    v = spec.values
    lo, hi = v.min(), v.max()
    scaled = np.zeros_like(v) if hi == lo else (v - lo) / (hi - lo)
    pixels = np.round(scaled * 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{spec.width} {spec.height}\n255\n".encode())
        fh.write(pixels.tobytes())


def save_csv(spec: Spectrogram, path: str | os.PathLike) -> None:
    np.savetxt(path, spec.values, delimiter=",", fmt="%.17g")


def load_csv(path: str | os.PathLike) -> Spectrogram:
    return Spectrogram(values=np.atleast_2d(np.loadtxt(path, delimiter=",")))

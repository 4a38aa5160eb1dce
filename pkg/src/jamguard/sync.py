"""Carrier-frequency and timing recovery for raw captures.

CFO is found by a blind grid search: derotate the capture by each
candidate frequency, cross-correlate against the locally generated PSS
waveform, and keep the candidate with the largest correlation peak.  The
returned frequency is the rotation present in the capture, so
``correct_cfo(iq, est.freq_hz)`` removes it.

Timing uses the cyclic-prefix repetition metric M(t) = |P(t)|^2 / R(t)^2
with P and R summed over an L-sample window.  The correlation lag
defaults to the window length; pass ``lag=fft_size`` to correlate the
prefix against the symbol tail it was copied from, which is what the
preprocessing pipeline does.
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import fft as _sfft

from .signal import IQBuffer


@dataclass
class CfoEstimate:
    freq_hz: float
    metric: float  # peak correlation magnitude at the winning frequency
    grid: np.ndarray
    peak_lag: int = 0  # lag of the winning correlation peak (reference start)


def default_cfo_grid(step_hz: float = 100.0, span_hz: float = 7500.0) -> np.ndarray:
    """Candidate CFO grid, +-span in `step` increments (half subcarrier
    spacing at 15 kHz SCS by default)."""
    n = int(round(span_hz / step_hz))
    return np.arange(-n, n + 1) * step_hz


def estimate_cfo(iq: IQBuffer, reference: IQBuffer,
                 grid: Sequence[float]) -> CfoEstimate:
    """Grid-search CFO against a local reference waveform.

    For each candidate f the capture is derotated by f and correlated
    with the reference at every lag; the score is the peak correlation
    magnitude.  Ties break toward the smaller |f|, then the smaller f.
    """
    grid = np.asarray(grid, dtype=np.float64)
    if grid.size == 0:
        raise ValueError("CFO grid must be nonempty")
    y = iq.samples
    x = reference.samples
    nfft = _sfft.next_fast_len(y.size + x.size - 1)
    ref_conj = np.conj(np.fft.fft(x, nfft))
    t = np.arange(y.size)
    metrics = np.empty(grid.size)
    lags = np.empty(grid.size, dtype=np.int64)
    for i, f in enumerate(grid):
        derot = y * np.exp(-2j * np.pi * f * t / iq.sample_rate)
        corr = np.abs(np.fft.ifft(np.fft.fft(derot, nfft) * ref_conj))
        lags[i] = np.argmax(corr)
        metrics[i] = corr[lags[i]]
    peak = np.max(metrics)
    ties = np.flatnonzero(metrics == peak)
    order = np.lexsort((grid[ties], np.abs(grid[ties])))
    winner = ties[order[0]]
    return CfoEstimate(freq_hz=float(grid[winner]), metric=float(peak), grid=grid,
                       peak_lag=int(lags[winner]))


def correct_cfo(iq: IQBuffer, freq_hz: float) -> IQBuffer:
    """Remove a carrier offset: multiply by exp(-j 2 pi f n / fs)."""
    if freq_hz == 0.0:
        return IQBuffer(samples=iq.samples.copy(), sample_rate=iq.sample_rate,
                        center_freq=iq.center_freq)
    t = np.arange(len(iq))
    out = iq.samples * np.exp(-2j * np.pi * freq_hz * t / iq.sample_rate)
    return IQBuffer(samples=out, sample_rate=iq.sample_rate, center_freq=iq.center_freq)


@dataclass
class TimingEstimate:
    offset_samples: int
    metric_curve: np.ndarray  # M(t) for t = 0..len-window-lag


def _sliding_sum(x: np.ndarray, width: int) -> np.ndarray:
    """Incremental windowed sum via cumulative sums."""
    c = np.cumsum(x)
    out = c[width - 1:].copy()
    out[1:] -= c[:-width]
    return out


def schmidl_cox(iq: IQBuffer, L: int, lag: Optional[int] = None,
                normalization: str = "trailing") -> TimingEstimate:
    """Cyclic-prefix timing metric M(t) = |P(t)|^2 / R(t)^2.

    P(t) correlates the window [t, t+L) with [t+lag, t+lag+L).  With the
    default ``trailing`` normalization R(t) is the energy of the second
    window; positions with R(t) = 0 get M(t) = 0, and the curve is
    clipped to [0, 1] because the ratio only exceeds 1 through energy
    imbalance between the windows (at signal edges) or float round-off,
    neither of which carries timing information.  ``symmetric`` divides
    by the product of both window energies instead, which is bounded by
    1 outright (Cauchy-Schwarz) and far more robust in noise; the
    preprocessing pipeline uses it.  Ties at the maximum resolve to the
    smallest t.
    """
    if L < 1:
        raise ValueError("window length L must be >= 1")
    if lag is None:
        lag = L
    if lag < 1:
        raise ValueError("lag must be >= 1")
    if normalization not in ("trailing", "symmetric"):
        raise ValueError("normalization must be 'trailing' or 'symmetric'")
    y = iq.samples
    n_t = y.size - lag - L + 1
    if n_t < 1:
        raise ValueError(f"capture of {y.size} samples too short for L={L}, lag={lag}")
    pair = np.conj(y[:y.size - lag]) * y[lag:]
    energy = y.real ** 2 + y.imag ** 2
    p = _sliding_sum(pair, L)[:n_t]
    r = _sliding_sum(energy[lag:], L)[:n_t]
    if normalization == "trailing":
        denom = r * r
    else:
        denom = _sliding_sum(energy, L)[:n_t] * r
    metric = np.zeros(n_t, dtype=np.float64)
    nz = denom > 0
    metric[nz] = (p.real[nz] ** 2 + p.imag[nz] ** 2) / denom[nz]
    np.clip(metric, 0.0, 1.0, out=metric)
    return TimingEstimate(offset_samples=int(np.argmax(metric)), metric_curve=metric)


def extract_pss(iq: IQBuffer, t_off: int, n_fft: int, cp_len: int = 72) -> IQBuffer:
    """Slice the first OFDM symbol: skip the CP from the aligned start,
    keep the next ``n_fft`` samples."""
    start = t_off + cp_len
    stop = start + n_fft
    if t_off < 0 or stop > len(iq):
        raise ValueError(f"slice [{start}, {stop}) out of range for capture of {len(iq)}")
    return IQBuffer(samples=iq.samples[start:stop].copy(),
                    sample_rate=iq.sample_rate, center_freq=iq.center_freq)


def dump_timing_curve(est: TimingEstimate, path: str | os.PathLike) -> None:
    """Diagnostic dump of the timing metric as two-column CSV (t, M)."""
    table = np.column_stack([np.arange(est.metric_curve.size), est.metric_curve])
    np.savetxt(path, table, delimiter=",", header="t,M", comments="", fmt="%.17g")

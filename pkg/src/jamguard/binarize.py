"""Booleanization of spectrograms.

Four methods are provided:

* ``enhanced_otsu`` -- directional Otsu: per-row thresholds on the image
  capture horizontal structure, per-row thresholds on the 90-degree
  rotated image capture vertical structure, OR of both.  A single global
  Otsu threshold is rotation invariant, which would make the OR a no-op,
  so the directional reading is the default; ``variant="global"`` keeps
  the literal one-threshold behaviour for comparison.
* ``paper_original`` -- pixels within ``denoise_sigma_mult`` standard
  deviations of the global mean are flattened to the mean, then
  everything is thresholded at the mean.
* ``multi_level`` -- global Otsu at full resolution OR global Otsu at
  half resolution (2x2 mean pool, nearest-neighbour upsample).
* ``adaptive_gaussian`` -- local Gaussian-weighted mean threshold with an
  odd block size (11 by default) and edge replication at the borders.

Bit true means "feature present": the value sits above its threshold.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import ModelFormatError
from .spectro import Spectrogram

METHOD_KINDS = ("enhanced_otsu", "paper_original", "multi_level", "adaptive_gaussian")

_HIST_BINS = 256


@dataclass
class BoolImage:
    """H x W Boolean image.

    Stored as a plain bool array in memory; the canonical bit-packed form
    (little-endian 64-bit words, rows padded to a word boundary) is used
    for serialization so files are identical across platforms.
    """

    bits: np.ndarray

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=bool)
        if self.bits.ndim != 2:
            raise ValueError("BoolImage bits must be 2-D")

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    def packed(self) -> np.ndarray:
        """Rows packed into little-endian uint64 words, padded per row."""
        words_per_row = (self.width + 63) // 64
        padded = np.zeros((self.height, words_per_row * 64), dtype=bool)
        padded[:, :self.width] = self.bits
        bytes_ = np.packbits(padded, axis=1, bitorder="little")
        return bytes_.view("<u8").reshape(self.height, words_per_row)

    @classmethod
    def from_packed(cls, words: np.ndarray, height: int, width: int) -> "BoolImage":
        words_per_row = (width + 63) // 64
        raw = np.ascontiguousarray(words.reshape(height, words_per_row), dtype="<u8")
        bits = np.unpackbits(raw.view(np.uint8).reshape(height, -1),
                             axis=1, bitorder="little")[:, :width]
        return cls(bits=bits.astype(bool))


_MAGIC = b"JGB1"


def save_bool_image(img: BoolImage, path: str | os.PathLike) -> None:
    """Write the canonical packed form: ``JGB1 <h> <w>\\n`` then raw words."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC + f" {img.height} {img.width}\n".encode())
        fh.write(img.packed().tobytes())


def load_bool_image(path: str | os.PathLike) -> BoolImage:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _MAGIC:
        raise ModelFormatError(f"{path}: bad magic {blob[:4]!r}", 0)
    nl = blob.find(b"\n")
    if nl < 0:
        raise ModelFormatError(f"{path}: missing header line", len(blob))
    try:
        h, w = (int(tok) for tok in blob[4:nl].split())
    except ValueError:
        raise ModelFormatError(f"{path}: malformed dimensions", 4) from None
    words_per_row = (w + 63) // 64
    need = h * words_per_row * 8
    payload = blob[nl + 1:]
    if len(payload) != need:
        raise ModelFormatError(f"{path}: expected {need} payload bytes, got {len(payload)}",
                               nl + 1 + min(len(payload), need))
    words = np.frombuffer(payload, dtype="<u8")
    return BoolImage.from_packed(words, h, w)


# ---------------------------------------------------------------------------
# thresholding primitives

def otsu_threshold(values) -> float:
    """Otsu threshold over a 256-bin histogram of the min-max-scaled input.

    Returns a cut in the original value scale such that ``x > t`` marks
    the upper class.  Ties in between-class variance break toward the
    lower threshold; a constant input returns that constant, so the
    downstream comparison yields all false.
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise ValueError("otsu_threshold needs at least one value")
    vmin = v.min()
    vmax = v.max()
    if vmin == vmax:
        return float(vmin)
    scaled = (v - vmin) / (vmax - vmin)
    idx = np.minimum((scaled * _HIST_BINS).astype(np.int64), _HIST_BINS - 1)
    hist = np.bincount(idx, minlength=_HIST_BINS).astype(np.float64)
    levels = np.arange(_HIST_BINS, dtype=np.float64)
    w0 = np.cumsum(hist)
    m0 = np.cumsum(hist * levels)
    total = w0[-1]
    m_total = m0[-1]
    w1 = total - w0
    valid = (w0 > 0) & (w1 > 0)
    sigma_b = np.full(_HIST_BINS, -1.0)
    mu0 = np.divide(m0, w0, out=np.zeros_like(m0), where=w0 > 0)
    mu1 = np.divide(m_total - m0, w1, out=np.zeros_like(m0), where=w1 > 0)
    sigma_b[valid] = w0[valid] * w1[valid] * (mu0[valid] - mu1[valid]) ** 2
    k = int(np.argmax(sigma_b))  # np.argmax returns the first (lowest) maximizer
    return float(vmin + (vmax - vmin) * (k + 1) / _HIST_BINS)


def _rows_otsu(values: np.ndarray) -> np.ndarray:
    out = np.empty_like(values, dtype=bool)
    for i in range(values.shape[0]):
        out[i] = values[i] > otsu_threshold(values[i])
    return out


def enhanced_otsu(spec: Spectrogram, variant: str = "directional") -> BoolImage:
    """Otsu applied to the image and its 90-degree rotation, OR-combined."""
    if variant == "directional":
        horizontal = _rows_otsu(spec.values)
        vertical = np.rot90(_rows_otsu(np.rot90(spec.values)), -1)
        return BoolImage(bits=horizontal | vertical)
    if variant == "global":
        t = otsu_threshold(spec.values)
        straight = spec.values > t
        rotated_back = np.rot90(np.rot90(spec.values) > t, -1)
        return BoolImage(bits=straight | rotated_back)
    raise ValueError(f"unknown enhanced_otsu variant {variant!r}")


def paper_original(spec: Spectrogram, denoise_sigma_mult: float = 1.0) -> BoolImage:
    """Sigma denoise toward the mean, then threshold at the mean."""
    v = spec.values
    mu = v.mean()
    sd = v.std()
    denoised = np.where(np.abs(v - mu) < denoise_sigma_mult * sd, mu, v)
    return BoolImage(bits=denoised > mu)


def multi_level(spec: Spectrogram) -> BoolImage:
    """Global Otsu at full and half resolution, OR-combined."""
    v = spec.values
    h, w = v.shape
    if h % 2 or w % 2:
        raise ValueError("multi_level needs even image dimensions")
    full = v > otsu_threshold(v)
    pooled = v.reshape(h // 2, 2, w // 2, 2).mean(axis=(1, 3))
    half = pooled > otsu_threshold(pooled)
    upsampled = np.repeat(np.repeat(half, 2, axis=0), 2, axis=1)
    return BoolImage(bits=full | upsampled)


def _gaussian_kernel_1d(block: int) -> np.ndarray:
    # sigma convention of the usual adaptive-threshold implementations
    sigma = 0.3 * ((block - 1) * 0.5 - 1) + 0.8
    x = np.arange(block) - (block - 1) / 2
    k = np.exp(-(x ** 2) / (2 * sigma ** 2))
    return k / k.sum()


def adaptive_gaussian(spec: Spectrogram, block: int = 11, offset: float = 0.0) -> BoolImage:
    """Local Gaussian-weighted mean threshold; borders replicate edges."""
    if block % 2 == 0 or block < 3:
        raise ValueError("block size must be odd and >= 3")
    k = _gaussian_kernel_1d(block)
    local = ndimage.correlate1d(spec.values, k, axis=0, mode="nearest")
    local = ndimage.correlate1d(local, k, axis=1, mode="nearest")
    return BoolImage(bits=spec.values > (local - offset))


@dataclass
class BinarizeMethod:
    """Selected booleanization method plus its knobs."""

    kind: str = "enhanced_otsu"
    block_size: int = 11
    offset: float = 0.0
    denoise_sigma_mult: float = 1.0
    variant: str = "directional"

    def __post_init__(self):
        if self.kind not in METHOD_KINDS:
            raise ValueError(f"unknown method {self.kind!r}; expected one of {METHOD_KINDS}")
        if self.block_size % 2 == 0 or self.block_size < 3:
            raise ValueError("block_size must be odd and >= 3")


def booleanize(spec: Spectrogram, method: BinarizeMethod) -> BoolImage:
    """Dispatch to the selected method."""
    if method.kind == "enhanced_otsu":
        return enhanced_otsu(spec, variant=method.variant)
    if method.kind == "paper_original":
        return paper_original(spec, denoise_sigma_mult=method.denoise_sigma_mult)
    if method.kind == "multi_level":
        return multi_level(spec)
    if method.kind == "adaptive_gaussian":
        return adaptive_gaussian(spec, block=method.block_size, offset=method.offset)
    raise ValueError(f"unknown method {method.kind!r}")  # pragma: no cover


class Booleanizer(BaseEstimator, TransformerMixin):
    """sklearn-style transformer over stacks of spectrogram images.

    Stateless (``fit`` only validates the parameters); ``transform`` maps
    an (n, H, W) float array to an (n, H, W) boolean array with the
    configured method.
    """

    def __init__(self, kind: str = "enhanced_otsu", block_size: int = 11,
                 offset: float = 0.0, denoise_sigma_mult: float = 1.0,
                 variant: str = "directional"):
        self.kind = kind
        self.block_size = block_size
        self.offset = offset
        self.denoise_sigma_mult = denoise_sigma_mult
        self.variant = variant

    def _method(self) -> BinarizeMethod:
        return BinarizeMethod(kind=self.kind, block_size=self.block_size,
                              offset=self.offset,
                              denoise_sigma_mult=self.denoise_sigma_mult,
                              variant=self.variant)

    def fit(self, X, y=None):
        self._method()  # validate parameters
        return self

    def transform(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 2:
            X = X[None]
        method = self._method()
        out = np.empty(X.shape, dtype=bool)
        for i in range(X.shape[0]):
            out[i] = booleanize(Spectrogram(values=X[i]), method).bits
        return out

"""Convolutional Tsetlin machine classifier, built from scratch.

A binary classifier over Boolean images.  Each class owns a bank of
clauses (half positive, half negative polarity); a clause is a
conjunction over patch literals and fires if any sliding-window patch of
the image satisfies it.  Patch literals are the patch pixels, their
negations, and thermometer-coded patch coordinates (with negations).
Training applies the standard two-feedback scheme: Type I strengthens
clauses of the target class toward a randomly chosen matching patch,
Type II teaches clauses of the wrong class literals that veto the match.

The reference implementations in this module (``clause_eval``,
``clause_output_conv``, ``class_sum``) define the semantics and stay in
plain numpy; training and batch inference run through the bit-packed
numba kernels in ``_ctm_kernels``, whose equivalence with the reference
path is pinned by the test suite.
"""
from __future__ import annotations

import io
import os
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from . import rng as _rng
from . import _ctm_kernels as _k
from .binarize import BoolImage
from .errors import ModelFormatError


@dataclass(frozen=True)
class CtmConfig:
    """Hyperparameters; defaults are the tuned operating point."""

    n_clauses: int = 200          # per class, half positive / half negative
    threshold: int = 477          # class-sum clamp T
    specificity: float = 2.081    # feedback selectivity s
    patch_dim: tuple[int, int] = (10, 10)
    max_included_literals: int = 22
    n_states: int = 128           # automaton depth per action side
    seed: int = 0
    epochs: int = 10
    boost_true_positive: bool = False

    def __post_init__(self):
        if self.n_clauses < 2 or self.n_clauses % 2:
            raise ValueError("n_clauses must be even and >= 2")
        if self.threshold < 1:
            raise ValueError("threshold must be >= 1")
        if self.specificity <= 1.0:
            raise ValueError("specificity must be > 1")
        if self.max_included_literals < 1:
            raise ValueError("max_included_literals must be >= 1")
        if self.n_states < 1:
            raise ValueError("n_states must be >= 1")
        if min(self.patch_dim) < 1:
            raise ValueError("patch dimensions must be >= 1")


@dataclass(frozen=True)
class LiteralLayout:
    """Index layout of the literal vector for one (image, patch) geometry.

    Order: patch pixels, negated patch pixels, row thermometer, column
    thermometer, negated row thermometer, negated column thermometer.
    Thermometer bit j of a coordinate v is (v > j), so the patch at
    (0, 0) has all-false coordinate codes and the patch at the maximum
    offset has all-true codes.
    """

    image_shape: tuple[int, int]
    patch_dim: tuple[int, int]

    def __post_init__(self):
        h, w = self.image_shape
        ph, pw = self.patch_dim
        if ph > h or pw > w:
            raise ValueError(f"patch {ph}x{pw} does not fit image {h}x{w}")

    @property
    def n_patch_bits(self) -> int:
        return self.patch_dim[0] * self.patch_dim[1]

    @property
    def n_row_coords(self) -> int:
        return self.image_shape[0] - self.patch_dim[0]

    @property
    def n_col_coords(self) -> int:
        return self.image_shape[1] - self.patch_dim[1]

    @property
    def n_literals(self) -> int:
        return 2 * self.n_patch_bits + 2 * (self.n_row_coords + self.n_col_coords)

    @property
    def n_positions(self) -> tuple[int, int]:
        return (self.image_shape[0] - self.patch_dim[0] + 1,
                self.image_shape[1] - self.patch_dim[1] + 1)

    @property
    def n_patches(self) -> int:
        nr, nc = self.n_positions
        return nr * nc

    def literal_bits(self, patch_pixels: np.ndarray, row: int, col: int) -> np.ndarray:
        pb = patch_pixels.ravel().astype(bool)
        rt = row > np.arange(self.n_row_coords)
        ct = col > np.arange(self.n_col_coords)
        return np.concatenate([pb, ~pb, rt, ct, ~rt, ~ct])


@dataclass
class PatchLiterals:
    """Literal vector for one patch position."""

    bits: np.ndarray  # bool, length layout.n_literals
    row: int
    col: int


def extract_patches(img, patch_dim: tuple[int, int]) -> list[PatchLiterals]:
    """All stride-1 patch literal vectors in row-major position order."""
    bits = img.bits if isinstance(img, BoolImage) else np.asarray(img, dtype=bool)
    layout = LiteralLayout(image_shape=bits.shape, patch_dim=tuple(patch_dim))
    ph, pw = layout.patch_dim
    nr, nc = layout.n_positions
    out = []
    for r in range(nr):
        for c in range(nc):
            out.append(PatchLiterals(
                bits=layout.literal_bits(bits[r:r + ph, c:c + pw], r, c),
                row=r, col=c))
    return out


@dataclass
class Clause:
    """One clause: automaton states per literal plus a polarity sign.

    A literal is included while its state exceeds ``n_states``.
    """

    ta_state: np.ndarray  # int16, length n_literals, values in [1, 2*n_states]
    polarity: int         # +1 or -1
    n_states: int = 128

    def included(self) -> np.ndarray:
        return self.ta_state > self.n_states


def clause_eval(clause: Clause, p: PatchLiterals, inference_mode: bool = False) -> bool:
    """True iff every included literal is true in the patch.

    A clause with no included literals is true during training (so fresh
    clauses receive feedback) and false during inference.
    """
    inc = clause.included()
    if clause.ta_state.size != p.bits.size:
        raise ValueError(f"clause has {clause.ta_state.size} literals, patch has {p.bits.size}")
    if not inc.any():
        return not inference_mode
    return bool(np.all(p.bits[inc]))


def clause_output_conv(clause: Clause, patches: Sequence[PatchLiterals],
                       inference_mode: bool = False) -> bool:
    """OR of the clause over all patch positions."""
    if len(patches) == 0:
        raise ValueError("need at least one patch")
    return any(clause_eval(clause, p, inference_mode) for p in patches)


@dataclass
class CtmModel:
    """Trained (or fresh) model: config, geometry, and both clause banks."""

    config: CtmConfig
    image_shape: tuple[int, int]
    ta_state: np.ndarray  # int16, (2, n_clauses, n_literals)
    class_count: int = 2

    def layout(self) -> LiteralLayout:
        return LiteralLayout(image_shape=self.image_shape,
                             patch_dim=self.config.patch_dim)

    def clause(self, class_id: int, index: int) -> Clause:
        polarity = 1 if index < self.config.n_clauses // 2 else -1
        return Clause(ta_state=self.ta_state[class_id, index], polarity=polarity,
                      n_states=self.config.n_states)

    def clauses(self, class_id: int) -> list[Clause]:
        return [self.clause(class_id, j) for j in range(self.config.n_clauses)]

    def include_counts(self) -> np.ndarray:
        return (self.ta_state > self.config.n_states).sum(axis=2).astype(np.int32)


def new_model(config: CtmConfig, image_shape: tuple[int, int]) -> CtmModel:
    """Fresh model: every automaton starts on the exclude side of the
    boundary, so all clauses are empty."""
    layout = LiteralLayout(image_shape=tuple(image_shape), patch_dim=config.patch_dim)
    ta = np.full((2, config.n_clauses, layout.n_literals), config.n_states,
                 dtype=np.int16)
    return CtmModel(config=config, image_shape=tuple(image_shape), ta_state=ta)


def class_sum(model: CtmModel, class_id: int, patches: Sequence[PatchLiterals],
              inference_mode: bool = True) -> int:
    """Clamped sum of polarity-signed clause outputs (reference path)."""
    if not 0 <= class_id < model.class_count:
        raise ValueError(f"no class {class_id}")
    total = 0
    for j in range(model.config.n_clauses):
        cl = model.clause(class_id, j)
        if clause_output_conv(cl, patches, inference_mode):
            total += cl.polarity
    t = model.config.threshold
    return int(np.clip(total, -t, t))


# ---------------------------------------------------------------------------
# fast paths

def _coord_template(layout: LiteralLayout) -> np.ndarray:
    """Literal-major bitmaps for the coordinate blocks (shared by all
    images of one geometry); patch-bit rows are left zero."""
    nr, nc = layout.n_positions
    n_words = (layout.n_patches + 63) // 64
    rows = np.repeat(np.arange(nr), nc)
    cols = np.tile(np.arange(nc), nr)
    template = np.zeros((layout.n_literals, n_words), dtype=np.uint64)

    def pack(mask: np.ndarray) -> np.ndarray:
        padded = np.zeros(n_words * 64, dtype=bool)
        padded[:mask.size] = mask
        return np.packbits(padded, bitorder="little").view("<u8")

    base = 2 * layout.n_patch_bits
    for j in range(layout.n_row_coords):
        template[base + j] = pack(rows > j)
    base += layout.n_row_coords
    for j in range(layout.n_col_coords):
        template[base + j] = pack(cols > j)
    base += layout.n_col_coords
    for j in range(layout.n_row_coords):
        template[base + j] = pack(rows <= j)
    base += layout.n_row_coords
    for j in range(layout.n_col_coords):
        template[base + j] = pack(cols <= j)
    return template


def _clause_keys(config: CtmConfig) -> np.ndarray:
    keys = np.empty((2, config.n_clauses), dtype=np.uint64)
    for cls in range(2):
        for j in range(config.n_clauses):
            keys[cls, j] = _rng.derive_key(config.seed, _rng.TAG_CLAUSE, cls, j)
    return keys


def _as_image_batch(images, image_shape) -> np.ndarray:
    arrs = []
    for img in images:
        bits = img.bits if isinstance(img, BoolImage) else np.asarray(img, dtype=bool)
        if bits.shape != tuple(image_shape):
            raise ValueError(f"image shape {bits.shape} does not match model "
                             f"shape {tuple(image_shape)}")
        arrs.append(bits)
    return np.ascontiguousarray(np.stack(arrs).astype(np.uint8))


def train_epoch(model: CtmModel, dataset, epoch: int = 0) -> CtmModel:
    """One shuffled pass over ``dataset`` (pairs of image, label in {0, 1}).

    The shuffle and every feedback draw derive from ``config.seed``, the
    epoch index, and per-clause keys, so repeated runs are bit-identical.
    Updates the model in place and returns it.
    """
    images, labels = zip(*dataset)
    labels = np.asarray(labels, dtype=np.int64)
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    batch = _as_image_batch(images, model.image_shape)
    order = _rng.generator(model.config.seed, _rng.TAG_EPOCH, epoch).permutation(len(dataset))
    cfg = model.config
    inc_counts = model.include_counts()
    _k.train_epoch_kernel(
        model.ta_state, inc_counts, _clause_keys(cfg), batch,
        labels, order.astype(np.int64), _coord_template(model.layout()),
        cfg.patch_dim[0], cfg.patch_dim[1], cfg.threshold, cfg.specificity,
        cfg.n_states, cfg.max_included_literals,
        cfg.boost_true_positive, epoch * len(dataset))
    return model


def class_sums(model: CtmModel, images) -> np.ndarray:
    """Inference-mode clamped class sums, shape (n_images, 2)."""
    batch = _as_image_batch(images, model.image_shape)
    out = np.empty((batch.shape[0], 2), dtype=np.int64)
    cfg = model.config
    _k.class_sums_kernel(model.ta_state, batch, _coord_template(model.layout()),
                         cfg.patch_dim[0], cfg.patch_dim[1], cfg.threshold,
                         cfg.n_states, out)
    return out


def predict(model: CtmModel, img) -> int:
    """Argmax class for one image; ties go to the lower class index."""
    return int(predict_batch(model, [img])[0])


def predict_batch(model: CtmModel, images) -> np.ndarray:
    sums = class_sums(model, images)
    # argmax with ties to the lower index
    return (sums[:, 1] > sums[:, 0]).astype(np.int64)


# ---------------------------------------------------------------------------
# serialization: JGTM, version byte, decimal-text config block, raw states

_MAGIC = b"JGTM"
_VERSION = 1


def serialize_model(model: CtmModel) -> bytes:
    cfg = model.config
    fields = [
        ("n_clauses", cfg.n_clauses),
        ("threshold", cfg.threshold),
        ("specificity", repr(cfg.specificity)),
        ("patch_h", cfg.patch_dim[0]),
        ("patch_w", cfg.patch_dim[1]),
        ("max_included_literals", cfg.max_included_literals),
        ("n_states", cfg.n_states),
        ("seed", cfg.seed),
        ("epochs", cfg.epochs),
        ("boost_true_positive", int(cfg.boost_true_positive)),
        ("image_h", model.image_shape[0]),
        ("image_w", model.image_shape[1]),
    ]
    text = "".join(f"{k}={v}\n" for k, v in fields) + "end\n"
    payload = np.ascontiguousarray(model.ta_state, dtype="<i2").tobytes()
    return _MAGIC + bytes([_VERSION]) + text.encode("ascii") + payload


def deserialize_model(blob: bytes, source: str = "<bytes>") -> CtmModel:
    if blob[:4] != _MAGIC:
        raise ModelFormatError(f"{source}: bad magic {blob[:4]!r}", 0)
    if len(blob) < 5 or blob[4] != _VERSION:
        raise ModelFormatError(f"{source}: unsupported version "
                               f"{blob[4] if len(blob) > 4 else 'missing'}", 4)
    pos = 5
    values: dict[str, str] = {}
    while True:
        nl = blob.find(b"\n", pos)
        if nl < 0:
            raise ModelFormatError(f"{source}: unterminated config block", pos)
        line = blob[pos:nl].decode("ascii", errors="replace")
        pos = nl + 1
        if line == "end":
            break
        key, sep, value = line.partition("=")
        if not sep:
            raise ModelFormatError(f"{source}: malformed config line {line!r}",
                                   nl - len(line))
        values[key] = value
    try:
        cfg = CtmConfig(
            n_clauses=int(values["n_clauses"]),
            threshold=int(values["threshold"]),
            specificity=float(values["specificity"]),
            patch_dim=(int(values["patch_h"]), int(values["patch_w"])),
            max_included_literals=int(values["max_included_literals"]),
            n_states=int(values["n_states"]),
            seed=int(values["seed"]),
            epochs=int(values["epochs"]),
            boost_true_positive=bool(int(values["boost_true_positive"])),
        )
        image_shape = (int(values["image_h"]), int(values["image_w"]))
    except (KeyError, ValueError) as exc:
        raise ModelFormatError(f"{source}: bad config block ({exc})", pos) from None
    layout = LiteralLayout(image_shape=image_shape, patch_dim=cfg.patch_dim)
    need = 2 * cfg.n_clauses * layout.n_literals * 2
    payload = blob[pos:]
    if len(payload) != need:
        raise ModelFormatError(f"{source}: expected {need} state bytes, got "
                               f"{len(payload)}", pos + min(len(payload), need))
    ta = np.frombuffer(payload, dtype="<i2").reshape(2, cfg.n_clauses,
                                                     layout.n_literals)
    return CtmModel(config=cfg, image_shape=image_shape,
                    ta_state=ta.astype(np.int16))


def save_model(model: CtmModel, path: str | os.PathLike) -> int:
    """Write the model; returns the serialized size in bytes."""
    blob = serialize_model(model)
    with open(path, "wb") as fh:
        fh.write(blob)
    return len(blob)


def load_model(path: str | os.PathLike) -> CtmModel:
    with open(path, "rb") as fh:
        return deserialize_model(fh.read(), source=str(path))


# ---------------------------------------------------------------------------
# sklearn-style front end

class ConvTsetlinClassifier(BaseEstimator, ClassifierMixin):
    """Binary convolutional Tsetlin machine with the sklearn estimator API.

    ``fit`` expects Boolean images of shape (n, H, W) and labels in
    {0, 1}; ``predict`` returns labels, ``decision_function`` the margin
    sum(class 1) - sum(class 0).  Training is deterministic in ``seed``.
    """

    def __init__(self, n_clauses: int = 200, threshold: int = 477,
                 specificity: float = 2.081, patch_dim: tuple[int, int] = (10, 10),
                 max_included_literals: int = 22, n_states: int = 128,
                 epochs: int = 10, seed: int = 0,
                 boost_true_positive: bool = False):
        self.n_clauses = n_clauses
        self.threshold = threshold
        self.specificity = specificity
        self.patch_dim = patch_dim
        self.max_included_literals = max_included_literals
        self.n_states = n_states
        self.epochs = epochs
        self.seed = seed
        self.boost_true_positive = boost_true_positive

    def _config(self) -> CtmConfig:
        return CtmConfig(
            n_clauses=self.n_clauses, threshold=self.threshold,
            specificity=self.specificity, patch_dim=tuple(self.patch_dim),
            max_included_literals=self.max_included_literals,
            n_states=self.n_states, seed=self.seed, epochs=self.epochs,
            boost_true_positive=self.boost_true_positive)

    def fit(self, X, y):
        X = np.asarray(X, dtype=bool)
        y = np.asarray(y, dtype=np.int64)
        if X.ndim != 3:
            raise ValueError("X must have shape (n_samples, height, width)")
        if y.shape != (X.shape[0],):
            raise ValueError("y must have one label per image")
        config = self._config()
        self.model_ = new_model(config, X.shape[1:])
        dataset = list(zip(X, y))
        for epoch in range(config.epochs):
            train_epoch(self.model_, dataset, epoch)
        self.classes_ = np.array([0, 1])
        return self

    def predict(self, X):
        X = np.asarray(X, dtype=bool)
        if X.ndim == 2:
            X = X[None]
        return predict_batch(self.model_, X)

    def decision_function(self, X):
        X = np.asarray(X, dtype=bool)
        if X.ndim == 2:
            X = X[None]
        sums = class_sums(self.model_, X)
        return (sums[:, 1] - sums[:, 0]).astype(np.float64)

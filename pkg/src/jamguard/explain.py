"""Per-pixel contribution maps from a trained model.

Each included patch-pixel literal votes over every image position its
patch bit can cover (one placement per position); the vote is
polarity * class_sign, negated literals vote with the opposite sign.
Class signs are +1 for the jammed bank, -1 for the pure bank, so
positive map values mean evidence toward "jammed".  Coordinate literals
have no pixel location and are reported as two signed 1-D profiles
instead.  The map is normalized to [-1, 1] by its largest magnitude.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .ctm import CtmModel


@dataclass
class Heatmap:
    values: np.ndarray       # (H, W) signed floats in [-1, 1]
    row_profile: np.ndarray  # signed counts for row-coordinate literals
    col_profile: np.ndarray  # signed counts for column-coordinate literals


def literal_heatmap(model: CtmModel) -> Heatmap:
    """Placement-summed signed inclusion counts per pixel."""
    layout = model.layout()
    h, w = model.image_shape
    ph, pw = layout.patch_dim
    nr, nc = layout.n_positions
    raw = np.zeros((h, w), dtype=np.float64)
    row_prof = np.zeros(layout.n_row_coords, dtype=np.float64)
    col_prof = np.zeros(layout.n_col_coords, dtype=np.float64)
    n_pb = layout.n_patch_bits

    for class_id, class_sign in ((0, -1.0), (1, +1.0)):
        for j in range(model.config.n_clauses):
            clause = model.clause(class_id, j)
            weight = clause.polarity * class_sign
            for k in np.flatnonzero(clause.included()):
                if k < 2 * n_pb:
                    negated = k >= n_pb
                    bit = k - n_pb if negated else k
                    dr, dc = divmod(bit, pw)
                    sign = -weight if negated else weight
                    raw[dr:dr + nr, dc:dc + nc] += sign
                else:
                    c = k - 2 * n_pb
                    blocks = (layout.n_row_coords, layout.n_col_coords,
                              layout.n_row_coords, layout.n_col_coords)
                    for b, size in enumerate(blocks):
                        if c < size:
                            sign = weight if b < 2 else -weight
                            (row_prof if b % 2 == 0 else col_prof)[c] += sign
                            break
                        c -= size

    peak = np.max(np.abs(raw))
    values = raw / peak if peak > 0 else raw
    return Heatmap(values=values, row_profile=row_prof, col_profile=col_prof)


def export_heatmap(h: Heatmap, path_prefix: str | os.PathLike) -> list[str]:
    """Write ``<prefix>.csv`` plus a diverging PGM pair.

    ``<prefix>_pos.pgm`` scales positive values over 0..255 and
    ``<prefix>_neg.pgm`` the magnitudes of negative values; a zero map
    yields two uniformly black images.  Coordinate profiles go to
    ``<prefix>_profiles.csv``.  Returns the written paths.
    """
    prefix = os.fspath(path_prefix)
    csv_path = prefix + ".csv"
    np.savetxt(csv_path, h.values, delimiter=",", fmt="%.17g")

    written = [csv_path]
    for suffix, plane in (("_pos", np.maximum(h.values, 0.0)),
                          ("_neg", np.maximum(-h.values, 0.0))):
        pgm_path = prefix + suffix + ".pgm"
        pixels = np.round(plane * 255).astype(np.uint8)
        with open(pgm_path, "wb") as fh:
            fh.write(f"P5\n{pixels.shape[1]} {pixels.shape[0]}\n255\n".encode())
            fh.write(pixels.tobytes())
        written.append(pgm_path)

    prof_path = prefix + "_profiles.csv"
    with open(prof_path, "w") as fh:
        fh.write("axis,index,value\n")
        for i, v in enumerate(h.row_profile):
            fh.write(f"row,{i},{v:.17g}\n")
        for i, v in enumerate(h.col_profile):
            fh.write(f"col,{i},{v:.17g}\n")
    written.append(prof_path)
    return written


def load_heatmap_csv(path: str | os.PathLike) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(path, delimiter=","))

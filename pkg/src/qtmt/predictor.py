"""Per-CTU partition-path predictions and their sources.

A Prediction mirrors the label maps in soft form: a real-valued QT depth
grid and, per MT level, a 5-class probability grid in the label order
VTT, VBT, NS, HBT, HTT.  Sources: a ground-truth oracle with controllable
degradation, an uninformative uniform baseline, and prediction files
written by the trainer.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError
from .maps import (
    MT_LABEL_OF_SPLIT,
    NUM_MT_LEVELS,
    LabelMaps,
    mt_grid_size,
    qt_grid_size,
)
from .partition import Constraints, CuGeom

NUM_CLASSES = len(MT_LABEL_OF_SPLIT)

MVFP_MAGIC = b"MVFP"
MVFP_VERSION = 1
_HEADER = struct.Struct("<4sHHI")
_RECORD_HEAD = struct.Struct("<IHH")


@dataclass(frozen=True, eq=False)
class Prediction:
    """qt_depth: (n8, n8) float32; mt_probs: (3, n4, n4, 5) float32."""

    qt_depth: np.ndarray
    mt_probs: np.ndarray

    def __post_init__(self):
        if not np.isfinite(self.qt_depth).all():
            raise FormatError("prediction QT depths must be finite")
        if (self.mt_probs < 0).any():
            raise FormatError("prediction probabilities must be >= 0")
        sums = self.mt_probs.sum(axis=-1, dtype=np.float64)
        if not np.allclose(sums, 1.0, atol=1e-5, rtol=0.0):
            raise FormatError("prediction probability rows must sum to 1 within 1e-5")

    @property
    def ctu_size(self) -> int:
        return self.qt_depth.shape[0] * 8


@dataclass(frozen=True)
class NoiseParams:
    """Controlled oracle degradation: label smoothing and depth jitter."""

    eps: float = 0.0
    depth_jitter: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.eps < 1.0):
            raise FormatError("smoothing eps must lie in [0, 1)")
        if self.depth_jitter < 0:
            raise FormatError("depth jitter must be >= 0")


def oracle_predict(maps: LabelMaps, noise: NoiseParams = NoiseParams()) -> Prediction:
    """Ground-truth prediction: exact depths plus jitter, smoothed one-hot probs."""
    rng = np.random.default_rng(noise.seed)
    qt = maps.qt.astype(np.float32)
    if noise.depth_jitter > 0:
        qt = qt + rng.normal(0.0, noise.depth_jitter, size=qt.shape).astype(np.float32)
    probs = np.full(maps.mt.shape + (NUM_CLASSES,), noise.eps / (NUM_CLASSES - 1), dtype=np.float32)
    one_hot = np.eye(NUM_CLASSES, dtype=np.float32)[maps.mt]
    probs = probs * (1.0 - one_hot) + (1.0 - noise.eps) * one_hot
    return Prediction(qt_depth=qt, mt_probs=probs)


def uniform_predict(c: Constraints) -> Prediction:
    """No-information baseline: all probabilities 0.2, depth 0 everywhere."""
    n8, n4 = qt_grid_size(c.ctu_size), mt_grid_size(c.ctu_size)
    return Prediction(
        qt_depth=np.zeros((n8, n8), dtype=np.float32),
        mt_probs=np.full((NUM_MT_LEVELS, n4, n4, NUM_CLASSES), 1.0 / NUM_CLASSES, dtype=np.float32),
    )


def mean_qt_depth(pred: Prediction, geom: CuGeom) -> float:
    """Pixel-area-weighted mean predicted QT depth over the CU.

    4-px-aligned CUs may half-cover 8x8 cells; expanding the map to 4x4
    granularity makes the pixel weighting exact.
    """
    q4 = np.repeat(np.repeat(pred.qt_depth, 2, axis=0), 2, axis=1)
    region = q4[geom.y // 4 : (geom.y + geom.height) // 4, geom.x // 4 : (geom.x + geom.width) // 4]
    return float(region.mean(dtype=np.float64))


def mean_mt_probs(pred: Prediction, geom: CuGeom, level: int) -> np.ndarray:
    """Mean class probabilities over the CU's cells of MT map `level`."""
    region = pred.mt_probs[level][
        geom.y // 4 : (geom.y + geom.height) // 4, geom.x // 4 : (geom.x + geom.width) // 4
    ]
    return region.mean(axis=(0, 1), dtype=np.float64)


# ---------------------------------------------------------------------------
# MVFP prediction files

def _record_size(ctu_size: int) -> int:
    n8, n4 = ctu_size // 8, ctu_size // 4
    return _RECORD_HEAD.size + 4 * n8 * n8 + 4 * NUM_MT_LEVELS * n4 * n4 * NUM_CLASSES


def write_predictions(path, predictions: dict, ctu_size: int) -> None:
    """Write {(poc, ctu_x, ctu_y): Prediction} in the MVFP format."""
    keys = sorted(predictions.keys())
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MVFP_MAGIC, MVFP_VERSION, ctu_size, len(keys)))
        for key in keys:
            pred = predictions[key]
            if pred.ctu_size != ctu_size:
                raise FormatError(f"prediction for {key} has ctu_size {pred.ctu_size}, expected {ctu_size}")
            f.write(_RECORD_HEAD.pack(*key))
            f.write(pred.qt_depth.astype("<f4").tobytes())
            f.write(pred.mt_probs.astype("<f4").tobytes())


def load_predictions(path) -> dict:
    """Read an MVFP file into {(poc, ctu_x, ctu_y): Prediction}.

    Rows whose probability sums drift beyond 1e-3 are rejected; drifts in
    (1e-5, 1e-3] are renormalized, anything tighter is kept bit-for-bit.
    """
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, ctu_size, count = _HEADER.unpack_from(data, 0)
    if magic != MVFP_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != MVFP_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    n8, n4 = ctu_size // 8, ctu_size // 4
    rec_size = _record_size(ctu_size)
    if len(data) != _HEADER.size + count * rec_size:
        raise FormatError(f"{path}: truncated record section ({len(data)} bytes for {count} records)")

    out = {}
    pos = _HEADER.size
    for _ in range(count):
        poc, cx, cy = _RECORD_HEAD.unpack_from(data, pos)
        pos += _RECORD_HEAD.size
        qt = np.frombuffer(data, "<f4", n8 * n8, pos).reshape(n8, n8)
        pos += 4 * n8 * n8
        nmt = NUM_MT_LEVELS * n4 * n4 * NUM_CLASSES
        probs = np.frombuffer(data, "<f4", nmt, pos).reshape(NUM_MT_LEVELS, n4, n4, NUM_CLASSES)
        pos += 4 * nmt
        sums = probs.sum(axis=-1, dtype=np.float64)
        err = np.abs(sums - 1.0).max()
        if err > 1e-3:
            raise FormatError(f"{path}: probability rows off by {err:.2e} in record ({poc},{cx},{cy})")
        if err > 1e-5:
            probs = (probs / sums[..., None]).astype(np.float32)
        key = (poc, cx, cy)
        if key in out:
            raise FormatError(f"{path}: duplicate record key {key}")
        out[key] = Prediction(qt_depth=qt.copy(), mt_probs=np.ascontiguousarray(probs))
    return out

"""Loss-parity files: (inputs, loss) cases exchanged with the trainer.

Little-endian "MVFL": version u16, ctu_size u16, flags u8 (bit0 = mean-
reduced cross-entropy), case count u32.  Per case: a f64, 5 lambda f64,
15 proportion f64, qt_true u8[(ctu/8)^2], qt_pred f32[(ctu/8)^2],
mt_true u8[3*(ctu/4)^2], mt_probs f32[3*(ctu/4)^2*5], loss f64.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError
from .maps import NUM_MT_LEVELS, LabelMaps, mt_grid_size, qt_grid_size
from .metrics import LossWeights
from .predictor import NUM_CLASSES, Prediction

MVFL_MAGIC = b"MVFL"
MVFL_VERSION = 1
_HEADER = struct.Struct("<4sHHBI")


@dataclass
class ParityCase:
    weights: LossWeights
    labels: LabelMaps
    pred: Prediction
    loss: float


def write_parity(path, cases: list[ParityCase], ctu_size: int, mean_ce: bool = False) -> None:
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MVFL_MAGIC, MVFL_VERSION, ctu_size, int(mean_ce), len(cases)))
        for case in cases:
            f.write(struct.pack("<d", case.weights.a))
            f.write(np.asarray(case.weights.lambdas, dtype="<f8").tobytes())
            f.write(np.asarray(case.weights.proportions, dtype="<f8").tobytes())
            f.write(case.labels.qt.astype(np.uint8).tobytes())
            f.write(case.pred.qt_depth.astype("<f4").tobytes())
            f.write(case.labels.mt.astype(np.uint8).tobytes())
            f.write(case.pred.mt_probs.astype("<f4").tobytes())
            f.write(struct.pack("<d", case.loss))


def read_parity(path) -> tuple[list[ParityCase], int, bool]:
    """Returns (cases, ctu_size, mean_ce)."""
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, ctu_size, flags, count = _HEADER.unpack_from(data, 0)
    if magic != MVFL_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != MVFL_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    n8, n4 = qt_grid_size(ctu_size), mt_grid_size(ctu_size)
    case_bytes = (
        8 + 8 * NUM_CLASSES + 8 * NUM_MT_LEVELS * NUM_CLASSES
        + n8 * n8 + 4 * n8 * n8
        + NUM_MT_LEVELS * n4 * n4
        + 4 * NUM_MT_LEVELS * n4 * n4 * NUM_CLASSES
        + 8
    )
    if len(data) != _HEADER.size + count * case_bytes:
        raise FormatError(f"{path}: truncated case section")

    cases = []
    pos = _HEADER.size
    for _ in range(count):
        (a,) = struct.unpack_from("<d", data, pos)
        pos += 8
        lambdas = np.frombuffer(data, "<f8", NUM_CLASSES, pos)
        pos += 8 * NUM_CLASSES
        props = np.frombuffer(data, "<f8", NUM_MT_LEVELS * NUM_CLASSES, pos).reshape(
            NUM_MT_LEVELS, NUM_CLASSES
        )
        pos += 8 * NUM_MT_LEVELS * NUM_CLASSES
        qt_true = np.frombuffer(data, np.uint8, n8 * n8, pos).reshape(n8, n8)
        pos += n8 * n8
        qt_pred = np.frombuffer(data, "<f4", n8 * n8, pos).reshape(n8, n8)
        pos += 4 * n8 * n8
        mt_true = np.frombuffer(data, np.uint8, NUM_MT_LEVELS * n4 * n4, pos).reshape(
            NUM_MT_LEVELS, n4, n4
        )
        pos += NUM_MT_LEVELS * n4 * n4
        nprob = NUM_MT_LEVELS * n4 * n4 * NUM_CLASSES
        mt_probs = np.frombuffer(data, "<f4", nprob, pos).reshape(
            NUM_MT_LEVELS, n4, n4, NUM_CLASSES
        )
        pos += 4 * nprob
        (loss,) = struct.unpack_from("<d", data, pos)
        pos += 8
        cases.append(
            ParityCase(
                weights=LossWeights(a=a, lambdas=tuple(lambdas), proportions=props.copy()),
                labels=LabelMaps(qt=qt_true.copy(), mt=mt_true.copy()),
                pred=Prediction(qt_depth=qt_pred.copy(), mt_probs=mt_probs.copy()),
                loss=loss,
            )
        )
    return cases, ctu_size, bool(flags & 1)

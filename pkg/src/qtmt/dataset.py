"""Training-sample records: binary serialization and generation by running
the exhaustive simulator over a sequence.

One record holds everything the trainer consumes for one CTU at one QP:
luma, motion-compensated residual, the five-scale motion field, QP and
temporal id scalars, and the ground-truth label maps.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError, GeometryError
from .maps import (
    MT_LABEL_OF_SPLIT,
    NUM_MT_LEVELS,
    LabelMaps,
    maps_from_tree,
    mt_grid_size,
    qt_grid_size,
    validate_maps,
)
from .motion import (
    MSMVF_GRID_SIZES,
    Frame,
    MsMvField,
    RefPair,
    build_msmvf,
    full_ctu_origins,
    residual_ctu,
)
from .partition import Constraints
from .rdo import CostModel, CtuCostContext, exhaustive_search

MVFI_MAGIC = b"MVFI"
MVFI_VERSION = 1
_HEADER = struct.Struct("<4sHHI")
MAX_MT_LABEL = max(MT_LABEL_OF_SPLIT.values())


@dataclass(eq=False)
class SampleRecord:
    """One CTU training sample.  Shapes are fixed by ctu_size."""

    luma: np.ndarray       # (ctu, ctu) uint8
    residual: np.ndarray   # (ctu, ctu) int16
    msmvf: MsMvField
    qp: int
    tid: int
    qt_map: np.ndarray     # (ctu/8, ctu/8) uint8
    mt_maps: np.ndarray    # (3, ctu/4, ctu/4) uint8

    @property
    def ctu_size(self) -> int:
        return self.luma.shape[0]

    def label_maps(self) -> LabelMaps:
        return LabelMaps(qt=self.qt_map, mt=self.mt_maps)


def record_num_bytes(ctu_size: int) -> int:
    n8, n4 = qt_grid_size(ctu_size), mt_grid_size(ctu_size)
    mvf_floats = sum(g * g * 6 for g in MSMVF_GRID_SIZES)
    return ctu_size * ctu_size * (1 + 2) + 4 * mvf_floats + 1 + 1 + n8 * n8 + NUM_MT_LEVELS * n4 * n4


def write_samples(path, records, ctu_size: int, config: dict | None = None, meta=None) -> None:
    """Write records in the MVFI format; a JSON sidecar at <path>.json stores
    the generation config plus a per-record (poc, ctu_x, ctu_y, qp) index."""
    records = list(records)
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MVFI_MAGIC, MVFI_VERSION, ctu_size, len(records)))
        for rec in records:
            if rec.ctu_size != ctu_size:
                raise FormatError(f"record ctu_size {rec.ctu_size} does not match file {ctu_size}")
            f.write(rec.luma.astype(np.uint8).tobytes())
            f.write(rec.residual.astype("<i2").tobytes())
            for grid in rec.msmvf.grids:
                f.write(grid.astype("<f4").tobytes())
            f.write(struct.pack("<BB", rec.qp, rec.tid))
            f.write(rec.qt_map.astype(np.uint8).tobytes())
            f.write(rec.mt_maps.astype(np.uint8).tobytes())
    sidecar = {"config": config or {}}
    if meta is not None:
        sidecar["records"] = [
            {"poc": m[0], "ctu_x": m[1], "ctu_y": m[2], "qp": m[3]} for m in meta
        ]
    with open(str(path) + ".json", "w") as f:
        json.dump(sidecar, f, indent=2)


def read_samples(path, validate: bool = True) -> tuple[list[SampleRecord], int]:
    """Read an MVFI file; returns (records, ctu_size).

    Label ranges are always checked; validate=True additionally verifies
    that the stored maps decode to a legal partition.
    """
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, ctu_size, count = _HEADER.unpack_from(data, 0)
    if magic != MVFI_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != MVFI_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    rec_bytes = record_num_bytes(ctu_size)
    if len(data) != _HEADER.size + count * rec_bytes:
        raise FormatError(f"{path}: truncated record section ({len(data)} bytes for {count} records)")

    n8, n4 = qt_grid_size(ctu_size), mt_grid_size(ctu_size)
    c = Constraints(ctu_size=ctu_size)
    out = []
    pos = _HEADER.size
    for i in range(count):
        luma = np.frombuffer(data, np.uint8, ctu_size * ctu_size, pos).reshape(ctu_size, ctu_size)
        pos += ctu_size * ctu_size
        residual = np.frombuffer(data, "<i2", ctu_size * ctu_size, pos).reshape(ctu_size, ctu_size)
        pos += 2 * ctu_size * ctu_size
        grids = []
        for g in MSMVF_GRID_SIZES:
            grids.append(np.frombuffer(data, "<f4", g * g * 6, pos).reshape(g, g, 6).copy())
            pos += 4 * g * g * 6
        qp, tid = struct.unpack_from("<BB", data, pos)
        pos += 2
        qt_map = np.frombuffer(data, np.uint8, n8 * n8, pos).reshape(n8, n8)
        pos += n8 * n8
        mt_maps = np.frombuffer(data, np.uint8, NUM_MT_LEVELS * n4 * n4, pos).reshape(
            NUM_MT_LEVELS, n4, n4
        )
        pos += NUM_MT_LEVELS * n4 * n4
        if qt_map.max(initial=0) > 4 or mt_maps.max(initial=0) > MAX_MT_LABEL:
            raise FormatError(f"{path}: out-of-range label in record {i}")
        rec = SampleRecord(
            luma=luma.copy(),
            residual=residual.copy(),
            msmvf=MsMvField(grids=tuple(grids)),
            qp=qp,
            tid=tid,
            qt_map=qt_map.copy(),
            mt_maps=mt_maps.copy(),
        )
        if validate:
            ok, diag = validate_maps(rec.label_maps(), c)
            if not ok:
                raise FormatError(f"{path}: record {i} labels invalid: {diag}")
        out.append(rec)
    return out, ctu_size


def read_sidecar(path) -> dict:
    with open(str(path) + ".json") as f:
        return json.load(f)


# ---------------------------------------------------------------------------
# GOP structure

@dataclass(frozen=True)
class GopConfig:
    """Reference structure: low_delay (previous frame only) or a hierarchical
    GOP where references come from strictly lower temporal layers."""

    structure: str = "hierarchical"
    gop_size: int = 8

    def __post_init__(self):
        if self.structure not in ("low_delay", "hierarchical"):
            raise GeometryError(f"unknown GOP structure {self.structure!r}")
        if self.gop_size < 1 or (self.gop_size & (self.gop_size - 1)) or self.gop_size > 32:
            raise GeometryError("gop_size must be a power of two <= 32")

    def tid(self, poc: int) -> int:
        if self.structure == "low_delay":
            return 0
        k = poc % self.gop_size
        if k == 0:
            return 0
        levels = self.gop_size.bit_length() - 1
        return levels - (k & -k).bit_length() + 1

    def refs_for(self, poc: int, num_frames: int) -> tuple[int, int | None] | None:
        """(l0_poc, l1_poc or None) or None when the frame has no references."""
        if self.structure == "low_delay":
            return (poc - 1, None) if poc >= 1 else None
        t = self.tid(poc)

        def usable(p):
            return self.tid(p) < t or (t == 0 and self.tid(p) == 0)

        past = [p for p in range(poc - 1, -1, -1) if usable(p)]
        future = [p for p in range(poc + 1, num_frames) if usable(p)]
        if not past:
            return None
        return past[0], (future[0] if future else None)


# ---------------------------------------------------------------------------
# Generation

@dataclass
class GeneratedSample:
    poc: int
    ctu_x: int
    ctu_y: int
    qp: int
    record: SampleRecord
    cost: float


def iter_generated(
    frames: list[Frame],
    qps,
    gop: GopConfig,
    c: Constraints,
    search_range: int = 32,
    model_kwargs: dict | None = None,
):
    """Run the exhaustive search over every (referenced frame, full CTU, qp)
    and yield GeneratedSamples in deterministic (poc, ctu index, qp) order."""
    if len(frames) < 2:
        raise GeometryError("sequence shorter than the GOP structure requires")
    origins = full_ctu_origins(frames[0].width, frames[0].height, c.ctu_size)
    if not origins:
        raise GeometryError(
            f"no full CTUs: {frames[0].width}x{frames[0].height} frame at ctu_size {c.ctu_size}"
        )
    model_kwargs = model_kwargs or {}
    for frame in frames:
        ref_pocs = gop.refs_for(frame.poc, len(frames))
        if ref_pocs is None:
            continue
        l0 = frames[ref_pocs[0]]
        l1 = l0 if ref_pocs[1] is None else frames[ref_pocs[1]]
        refs = RefPair(l0=l0, l1=l1)
        nearest = l0
        if l1 is not l0 and abs(l1.poc - frame.poc) < abs(l0.poc - frame.poc):
            nearest = l1
        tid = gop.tid(frame.poc)
        for origin in origins:
            ctx = CtuCostContext(frame, refs, origin, c, search_range)
            mvf = build_msmvf(frame, refs, origin, search_range, c.ctu_size)
            residual = residual_ctu(frame, nearest, origin, search_range, c.ctu_size)
            x0, y0 = origin
            luma = frame.luma[y0 : y0 + c.ctu_size, x0 : x0 + c.ctu_size].copy()
            for qp in qps:
                model = CostModel(qp=qp, **model_kwargs)
                result = exhaustive_search(frame, refs, origin, model, c, search_range, context=ctx)
                maps = maps_from_tree(result.tree, c)
                rec = SampleRecord(
                    luma=luma,
                    residual=residual,
                    msmvf=mvf,
                    qp=qp,
                    tid=tid,
                    qt_map=maps.qt,
                    mt_maps=maps.mt,
                )
                yield GeneratedSample(
                    poc=frame.poc,
                    ctu_x=x0 // c.ctu_size,
                    ctu_y=y0 // c.ctu_size,
                    qp=qp,
                    record=rec,
                    cost=result.cost,
                )


def generate(
    frames,
    qps,
    gop: GopConfig,
    c: Constraints,
    out_path,
    search_range: int = 32,
    model_kwargs: dict | None = None,
    config: dict | None = None,
) -> list[GeneratedSample]:
    """Generate and write a dataset file; returns the generated samples."""
    samples = list(iter_generated(frames, qps, gop, c, search_range, model_kwargs))
    write_samples(
        out_path,
        [s.record for s in samples],
        c.ctu_size,
        config=config,
        meta=[(s.poc, s.ctu_x, s.ctu_y, s.qp) for s in samples],
    )
    return samples

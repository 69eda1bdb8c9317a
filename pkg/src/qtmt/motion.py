"""Video ingestion, block motion estimation, residuals, and the multi-scale
motion vector field (MSMVF).

Motion search is exhaustive integer-pixel full search over a square window;
out-of-frame reference samples are edge-clamped.  A motion vector (dx, dy)
predicts the current block from ref[y+dy, x+dx].
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import FormatError, GeometryError

MV_NORM = 128.0          # MV components are normalized by the default CTU size
MSMVF_GRID_SIZES = (2, 4, 8, 16, 32)


@dataclass(frozen=True, eq=False)
class Frame:
    """One luma plane.  poc is the display-order picture index."""

    luma: np.ndarray  # (height, width) uint8
    poc: int

    @property
    def width(self) -> int:
        return self.luma.shape[1]

    @property
    def height(self) -> int:
        return self.luma.shape[0]


class MotionVector(NamedTuple):
    dx: int
    dy: int
    sad: int


@dataclass(frozen=True)
class RefPair:
    """Nearest past (l0) and future (l1) references.  l1 duplicates l0 when
    no future reference exists."""

    l0: Frame
    l1: Frame


@dataclass(frozen=True)
class MsMvField:
    """Per-scale motion grids.  grids[k] has shape (g, g, 6) for g in
    2,4,8,16,32; channels are (dx, dy, sad) for L0 then (dx, dy, sad) for L1,
    with dx,dy divided by 128 and sad by (block area * 255)."""

    grids: tuple[np.ndarray, ...]


# ---------------------------------------------------------------------------
# I/O

_Y4M_LUMA_ONLY = {"mono", "400"}
_Y4M_420 = {"420", "420jpeg", "420mpeg2", "420paldv"}


def load_y4m(path) -> list[Frame]:
    """Read an 8-bit YUV4MPEG2 file (4:2:0 or 4:0:0); chroma is discarded."""
    with open(path, "rb") as f:
        data = f.read()
    eol = data.find(b"\n")
    if eol < 0 or not data.startswith(b"YUV4MPEG2"):
        raise FormatError(f"{path}: malformed YUV4MPEG2 header")
    header = data[:eol].decode("ascii", errors="replace").split(" ")
    width = height = None
    colorspace = "420"
    for tok in header[1:]:
        if not tok:
            continue
        if tok[0] == "W":
            width = int(tok[1:])
        elif tok[0] == "H":
            height = int(tok[1:])
        elif tok[0] == "C":
            colorspace = tok[1:]
    if not width or not height:
        raise FormatError(f"{path}: header missing frame dimensions")
    if colorspace in _Y4M_LUMA_ONLY:
        chroma_size = 0
    elif colorspace in _Y4M_420:
        if width % 2 or height % 2:
            raise FormatError(f"{path}: odd dimensions with 4:2:0 chroma")
        chroma_size = (width // 2) * (height // 2) * 2
    else:
        raise FormatError(f"{path}: unsupported colorspace C{colorspace} (8-bit 4:2:0/4:0:0 only)")

    luma_size = width * height
    frames = []
    pos = eol + 1
    while pos < len(data):
        frame_eol = data.find(b"\n", pos)
        if frame_eol < 0 or not data[pos:frame_eol].startswith(b"FRAME"):
            raise FormatError(f"{path}: missing FRAME marker at offset {pos}")
        pos = frame_eol + 1
        if pos + luma_size + chroma_size > len(data):
            raise FormatError(f"{path}: unexpected end of stream in frame {len(frames)}")
        luma = np.frombuffer(data, dtype=np.uint8, count=luma_size, offset=pos)
        frames.append(Frame(luma=luma.reshape(height, width).copy(), poc=len(frames)))
        pos += luma_size + chroma_size
    return frames


def write_y4m(path, frames: list[Frame], fps=(30, 1)) -> None:
    """Write frames as 8-bit 4:2:0 Y4M with neutral (128) chroma."""
    if not frames:
        raise FormatError("cannot write an empty y4m file")
    w, h = frames[0].width, frames[0].height
    chroma = np.full(((h // 2) * (w // 2)), 128, dtype=np.uint8).tobytes()
    with open(path, "wb") as f:
        f.write(f"YUV4MPEG2 W{w} H{h} F{fps[0]}:{fps[1]} Ip A1:1 C420\n".encode())
        for fr in frames:
            if fr.width != w or fr.height != h:
                raise FormatError("frame dimensions differ within the sequence")
            f.write(b"FRAME\n")
            f.write(fr.luma.tobytes())
            f.write(chroma + chroma)


def load_raw_y(path, width: int, height: int) -> list[Frame]:
    """Read raw planar 8-bit luma frames of the given dimensions."""
    if width <= 0 or height <= 0:
        raise FormatError("raw input requires positive width/height")
    with open(path, "rb") as f:
        data = f.read()
    luma_size = width * height
    if len(data) % luma_size:
        raise FormatError(f"{path}: size {len(data)} is not a multiple of {luma_size}")
    return [
        Frame(
            luma=np.frombuffer(data, np.uint8, luma_size, i * luma_size)
            .reshape(height, width)
            .copy(),
            poc=i,
        )
        for i in range(len(data) // luma_size)
    ]


# ---------------------------------------------------------------------------
# Motion search

def clamped_window(plane: np.ndarray, y0: int, x0: int, h: int, w: int) -> np.ndarray:
    """plane[y0:y0+h, x0:x0+w] with out-of-bounds samples edge-clamped."""
    ys = np.clip(np.arange(y0, y0 + h), 0, plane.shape[0] - 1)
    xs = np.clip(np.arange(x0, x0 + w), 0, plane.shape[1] - 1)
    return plane[np.ix_(ys, xs)]


def block_me(cur: Frame, ref: Frame, rect, search_range: int) -> MotionVector:
    """Minimum-SAD integer full search over [-range, range]^2.

    Ties go to the smaller |dx|+|dy|, then smaller dy, then smaller dx.
    """
    x, y, w, h = rect
    if search_range < 0:
        raise GeometryError("search range must be >= 0")
    if x < 0 or y < 0 or x + w > cur.width or y + h > cur.height or w <= 0 or h <= 0:
        raise GeometryError(f"block {rect} out of bounds for {cur.width}x{cur.height} frame")
    r = search_range
    cur_block = cur.luma[y : y + h, x : x + w].astype(np.int32)
    pad = clamped_window(ref.luma, y - r, x - r, h + 2 * r, w + 2 * r).astype(np.int32)
    best = None
    best_mv = None
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            blk = pad[r + dy : r + dy + h, r + dx : r + dx + w]
            sad = int(np.abs(cur_block - blk).sum())
            key = (sad, abs(dx) + abs(dy), dy, dx)
            if best is None or key < best:
                best = key
                best_mv = MotionVector(dx, dy, sad)
    return best_mv


def _integral(a: np.ndarray) -> np.ndarray:
    out = np.zeros((a.shape[0] + 1, a.shape[1] + 1), dtype=np.int64)
    np.cumsum(np.cumsum(a, axis=0), axis=1, out=out[1:, 1:])
    return out


def scan_motion(
    cur_plane: np.ndarray,
    ref_plane: np.ndarray,
    origin,
    ctu_size: int,
    search_range: int,
    sizes,
    want_sse: bool = False,
) -> dict:
    """Full search for every tracked block geometry inside one CTU at once.

    sizes is an iterable of (w, h, stride); for each entry all blocks at
    positions spaced `stride` apart are searched.  Returns a dict keyed by
    (w, h, stride) holding 2D arrays dx, dy, sad (and sse at the chosen
    vector when want_sse), indexed [row, col] over block positions.  The
    per-block results are identical to running block_me block by block.
    """
    x0, y0 = origin
    r = search_range
    cur = cur_plane[y0 : y0 + ctu_size, x0 : x0 + ctu_size].astype(np.int32)
    pad = clamped_window(
        ref_plane, y0 - r, x0 - r, ctu_size + 2 * r, ctu_size + 2 * r
    ).astype(np.int32)

    grids = {}
    index = {}
    for w, h, stride in sizes:
        xs = np.arange(0, ctu_size - w + 1, stride)
        ys = np.arange(0, ctu_size - h + 1, stride)
        shape = (len(ys), len(xs))
        grids[(w, h, stride)] = {
            "sad": np.full(shape, np.iinfo(np.int64).max, dtype=np.int64),
            "key": np.zeros(shape, dtype=np.int64),
            "dx": np.zeros(shape, dtype=np.int32),
            "dy": np.zeros(shape, dtype=np.int32),
        }
        if want_sse:
            grids[(w, h, stride)]["sse"] = np.zeros(shape, dtype=np.int64)
        index[(w, h, stride)] = (
            np.ix_(ys + h, xs + w),
            np.ix_(ys, xs + w),
            np.ix_(ys + h, xs),
            np.ix_(ys, xs),
        )

    k = 2 * r + 1
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            diff = cur - pad[r + dy : r + dy + ctu_size, r + dx : r + dx + ctu_size]
            isad = _integral(np.abs(diff))
            isse = _integral(diff * diff) if want_sse else None
            key = ((abs(dx) + abs(dy)) * k + (dy + r)) * k + (dx + r)
            for sz, g in grids.items():
                i0, i1, i2, i3 = index[sz]
                sad = isad[i0] - isad[i1] - isad[i2] + isad[i3]
                better = (sad < g["sad"]) | ((sad == g["sad"]) & (key < g["key"]))
                if not better.any():
                    continue
                g["sad"][better] = sad[better]
                g["key"][better] = key
                g["dx"][better] = dx
                g["dy"][better] = dy
                if want_sse:
                    sse = isse[i0] - isse[i1] - isse[i2] + isse[i3]
                    g["sse"][better] = sse[better]
    return grids


def _check_full_ctu(cur: Frame, origin, ctu_size: int) -> None:
    x0, y0 = origin
    if x0 < 0 or y0 < 0 or x0 + ctu_size > cur.width or y0 + ctu_size > cur.height:
        raise GeometryError(
            f"partial CTU unsupported: origin {origin} with ctu_size {ctu_size} "
            f"in {cur.width}x{cur.height} frame"
        )


def build_msmvf(
    cur: Frame, refs: RefPair, ctu_origin, search_range: int, ctu_size: int = 128
) -> MsMvField:
    """Motion fields at five scales for one full CTU.

    Grid shapes are fixed at 2x2..32x32 with block size ctu_size/grid; at the
    default 128 CTU the blocks span 64 down to 4 pixels.
    """
    _check_full_ctu(cur, ctu_origin, ctu_size)
    if ctu_size < 32:
        raise GeometryError("build_msmvf requires ctu_size >= 32")
    sizes = [(ctu_size // g, ctu_size // g, ctu_size // g) for g in MSMVF_GRID_SIZES]

    per_list = []
    for ref in (refs.l0, refs.l1):
        if per_list and ref is refs.l0:
            per_list.append(per_list[0])
            continue
        per_list.append(
            scan_motion(cur.luma, ref.luma, ctu_origin, ctu_size, search_range, sizes)
        )

    out = []
    for g, sz in zip(MSMVF_GRID_SIZES, sizes):
        block = ctu_size // g
        area = float(block * block)
        grid = np.empty((g, g, 6), dtype=np.float32)
        for li, scanned in enumerate(per_list):
            res = scanned[sz]
            grid[:, :, 3 * li + 0] = res["dx"] / MV_NORM
            grid[:, :, 3 * li + 1] = res["dy"] / MV_NORM
            grid[:, :, 3 * li + 2] = res["sad"] / (area * 255.0)
        out.append(grid)
    return MsMvField(grids=tuple(out))


def residual_ctu(
    cur: Frame,
    nearest: Frame,
    ctu_origin,
    search_range: int,
    ctu_size: int = 128,
    block: int = 16,
) -> np.ndarray:
    """Motion-compensated residual of one CTU against the nearest frame.

    Compensation runs per 16x16 block (full search, same tie-breaks as
    block_me); returns (ctu_size, ctu_size) int16 original - prediction.
    """
    _check_full_ctu(cur, ctu_origin, ctu_size)
    x0, y0 = ctu_origin
    scanned = scan_motion(
        cur.luma, nearest.luma, ctu_origin, ctu_size, search_range, [(block, block, block)]
    )[(block, block, block)]
    pred = np.empty((ctu_size, ctu_size), dtype=np.int32)
    for by in range(ctu_size // block):
        for bx in range(ctu_size // block):
            dy = int(scanned["dy"][by, bx])
            dx = int(scanned["dx"][by, bx])
            pred[by * block : (by + 1) * block, bx * block : (bx + 1) * block] = clamped_window(
                nearest.luma, y0 + by * block + dy, x0 + bx * block + dx, block, block
            )
    cur_blk = cur.luma[y0 : y0 + ctu_size, x0 : x0 + ctu_size].astype(np.int32)
    return (cur_blk - pred).astype(np.int16)


def full_ctu_origins(width: int, height: int, ctu_size: int) -> list[tuple[int, int]]:
    """Origins of all full (non-partial) CTUs in raster order."""
    return [
        (x, y)
        for y in range(0, height - ctu_size + 1, ctu_size)
        for x in range(0, width - ctu_size + 1, ctu_size)
    ]

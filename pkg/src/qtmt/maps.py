"""Partition-path label maps: one QT depth map plus three MT split maps.

The QT depth map has one cell per 8x8 pixel area; each MT split map has one
cell per 4x4 area, one map per MT level 0..2.  MT labels use the encoding
VTT=0, VBT=1, NS=2, HBT=3, HTT=4.  Cells of CUs that stopped splitting
before reaching an MT level hold NS in that level's map, so NS is always
the "no further split" class.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MapEncodingError
from .partition import (
    Constraints,
    CuGeom,
    PartitionTree,
    SplitType,
    apply_split,
    legal_splits,
    root_geom,
)

QT_CELL = 8
MT_CELL = 4
NUM_MT_LEVELS = 3

MT_LABEL_OF_SPLIT = {
    SplitType.VTT: 0,
    SplitType.VBT: 1,
    SplitType.NS: 2,
    SplitType.HBT: 3,
    SplitType.HTT: 4,
}
SPLIT_OF_MT_LABEL = {v: k for k, v in MT_LABEL_OF_SPLIT.items()}
NS_LABEL = MT_LABEL_OF_SPLIT[SplitType.NS]


def qt_grid_size(ctu_size: int) -> int:
    return ctu_size // QT_CELL


def mt_grid_size(ctu_size: int) -> int:
    return ctu_size // MT_CELL


@dataclass(frozen=True, eq=False)
class LabelMaps:
    """qt: (n8, n8) uint8 depths in [0,4]; mt: (3, n4, n4) uint8 labels."""

    qt: np.ndarray
    mt: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, LabelMaps):
            return NotImplemented
        return np.array_equal(self.qt, other.qt) and np.array_equal(self.mt, other.mt)

    def key(self) -> bytes:
        """Canonical byte form, usable as a dict/set key."""
        return self.qt.tobytes() + self.mt.tobytes()


def _qt_region(geom: CuGeom) -> tuple[slice, slice]:
    return (
        slice(geom.y // QT_CELL, (geom.y + geom.height) // QT_CELL),
        slice(geom.x // QT_CELL, (geom.x + geom.width) // QT_CELL),
    )


def _mt_region(geom: CuGeom) -> tuple[slice, slice]:
    return (
        slice(geom.y // MT_CELL, (geom.y + geom.height) // MT_CELL),
        slice(geom.x // MT_CELL, (geom.x + geom.width) // MT_CELL),
    )


def maps_from_tree(tree: PartitionTree, c: Constraints) -> LabelMaps:
    """Encode a valid partition tree as its label maps."""
    n8, n4 = qt_grid_size(c.ctu_size), mt_grid_size(c.ctu_size)
    qt = np.zeros((n8, n8), dtype=np.uint8)
    mt = np.full((NUM_MT_LEVELS, n4, n4), NS_LABEL, dtype=np.uint8)

    def walk_mt(node):
        if node.split == SplitType.NS:
            return
        mt[node.geom.mt_depth][_mt_region(node.geom)] = MT_LABEL_OF_SPLIT[node.split]
        for ch in node.children:
            walk_mt(ch)

    def walk_qt(node):
        if node.split == SplitType.QT:
            for ch in node.children:
                walk_qt(ch)
        else:
            # QT splitting stops here; this node is 8-aligned by construction.
            qt[_qt_region(node.geom)] = node.geom.qt_depth
            walk_mt(node)

    walk_qt(tree)
    return LabelMaps(qt=qt, mt=mt)


def _rect_str(geom: CuGeom) -> str:
    return f"CU(x={geom.x}, y={geom.y}, w={geom.width}, h={geom.height})"


def tree_from_maps(maps: LabelMaps, c: Constraints) -> PartitionTree:
    """Decode label maps back into the unique partition tree they encode.

    Raises MapEncodingError naming the offending CU rectangle when the maps
    are not a consistent encoding of a legal partition.
    """
    n8, n4 = qt_grid_size(c.ctu_size), mt_grid_size(c.ctu_size)
    if maps.qt.shape != (n8, n8) or maps.mt.shape != (NUM_MT_LEVELS, n4, n4):
        raise MapEncodingError(
            f"map dimensions {maps.qt.shape}/{maps.mt.shape} do not match ctu_size {c.ctu_size}"
        )
    if maps.qt.max(initial=0) > c.max_qt_depth:
        raise MapEncodingError("invalid map encoding: QT depth out of range")
    if maps.mt.max(initial=0) > max(MT_LABEL_OF_SPLIT.values()):
        raise MapEncodingError("invalid map encoding: MT label out of range")

    def decode_mt(geom):
        if geom.mt_depth >= NUM_MT_LEVELS:
            return PartitionTree(geom, SplitType.NS)
        cells = maps.mt[geom.mt_depth][_mt_region(geom)]
        label = int(cells.flat[0])
        if not np.all(cells == label):
            raise MapEncodingError(
                f"invalid map encoding: mixed MT{geom.mt_depth} labels in {_rect_str(geom)}"
            )
        split = SPLIT_OF_MT_LABEL[label]
        if split == SplitType.NS:
            return PartitionTree(geom, SplitType.NS)
        if split not in legal_splits(geom, c):
            raise MapEncodingError(
                f"invalid map encoding: {split.name} not legal for {_rect_str(geom)}"
            )
        children = tuple(decode_mt(g) for g in apply_split(geom, split, c))
        return PartitionTree(geom, split, children)

    def decode_qt(geom):
        cells = maps.qt[_qt_region(geom)]
        if np.all(cells == geom.qt_depth):
            return decode_mt(geom)
        if np.all(cells > geom.qt_depth):
            if SplitType.QT not in legal_splits(geom, c):
                raise MapEncodingError(
                    f"invalid map encoding: QT depth exceeds legal depth in {_rect_str(geom)}"
                )
            children = tuple(decode_qt(g) for g in apply_split(geom, SplitType.QT, c))
            return PartitionTree(geom, SplitType.QT, children)
        raise MapEncodingError(
            f"invalid map encoding: inconsistent QT depths in {_rect_str(geom)}"
        )

    return decode_qt(root_geom(c))


def validate_maps(maps: LabelMaps, c: Constraints) -> tuple[bool, str]:
    """Check that maps encode a legal partition and contain no stale cells.

    Returns (ok, diagnostic).  Dimension mismatches raise, everything else is
    reported in the diagnostic: decode failures cover uniformity/legality,
    and the re-encode comparison catches corrupted cells the decoder never
    reads (e.g. a non-NS deep label under an early NS decision).
    """
    n8, n4 = qt_grid_size(c.ctu_size), mt_grid_size(c.ctu_size)
    if maps.qt.shape != (n8, n8) or maps.mt.shape != (NUM_MT_LEVELS, n4, n4):
        raise MapEncodingError(
            f"map dimensions {maps.qt.shape}/{maps.mt.shape} do not match ctu_size {c.ctu_size}"
        )
    try:
        tree = tree_from_maps(maps, c)
    except MapEncodingError as e:
        return False, str(e)
    if maps_from_tree(tree, c) != maps:
        return False, "invalid map encoding: stale cells outside the decoded partition"
    return True, "ok"

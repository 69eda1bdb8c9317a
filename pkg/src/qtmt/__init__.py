"""Desk-scale QTMT inter-partitioning toolkit.

Partition trees and their QT-depth/MT-split map representation, block
motion features, a toy rate-distortion partition search with prediction-
guided pruning, and the evaluation stack (confusion metrics, BD-rate,
time saving, hybrid loss).
"""

from .errors import FormatError, GeometryError, MapEncodingError, QtmtError
from .partition import Constraints, CuGeom, PartitionTree, SplitType

__all__ = [
    "Constraints",
    "CuGeom",
    "FormatError",
    "GeometryError",
    "MapEncodingError",
    "PartitionTree",
    "QtmtError",
    "SplitType",
]

__version__ = "0.1.0"

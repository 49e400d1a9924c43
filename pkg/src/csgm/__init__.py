"""Two-party detection of scatter-gather money laundering from Bloom-filtered MinHash sketches."""

from .detection import DetectionConfig, Mode, detect_family
from .discovery import Direction, discover_family
from .graph import InstitutionView, Party, TransactionGraph, load_graph, prepare_view
from .protocol import SessionConfig, run_session
from .sgm import detect_sgm
from .sketch import MinHasher, MinHashParams

__all__ = [
    "DetectionConfig",
    "Direction",
    "InstitutionView",
    "MinHashParams",
    "MinHasher",
    "Mode",
    "Party",
    "SessionConfig",
    "TransactionGraph",
    "detect_family",
    "detect_sgm",
    "discover_family",
    "load_graph",
    "prepare_view",
    "run_session",
]

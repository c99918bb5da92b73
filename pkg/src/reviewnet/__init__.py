"""Fake-reviewer detection on temporal reviewer-product graphs."""

from .config import RunConfig, load_config
from .graph import ReviewEvent, TemporalBipartiteGraph, ingest, make_windows, preprocess, snapshot

__version__ = "0.1.0"

__all__ = [
    "ReviewEvent",
    "RunConfig",
    "TemporalBipartiteGraph",
    "ingest",
    "load_config",
    "make_windows",
    "preprocess",
    "snapshot",
]

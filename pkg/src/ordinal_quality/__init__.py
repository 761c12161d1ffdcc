"""Ordinal quality - calibrated one-dimensional quality scores from ORES-style predictions."""
from importlib.metadata import version, PackageNotFoundError

try:
    __version__ = version("ordinal-quality")
except PackageNotFoundError:
    __version__ = "0.1.0"

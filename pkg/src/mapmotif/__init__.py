"""Segment 3D scalar-field maps into critical-point graphs and classify
backbone peak chains into secondary-structure motifs."""

__version__ = "0.1.0"

from mapmotif.mapio import DensityMap, parse_density_map, synthesize_map, write_density_map

__all__ = [
    "DensityMap",
    "parse_density_map",
    "write_density_map",
    "synthesize_map",
    "__version__",
]

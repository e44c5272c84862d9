"""breedkit: a crop-breeding data engine.

Per-plot phenotyping features from multi-sensor UAV-derived layers, yield
prediction from fused cross-domain features, preference-optimization
objectives at verifiable toy scale, and scoring for a three-axis breeding
benchmark over recorded model answers.
"""

from . import bench, errors, fusion, geodata, kb, prefopt, spectral, structural
from .errors import BreedkitError

__version__ = "0.1.0"

__all__ = [
    "BreedkitError",
    "bench",
    "errors",
    "fusion",
    "geodata",
    "kb",
    "prefopt",
    "spectral",
    "structural",
]

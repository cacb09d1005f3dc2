"""Presentation-attack detection via high-frequency texture energy.

A live face crop carries fine texture that a replayed photo-of-a-photo has
lost to blur. The mean absolute 4-neighbor Laplacian over interior pixels
separates the two; the decision threshold is a configuration value
calibrated against a corpus (midpoint of the spoof and live score ranges).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imaging import Image, ImagingError


@dataclass(frozen=True)
class LivenessVerdict:
    score: float
    threshold: float
    is_live: bool


def laplacian_energy(crop: Image) -> float:
    """Mean |4p - left - right - up - down| over interior pixels."""
    if crop.width < 3 or crop.height < 3:
        raise ImagingError("liveness needs at least a 3x3 crop")
    a = crop.array.astype(np.int64)
    lap = (
        4 * a[1:-1, 1:-1]
        - a[1:-1, :-2]
        - a[1:-1, 2:]
        - a[:-2, 1:-1]
        - a[2:, 1:-1]
    )
    return float(np.abs(lap).mean())


def assess_liveness(crop: Image, threshold: float) -> LivenessVerdict:
    score = laplacian_energy(crop)
    return LivenessVerdict(score=score, threshold=threshold, is_live=score >= threshold)

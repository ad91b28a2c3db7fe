"""Semantic-Densepose-Ratio: clothing-type fidelity between a real try-on
and a virtual try-on result.

The ratio of the clothing semantic area S to the upper-body densepose area D
characterizes the clothing type; the distance between the real and virtual
ratios, corrected by the fabric-area and clothing-fit factors computed on the
real side, collapses to the closed form |1 - (D_R * S_V) / (S_R * D_V)|.
"""

from __future__ import annotations

from dataclasses import dataclass

from .annotations import DenseposeMap, LabelMap, region_area, region_intersection_area
from .errors import (
    DegenerateOverlap,
    DimensionMismatch,
    EmptyClothing,
    ZeroBodyArea,
)


@dataclass(frozen=True)
class SdrInputs:
    """Pixel areas of one try-on instance: clothing S, upper body D, overlap."""

    s: int
    d: int
    sd: int

    def __post_init__(self):
        if self.s < 0 or self.d < 0 or self.sd < 0:
            raise ValueError("areas must be non-negative")
        if self.sd > min(self.s, self.d):
            raise ValueError("overlap cannot exceed either region")


def sdr(inputs: SdrInputs) -> float:
    """Clothing-area to body-area ratio S/D."""
    if inputs.d == 0:
        raise ZeroBodyArea("upper-body densepose area is zero")
    return inputs.s / inputs.d


def sdr_factors(inputs: SdrInputs) -> tuple[float, float]:
    """Fabric area factor alpha = D/(S n D) and clothing fit factor
    beta = (S n D)/S."""
    if inputs.s == 0:
        raise EmptyClothing("clothing semantic area is zero")
    if inputs.sd == 0:
        raise DegenerateOverlap("clothing/body overlap is zero")
    return inputs.d / inputs.sd, inputs.sd / inputs.s


def sdr_distance_general(
    a: SdrInputs, b: SdrInputs, alpha: float, beta: float
) -> float:
    """alpha * beta * |S_a/D_a - S_b/D_b| with caller-supplied factors."""
    if a.d == 0 or b.d == 0:
        raise ZeroBodyArea("upper-body densepose area is zero")
    return alpha * beta * abs(a.s / a.d - b.s / b.d)


def sdr_distance(real: SdrInputs, virt: SdrInputs) -> float:
    """Closed form |1 - (D_R * S_V) / (S_R * D_V)|, with the correction
    factors implicitly taken from the real try-on."""
    if real.s == 0:
        raise EmptyClothing("real clothing semantic area is zero")
    if real.d == 0 or virt.d == 0:
        raise ZeroBodyArea("upper-body densepose area is zero")
    return abs(1.0 - (real.d * virt.s) / (real.s * virt.d))


def sdr_inputs_from_maps(parse: LabelMap, densepose: DenseposeMap) -> SdrInputs:
    """Measure S, D and their overlap on one sample's annotation rasters."""
    if (parse.height, parse.width) != (densepose.height, densepose.width):
        raise DimensionMismatch(
            f"parse {parse.width}x{parse.height} vs densepose "
            f"{densepose.width}x{densepose.height}"
        )
    s = region_area(parse, "upper_clothes")
    d = region_area(densepose, densepose.upper_body_parts)
    sd = region_intersection_area(parse, "upper_clothes", densepose)
    return SdrInputs(s=s, d=d, sd=sd)

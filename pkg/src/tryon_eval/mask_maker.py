"""Adaptive mask maker: Check Boundary -> Determine Types -> Create Mask.

Classifies each sample's wearing style from five waist checkpoints and the
torso aspect ratio, then builds the baseline upper-body inpainting mask and
its adaptive variants (bottom-preserving for Interfered samples, lower-
boundary extension for Non-Interfered ones).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np
from PIL import Image, ImageDraw
from scipy import ndimage

from .annotations import (
    AnnotationBundle,
    Keypoints,
    LabelMap,
    RgbImage,
    L_HIP,
    L_SHOULDER,
    MID_HIP,
    R_HIP,
    R_SHOULDER,
)
from .errors import (
    DimensionMismatch,
    EmptyTorsoRegion,
    MissingShoulderKeypoint,
    MissingWaistKeypoint,
    NoValidSamples,
)


class WearingStyle(enum.Enum):
    INTERFERED = "Interfered"
    NON_INTERFERED = "NonInterfered"


@dataclass(frozen=True)
class MaskParams:
    """Thresholds and knobs of the mask pipeline.

    tau_b / tau_t are the checkpoint-count and torso-ratio thresholds;
    prob_adaptive is the probability of swapping in the adaptive mask for
    Non-Interfered training samples; extend_frac_range bounds the downward
    extension as a fraction of torso height.
    """

    tau_b: int = 3
    tau_t: float = 0.65
    prob_adaptive: float = 0.5
    extend_frac_range: tuple[float, float] = (0.15, 0.35)
    dilation_radius: int = 5

    def __post_init__(self):
        if not 0 <= self.tau_b <= 5:
            raise ValueError("tau_b must be in 0..5")
        if self.tau_t <= 0:
            raise ValueError("tau_t must be positive")
        if not 0.0 <= self.prob_adaptive <= 1.0:
            raise ValueError("prob_adaptive must be in [0, 1]")
        low, high = self.extend_frac_range
        if not 0.0 <= low <= high:
            raise ValueError("extend_frac_range must satisfy 0 <= low <= high")
        if self.dilation_radius < 0:
            raise ValueError("dilation_radius must be >= 0")


@dataclass(frozen=True)
class CheckpointSet:
    """Five waist checkpoints as an (5, 2) float array plus validity flags."""

    points: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        flags = np.asarray(self.valid, dtype=bool)
        if pts.shape != (5, 2) or flags.shape != (5,):
            raise ValueError("need exactly 5 checkpoints")
        pts.setflags(write=False)
        flags.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "valid", flags)


@dataclass(frozen=True)
class MaskSpec:
    """Binary try-on mask; 1 marks the region to inpaint."""

    mask: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mask)
        if m.ndim != 2 or m.dtype != bool:
            raise ValueError("mask must be 2-D bool")
        m = np.ascontiguousarray(m)
        m.setflags(write=False)
        object.__setattr__(self, "mask", m)

    @property
    def width(self) -> int:
        return self.mask.shape[1]

    @property
    def height(self) -> int:
        return self.mask.shape[0]

    @property
    def area(self) -> int:
        return int(self.mask.sum())


# The clothing-agnostic person is just an RgbImage with masked pixels filled.
AgnosticImage = RgbImage

DEFAULT_FILL = (128, 128, 128)


def waist_checkpoints(kp: Keypoints) -> CheckpointSet:
    """RHip, MidHip, LHip plus the two midpoints between them."""
    for idx, label in ((R_HIP, "RHip"), (MID_HIP, "MidHip"), (L_HIP, "LHip")):
        if not kp.present(idx):
            raise MissingWaistKeypoint(f"{label} has confidence 0")
    r = np.array(kp.xy(R_HIP))
    m = np.array(kp.xy(MID_HIP))
    l = np.array(kp.xy(L_HIP))
    pts = np.stack([r, (r + m) / 2.0, m, (m + l) / 2.0, l])
    return CheckpointSet(points=pts, valid=np.ones(5, dtype=bool))


def count_checkpoints_in_top(cps: CheckpointSet, parse: LabelMap) -> int:
    """How many valid checkpoints land on an upper_clothes pixel."""
    top = parse.role_mask("upper_clothes")
    count = 0
    for (x, y), ok in zip(cps.points, cps.valid):
        if not ok:
            continue
        col = min(max(int(np.floor(x + 0.5)), 0), parse.width - 1)
        row = min(max(int(np.floor(y + 0.5)), 0), parse.height - 1)
        if top[row, col]:
            count += 1
    return count


def torso_aspect_ratio(parse: LabelMap, kp: Keypoints) -> float:
    """Width/height ratio of the top's bounding box between the shoulders.

    Larger ratio means a shorter garment. Uses inclusive pixel extents, so a
    region spanning columns a..b is (b - a + 1) px wide.
    """
    for idx, label in ((R_SHOULDER, "RShoulder"), (L_SHOULDER, "LShoulder")):
        if not kp.present(idx):
            raise MissingShoulderKeypoint(f"{label} has confidence 0")
    x_r = kp.xy(R_SHOULDER)[0]
    x_l = kp.xy(L_SHOULDER)[0]
    lo = min(max(int(np.floor(min(x_r, x_l) + 0.5)), 0), parse.width - 1)
    hi = min(max(int(np.floor(max(x_r, x_l) + 0.5)), 0), parse.width - 1)
    band = parse.role_mask("upper_clothes")[:, lo : hi + 1]
    rows, cols = np.nonzero(band)
    if rows.size == 0:
        raise EmptyTorsoRegion("no upper_clothes pixels between the shoulders")
    width = int(cols.max() - cols.min() + 1)
    height = int(rows.max() - rows.min() + 1)
    return width / height


def classify_wearing_style(
    count: int, r_t: Optional[float], params: MaskParams
) -> WearingStyle:
    """Checkpoint count above tau_b, or a short garment (ratio >= tau_t),
    means the bottom does not interfere with the top."""
    if not 0 <= count <= 5:
        raise ValueError("checkpoint count must be in 0..5")
    if count > params.tau_b:
        return WearingStyle.NON_INTERFERED
    if r_t is not None and r_t >= params.tau_t:
        return WearingStyle.NON_INTERFERED
    return WearingStyle.INTERFERED


def classify_bundle(bundle: AnnotationBundle, params: MaskParams) -> WearingStyle:
    """Full Check Boundary + Determine Types pipeline for one sample."""
    cps = waist_checkpoints(bundle.keypoints)
    count = count_checkpoints_in_top(cps, bundle.parse)
    try:
        r_t = torso_aspect_ratio(bundle.parse, bundle.keypoints)
    except (EmptyTorsoRegion, MissingShoulderKeypoint):
        r_t = None
    return classify_wearing_style(count, r_t, params)


@dataclass(frozen=True)
class CalibrationResult:
    tau_t: float
    n_used: int
    n_skipped: int


def calibrate_tau_t(bundles) -> CalibrationResult:
    """Mean torso aspect ratio over the dataset (the tau_t convention)."""
    ratios = []
    skipped = 0
    for bundle in bundles:
        try:
            ratios.append(torso_aspect_ratio(bundle.parse, bundle.keypoints))
        except (EmptyTorsoRegion, MissingShoulderKeypoint):
            skipped += 1
    if not ratios:
        raise NoValidSamples("no bundle yielded a defined torso ratio")
    return CalibrationResult(
        tau_t=float(np.mean(ratios)), n_used=len(ratios), n_skipped=skipped
    )


def _convex_hull(points: np.ndarray) -> np.ndarray:
    """Monotone-chain hull; tolerates duplicates and collinear input."""
    pts = np.unique(np.asarray(points, dtype=np.float64), axis=0)
    if len(pts) <= 2:
        return pts
    pts = pts[np.lexsort((pts[:, 1], pts[:, 0]))]

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1])


def _fill_polygon(points: np.ndarray, width: int, height: int) -> np.ndarray:
    hull = _convex_hull(points)
    canvas = Image.new("L", (width, height), 0)
    draw = ImageDraw.Draw(canvas)
    xy = [(float(x), float(y)) for x, y in hull]
    if len(xy) == 1:
        draw.point(xy, fill=1)
    elif len(xy) == 2:
        draw.line(xy, fill=1)
    else:
        draw.polygon(xy, fill=1, outline=1)
    return np.asarray(canvas, dtype=bool)


def _disk(radius: int) -> np.ndarray:
    if radius == 0:
        return np.ones((1, 1), dtype=bool)
    span = np.arange(-radius, radius + 1)
    yy, xx = np.meshgrid(span, span, indexing="ij")
    return xx * xx + yy * yy <= radius * radius


def make_baseline_mask(bundle: AnnotationBundle, params: MaskParams) -> MaskSpec:
    """Whole-upper-body mask: dilated top + arms + shoulder/hip quad, with
    face and hair always carved back out."""
    kp = bundle.keypoints
    for idx, label in ((R_SHOULDER, "RShoulder"), (L_SHOULDER, "LShoulder")):
        if not kp.present(idx):
            raise MissingShoulderKeypoint(f"{label} has confidence 0")
    for idx, label in ((R_HIP, "RHip"), (L_HIP, "LHip")):
        if not kp.present(idx):
            raise MissingWaistKeypoint(f"{label} has confidence 0")

    parse = bundle.parse
    top = parse.role_mask("upper_clothes")
    mask = ndimage.binary_dilation(top, structure=_disk(params.dilation_radius))
    mask |= parse.role_mask("arms")
    quad = np.array(
        [kp.xy(R_SHOULDER), kp.xy(L_SHOULDER), kp.xy(L_HIP), kp.xy(R_HIP)]
    )
    mask |= _fill_polygon(quad, parse.width, parse.height)
    mask &= ~(parse.role_mask("face") | parse.role_mask("hair"))
    return MaskSpec(mask=mask)


def _torso_height(kp: Keypoints) -> float:
    shoulder_y = (kp.xy(R_SHOULDER)[1] + kp.xy(L_SHOULDER)[1]) / 2.0
    hip_y = (kp.xy(R_HIP)[1] + kp.xy(L_HIP)[1]) / 2.0
    return abs(shoulder_y - hip_y)


def _extend_columns_down(mask: np.ndarray, delta: int) -> np.ndarray:
    """Grow each non-empty column's lowest masked pixel down by delta rows."""
    if delta <= 0:
        return mask.copy()
    h, w = mask.shape
    out = mask.copy()
    any_col = mask.any(axis=0)
    # lowest masked row per column = h - 1 - argmax over the flipped column
    lowest = h - 1 - np.argmax(mask[::-1, :], axis=0)
    for col in np.nonzero(any_col)[0]:
        stop = min(lowest[col] + delta, h - 1)
        out[lowest[col] : stop + 1, col] = True
    return out


def _adaptive_from_rng(
    bundle: AnnotationBundle,
    style: WearingStyle,
    params: MaskParams,
    rng: np.random.Generator,
) -> tuple[MaskSpec, dict]:
    baseline = make_baseline_mask(bundle, params)
    parse = bundle.parse
    meta: dict = {"style": style.value}
    if style is WearingStyle.INTERFERED:
        adaptive = baseline.mask & ~parse.role_mask("lower_clothes")
        meta.update({"delta": 0, "fraction": None, "bottom_preserved": True})
        return MaskSpec(mask=adaptive), meta

    low, high = params.extend_frac_range
    fraction = float(rng.uniform(low, high)) if high > low else float(low)
    delta = int(round(fraction * _torso_height(bundle.keypoints)))
    extended = _extend_columns_down(baseline.mask, delta)
    # the extension may eat into the bottom garment's top edge on purpose;
    # everything below it stays untouched, and face/hair stay protected
    extended &= ~(parse.role_mask("face") | parse.role_mask("hair"))
    meta.update(
        {"delta": delta, "fraction": fraction, "bottom_preserved_below_extension": True}
    )
    return MaskSpec(mask=extended), meta


def make_adaptive_mask(
    bundle: AnnotationBundle,
    style: WearingStyle,
    params: MaskParams,
    rng_seed: int,
) -> tuple[MaskSpec, dict]:
    """Bottom-preserving mask for Interfered; seeded downward extension of the
    baseline's lower boundary for Non-Interfered."""
    rng = np.random.default_rng(rng_seed)
    spec, meta = _adaptive_from_rng(bundle, style, params, rng)
    meta["seed"] = rng_seed
    return spec, meta


def apply_mask(
    image: RgbImage, mask: MaskSpec, fill: tuple[int, int, int] = DEFAULT_FILL
) -> AgnosticImage:
    """Replace masked pixels with the fill color, keep the rest byte-exact."""
    if (image.height, image.width) != (mask.height, mask.width):
        raise DimensionMismatch(
            f"image {image.width}x{image.height} vs mask {mask.width}x{mask.height}"
        )
    out = image.pixels.copy()
    out[mask.mask] = np.asarray(fill, dtype=np.uint8)
    return RgbImage(pixels=out)


def plan_training_mask(
    bundle: AnnotationBundle,
    params: MaskParams,
    rng_seed: int,
    fill: tuple[int, int, int] = DEFAULT_FILL,
) -> tuple[MaskSpec, AgnosticImage, dict]:
    """Pick the training mask for one sample and describe the choice.

    Interfered samples always get the bottom-preserving mask; Non-Interfered
    samples get the adaptive extension with probability prob_adaptive (seeded),
    otherwise the baseline mask.
    """
    style = classify_bundle(bundle, params)
    rng = np.random.default_rng(rng_seed)
    if style is WearingStyle.INTERFERED:
        spec, meta = _adaptive_from_rng(bundle, style, params, rng)
        meta["used_adaptive"] = False
    else:
        use_adaptive = bool(rng.uniform() < params.prob_adaptive)
        if use_adaptive:
            spec, meta = _adaptive_from_rng(bundle, style, params, rng)
        else:
            spec = make_baseline_mask(bundle, params)
            meta = {"style": style.value, "delta": 0, "fraction": None}
        meta["used_adaptive"] = use_adaptive
    meta["seed"] = rng_seed
    agnostic = apply_mask(bundle.image, spec, fill)
    return spec, agnostic, meta


def choose_training_mask(
    bundle: AnnotationBundle,
    params: MaskParams,
    rng_seed: int,
    fill: tuple[int, int, int] = DEFAULT_FILL,
) -> tuple[MaskSpec, AgnosticImage, WearingStyle, bool]:
    spec, agnostic, meta = plan_training_mask(bundle, params, rng_seed, fill)
    return spec, agnostic, WearingStyle(meta["style"]), bool(meta["used_adaptive"])


def save_mask_png(spec: MaskSpec, path) -> None:
    Image.fromarray(spec.mask.astype(np.uint8) * 255, mode="L").save(path, format="PNG")


def save_rgb_png(image: RgbImage, path) -> None:
    Image.fromarray(image.pixels, mode="RGB").save(path, format="PNG")

"""Annotation formats (OpenPose keypoints, parsing label maps, densepose maps)
and the pixel-region primitives built on top of them.

Everything here is immutable after construction and safe to share across
workers: loaders return frozen dataclasses wrapping read-only numpy arrays.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Union

import numpy as np
from PIL import Image

from .errors import (
    DimensionMismatch,
    MalformedFile,
    NoPersonDetected,
    PartIndexOutOfRange,
    UnknownRole,
    UnsupportedBitDepth,
)

# OpenPose BODY_25 keypoint indices used by the toolkit.
NOSE = 0
NECK = 1
R_SHOULDER = 2
R_ELBOW = 3
R_WRIST = 4
L_SHOULDER = 5
L_ELBOW = 6
L_WRIST = 7
MID_HIP = 8
R_HIP = 9
L_HIP = 12

NUM_KEYPOINTS = 25

ROLES = (
    "upper_clothes",
    "lower_clothes",
    "dress",
    "face",
    "hair",
    "arms",
    "background",
    "other",
)

# CIHP/ATR-style default ids; dress ids are folded into upper_clothes so a
# dress counts as "the top". Override per dataset via a schema config.
DEFAULT_SCHEMA_IDS: Mapping[str, frozenset] = {
    "upper_clothes": frozenset({5, 6, 7}),
    "lower_clothes": frozenset({9, 12}),
    "dress": frozenset(),
    "face": frozenset({13}),
    "hair": frozenset({2}),
    "arms": frozenset({14, 15}),
    "background": frozenset({0}),
    "other": frozenset(),
}

# Densepose 24-part convention: 1,2 torso; 15..22 arm segments.
DEFAULT_UPPER_BODY_PARTS = frozenset({1, 2}) | frozenset(range(15, 23))

MAX_DENSEPOSE_PART = 24


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Keypoints:
    """25 BODY_25 keypoints as an (25, 3) array of (x, y, confidence)."""

    points: np.ndarray
    image_w: int
    image_h: int

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.shape != (NUM_KEYPOINTS, 3):
            raise MalformedFile(
                f"expected {NUM_KEYPOINTS} keypoints, got shape {pts.shape}"
            )
        object.__setattr__(self, "points", _readonly(pts))

    def present(self, index: int) -> bool:
        return self.points[index, 2] > 0.0

    def xy(self, index: int) -> tuple[float, float]:
        return float(self.points[index, 0]), float(self.points[index, 1])

    @classmethod
    def from_flat(cls, values, image_w: int, image_h: int) -> "Keypoints":
        """Build from a flat 75-float list, clamping coordinates in bounds."""
        arr = np.asarray(values, dtype=np.float64)
        if arr.size != NUM_KEYPOINTS * 3:
            raise MalformedFile(
                f"expected {NUM_KEYPOINTS * 3} numbers, got {arr.size}"
            )
        pts = arr.reshape(NUM_KEYPOINTS, 3).copy()
        pts[:, 0] = np.clip(pts[:, 0], 0.0, image_w - 1)
        pts[:, 1] = np.clip(pts[:, 1], 0.0, image_h - 1)
        return cls(points=pts, image_w=image_w, image_h=image_h)


@dataclass(frozen=True)
class LabelSchema:
    """role -> parsing-label-id set. Sets must be pairwise disjoint."""

    roles: Mapping[str, frozenset]

    def __post_init__(self):
        roles = {name: frozenset(self.roles.get(name, frozenset())) for name in ROLES}
        extra = set(self.roles) - set(ROLES)
        if extra:
            raise UnknownRole(f"unknown roles in schema: {sorted(extra)}")
        seen: dict[int, str] = {}
        for name, ids in roles.items():
            for i in ids:
                if i in seen:
                    raise ValueError(
                        f"label id {i} assigned to both {seen[i]!r} and {name!r}"
                    )
                seen[i] = name
        object.__setattr__(self, "roles", roles)

    @classmethod
    def default(cls) -> "LabelSchema":
        return cls(DEFAULT_SCHEMA_IDS)

    def ids_for(self, role: str) -> frozenset:
        if role not in self.roles:
            raise UnknownRole(f"unknown role {role!r}")
        return self.roles[role]

    @property
    def union(self) -> frozenset:
        out: frozenset = frozenset()
        for ids in self.roles.values():
            out |= ids
        return out


@dataclass(frozen=True)
class LabelMap:
    """Row-major 8-bit parsing label grid plus its schema."""

    labels: np.ndarray
    schema: LabelSchema
    unknown_ids: Mapping[int, int] = field(default_factory=dict)

    def __post_init__(self):
        grid = np.asarray(self.labels)
        if grid.ndim != 2 or grid.dtype != np.uint8:
            raise MalformedFile("label grid must be 2-D uint8")
        object.__setattr__(self, "labels", _readonly(grid))
        object.__setattr__(self, "unknown_ids", dict(self.unknown_ids))

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    def role_mask(self, role: str) -> np.ndarray:
        """Boolean mask of pixels whose label belongs to `role`.

        `other` covers declared other-ids plus every id outside the schema.
        """
        ids = self.schema.ids_for(role)
        mask = np.isin(self.labels, sorted(ids)) if ids else np.zeros(
            self.labels.shape, dtype=bool
        )
        if role == "other":
            mask |= ~np.isin(self.labels, sorted(self.schema.union))
        return mask


@dataclass(frozen=True)
class DenseposeMap:
    """Row-major densepose part-index grid (0 background, 1..24 parts)."""

    parts: np.ndarray
    upper_body_parts: frozenset = DEFAULT_UPPER_BODY_PARTS

    def __post_init__(self):
        grid = np.asarray(self.parts)
        if grid.ndim != 2 or grid.dtype != np.uint8:
            raise MalformedFile("densepose grid must be 2-D uint8")
        if grid.size and int(grid.max()) > MAX_DENSEPOSE_PART:
            raise PartIndexOutOfRange(
                f"part index {int(grid.max())} > {MAX_DENSEPOSE_PART}"
            )
        ubp = frozenset(int(p) for p in self.upper_body_parts)
        if 0 in ubp:
            raise ValueError("upper_body_parts must not include background (0)")
        object.__setattr__(self, "parts", _readonly(grid))
        object.__setattr__(self, "upper_body_parts", ubp)

    @property
    def width(self) -> int:
        return self.parts.shape[1]

    @property
    def height(self) -> int:
        return self.parts.shape[0]

    def part_mask(self, part_ids: Iterable[int]) -> np.ndarray:
        ids = sorted(int(p) for p in part_ids)
        if not ids:
            return np.zeros(self.parts.shape, dtype=bool)
        return np.isin(self.parts, ids)


@dataclass(frozen=True)
class RgbImage:
    """8-bit RGB raster."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3 or px.dtype != np.uint8:
            raise MalformedFile("image must be (H, W, 3) uint8")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise MalformedFile("image must be non-empty")
        object.__setattr__(self, "pixels", _readonly(px))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True)
class AnnotationBundle:
    """One sample's image plus its three annotation rasters.

    Construction is lenient about dimensions; use `validate_bundle` to get a
    findings report before feeding a bundle to the metric pipeline.
    """

    sample_id: str
    image: RgbImage
    keypoints: Keypoints
    parse: LabelMap
    densepose: DenseposeMap


# --- loaders ---


def load_keypoints(path, image_w: int, image_h: int) -> Keypoints:
    """Read OpenPose JSON (`people[0].pose_keypoints_2d`, 75 floats)."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise MalformedFile(f"{path}: {e}") from e
    if not isinstance(doc, dict):
        raise MalformedFile(f"{path}: top-level JSON must be an object")
    people = doc.get("people")
    if not isinstance(people, list):
        raise MalformedFile(f"{path}: missing `people` list")
    if len(people) == 0:
        raise NoPersonDetected(f"{path}: empty `people`")
    flat = people[0].get("pose_keypoints_2d")
    if not isinstance(flat, list):
        raise MalformedFile(f"{path}: missing `pose_keypoints_2d`")
    try:
        return Keypoints.from_flat(flat, image_w, image_h)
    except MalformedFile as e:
        raise MalformedFile(f"{path}: {e}") from e


def _load_indexed_png(path) -> np.ndarray:
    try:
        img = Image.open(path)
        img.load()
    except (OSError, Image.UnidentifiedImageError, SyntaxError) as e:
        raise MalformedFile(f"{path}: {e}") from e
    if img.mode in ("I", "I;16", "I;16B", "I;16L", "F", "RGB", "RGBA"):
        raise UnsupportedBitDepth(f"{path}: mode {img.mode}, need 8-bit single-channel")
    if img.mode not in ("L", "P"):
        raise UnsupportedBitDepth(f"{path}: mode {img.mode}, need 8-bit single-channel")
    # For paletted PNGs the palette indices are the labels.
    return np.asarray(img.convert("L") if img.mode == "L" else img, dtype=np.uint8)


def load_label_map(path, schema: LabelSchema | None = None) -> LabelMap:
    """Load a parsing label PNG; ids outside the schema are tallied as other."""
    schema = schema or LabelSchema.default()
    grid = _load_indexed_png(path)
    known = schema.union
    values, counts = np.unique(grid, return_counts=True)
    unknown = {int(v): int(c) for v, c in zip(values, counts) if int(v) not in known}
    return LabelMap(labels=grid, schema=schema, unknown_ids=unknown)


def save_label_map(label_map: LabelMap, path) -> None:
    Image.fromarray(label_map.labels, mode="L").save(path, format="PNG")


def load_densepose(path, upper_body_parts: Iterable[int] | None = None) -> DenseposeMap:
    grid = _load_indexed_png(path)
    parts = (
        frozenset(upper_body_parts)
        if upper_body_parts is not None
        else DEFAULT_UPPER_BODY_PARTS
    )
    if grid.size and int(grid.max()) > MAX_DENSEPOSE_PART:
        raise PartIndexOutOfRange(
            f"{path}: part index {int(grid.max())} > {MAX_DENSEPOSE_PART}"
        )
    return DenseposeMap(parts=grid, upper_body_parts=parts)


def load_rgb_image(path) -> RgbImage:
    try:
        img = Image.open(path)
        img.load()
    except (OSError, Image.UnidentifiedImageError, SyntaxError) as e:
        raise MalformedFile(f"{path}: {e}") from e
    return RgbImage(pixels=np.asarray(img.convert("RGB"), dtype=np.uint8))


# --- region primitives ---

RegionMap = Union[LabelMap, DenseposeMap]


def region_area(m: RegionMap, selector) -> int:
    """Exact pixel count of a role (LabelMap) or part-id set (DenseposeMap)."""
    if isinstance(m, LabelMap):
        if not isinstance(selector, str):
            raise UnknownRole(f"label map selector must be a role name, got {selector!r}")
        return int(m.role_mask(selector).sum())
    if isinstance(m, DenseposeMap):
        if isinstance(selector, str):
            raise UnknownRole("densepose selector must be a part-id set")
        return int(m.part_mask(selector).sum())
    raise TypeError(f"unsupported map type {type(m)!r}")


def region_intersection_area(
    parse: LabelMap,
    role: str,
    densepose: DenseposeMap,
    part_ids: Iterable[int] | None = None,
) -> int:
    """Pixels selected both by `role` in the parse and by the part set."""
    if (parse.height, parse.width) != (densepose.height, densepose.width):
        raise DimensionMismatch(
            f"parse {parse.width}x{parse.height} vs densepose "
            f"{densepose.width}x{densepose.height}"
        )
    parts = densepose.upper_body_parts if part_ids is None else part_ids
    return int((parse.role_mask(role) & densepose.part_mask(parts)).sum())


# --- validation ---


@dataclass(frozen=True)
class Finding:
    code: str
    message: str


@dataclass(frozen=True)
class BundleReport:
    sample_id: str
    findings: tuple

    @property
    def ok(self) -> bool:
        return not self.findings


def validate_bundle(bundle: AnnotationBundle) -> BundleReport:
    """Report dimension mismatches, missing waist keypoints, empty top region."""
    findings = []
    ref = (bundle.image.width, bundle.image.height)
    for name, dims in (
        ("keypoints", (bundle.keypoints.image_w, bundle.keypoints.image_h)),
        ("parse", (bundle.parse.width, bundle.parse.height)),
        ("densepose", (bundle.densepose.width, bundle.densepose.height)),
    ):
        if dims != ref:
            findings.append(
                Finding(
                    "DimensionMismatch",
                    f"{name} is {dims[0]}x{dims[1]}, image is {ref[0]}x{ref[1]}",
                )
            )
    for idx, label in ((MID_HIP, "MidHip"), (R_HIP, "RHip"), (L_HIP, "LHip")):
        if not bundle.keypoints.present(idx):
            findings.append(
                Finding("MissingWaistKeypoint", f"{label} has confidence 0")
            )
    if region_area(bundle.parse, "upper_clothes") == 0:
        findings.append(Finding("EmptyUpperClothes", "no upper_clothes pixels"))
    return BundleReport(sample_id=bundle.sample_id, findings=tuple(findings))

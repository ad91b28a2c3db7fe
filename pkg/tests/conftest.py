"""Synthetic person fixtures: keypoints, parse maps, densepose maps and images
with controllable garment geometry, plus dataset-tree writers for harness and
CLI tests."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest
from PIL import Image, ImageDraw

from tryon_eval.annotations import (
    AnnotationBundle,
    DenseposeMap,
    Keypoints,
    LabelMap,
    LabelSchema,
    RgbImage,
)

W, H = 96, 128

# fixture body plan (x, y) in a 96x128 frame
KP = {
    0: (48, 12),   # nose
    2: (30, 30),   # RShoulder
    3: (22, 52),   # RElbow
    4: (16, 76),   # RWrist
    5: (66, 30),   # LShoulder
    6: (74, 52),   # LElbow
    7: (82, 76),   # LWrist
    8: (48, 86),   # MidHip
    9: (38, 86),   # RHip
    12: (58, 86),  # LHip
}

UPPER = 5
LOWER = 9
FACE = 13
HAIR = 2
ARM_LABEL = 14

TORSO_X = (28, 68)
TORSO_TOP = 26


def make_keypoints(
    present=None, w: int = W, h: int = H, conf: float = 0.9, moves=None
) -> Keypoints:
    """Keypoints with the fixture body plan; `present` restricts which ids are
    visible, `moves` overrides positions."""
    pts = np.zeros((25, 3))
    present = set(KP) if present is None else set(present)
    moves = moves or {}
    for idx, (x, y) in KP.items():
        if idx in present:
            x, y = moves.get(idx, (x, y))
            pts[idx] = (x, y, conf)
    return Keypoints(points=pts, image_w=w, image_h=h)


def _band(draw: ImageDraw.ImageDraw, pts, width: int, value: int) -> None:
    draw.line([tuple(map(float, p)) for p in pts], fill=value, width=width)


def make_parse(
    hem: int = 96,
    sleeves: bool = True,
    lower_top: int = 98,
    schema: LabelSchema | None = None,
    w: int = W,
    h: int = H,
) -> LabelMap:
    """Parse map: torso garment down to `hem`, optional sleeves, bottom
    garment from `lower_top`, plus face and hair."""
    img = Image.new("L", (w, h), 0)
    draw = ImageDraw.Draw(img)
    draw.rectangle([TORSO_X[0], TORSO_TOP, TORSO_X[1], hem], fill=UPPER)
    if sleeves:
        _band(draw, [KP[5], KP[6], KP[7]], 9, UPPER)
        _band(draw, [KP[2], KP[3], KP[4]], 9, UPPER)
    if lower_top < h:
        draw.rectangle([32, lower_top, 64, h - 8], fill=LOWER)
    draw.rectangle([40, 2, 56, 8], fill=HAIR)
    draw.rectangle([42, 9, 54, 20], fill=FACE)
    return LabelMap(
        labels=np.asarray(img, dtype=np.uint8),
        schema=schema or LabelSchema.default(),
    )


def make_densepose(w: int = W, h: int = H, body: bool = True) -> DenseposeMap:
    """Torso rectangle as part 1 and arm bands as parts 15/16. The torso wins
    where they overlap (shoulder roots), as in real part maps."""
    img = Image.new("L", (w, h), 0)
    if body:
        draw = ImageDraw.Draw(img)
        _band(draw, [KP[5], KP[6], KP[7]], 11, 15)
        _band(draw, [KP[2], KP[3], KP[4]], 11, 16)
        draw.rectangle([TORSO_X[0], TORSO_TOP, TORSO_X[1], 90], fill=1)
    return DenseposeMap(parts=np.asarray(img, dtype=np.uint8))


def make_image(seed: int = 0, w: int = W, h: int = H) -> RgbImage:
    rng = np.random.default_rng(seed)
    return RgbImage(pixels=rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8))


def make_bundle(
    sample_id: str = "s0",
    seed: int = 0,
    hem: int = 96,
    sleeves: bool = True,
    lower_top: int = 98,
    present=None,
    w: int = W,
    h: int = H,
) -> AnnotationBundle:
    return AnnotationBundle(
        sample_id=sample_id,
        image=make_image(seed, w, h),
        keypoints=make_keypoints(present, w, h),
        parse=make_parse(hem, sleeves, lower_top, w=w, h=h),
        densepose=make_densepose(w, h),
    )


@pytest.fixture
def bundle() -> AnnotationBundle:
    return make_bundle()


def random_valid_keypoints(rng: np.random.Generator, w: int = W, h: int = H) -> Keypoints:
    """Random but anatomically ordered keypoints with everything present."""
    jitter = lambda: float(rng.uniform(-6, 6))  # noqa: E731
    moves = {idx: (x + jitter(), y + jitter()) for idx, (x, y) in KP.items()}
    return make_keypoints(moves=moves, w=w, h=h)


# --- dataset tree writers ---


def write_keypoints_json(kp: Keypoints, path: Path) -> None:
    flat = [float(v) for row in kp.points for v in row]
    path.write_text(
        json.dumps({"version": 1.3, "people": [{"pose_keypoints_2d": flat}]}),
        encoding="utf-8",
    )


def write_sample(root: Path, sample_id: str, bundle: AnnotationBundle) -> None:
    for sub in ("image", "parse", "densepose", "openpose"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    Image.fromarray(bundle.image.pixels, "RGB").save(root / "image" / f"{sample_id}.png")
    Image.fromarray(bundle.parse.labels, "L").save(root / "parse" / f"{sample_id}.png")
    Image.fromarray(bundle.densepose.parts, "L").save(
        root / "densepose" / f"{sample_id}.png"
    )
    write_keypoints_json(bundle.keypoints, root / "openpose" / f"{sample_id}.json")


def write_dataset(
    root: Path, sample_ids, pairs, make_virtual=None
) -> None:
    """Real samples for every id plus generated entries for every pair.

    `make_virtual(model_id, clothing_id)` defaults to a bundle identical to
    the clothing sample, i.e. a perfect try-on."""
    bundles = {sid: make_bundle(sid, seed=i) for i, sid in enumerate(sample_ids)}
    for sid, b in bundles.items():
        write_sample(root, sid, b)
    for model_id, clothing_id in pairs:
        virt = (
            make_virtual(model_id, clothing_id)
            if make_virtual
            else bundles[clothing_id]
        )
        write_sample(root / "generated", f"{model_id}_{clothing_id}", virt)

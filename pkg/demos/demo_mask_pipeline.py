"""Walk the adaptive mask maker end to end on a synthetic person.

Builds a small annotated sample, classifies its wearing style, then renders
the baseline mask, the bottom-preserving (Interfered) mask and the extended
(Non-Interfered) mask plus the clothing-agnostic person image into
demos/output/.
"""

from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw

from tryon_eval import (
    AnnotationBundle,
    DenseposeMap,
    Keypoints,
    LabelMap,
    LabelSchema,
    MaskParams,
    RgbImage,
    WearingStyle,
    apply_mask,
    make_adaptive_mask,
    make_baseline_mask,
)
from tryon_eval.mask_maker import classify_bundle, save_mask_png, save_rgb_png

OUT = Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

W, H = 192, 256

# A stick figure: shoulders, elbows, wrists, hips. Everything else missing.
points = np.zeros((25, 3))
for idx, (x, y) in {
    2: (60, 60), 3: (44, 104), 4: (32, 152),   # right arm
    5: (132, 60), 6: (148, 104), 7: (164, 152),  # left arm
    8: (96, 172), 9: (76, 172), 12: (116, 172),  # hips
}.items():
    points[idx] = (x, y, 0.9)
kp = Keypoints(points=points, image_w=W, image_h=H)

# Parse map: a mid-length top, pants below, face and hair above.
parse_img = Image.new("L", (W, H), 0)
draw = ImageDraw.Draw(parse_img)
draw.rectangle([56, 52, 136, 180], fill=5)          # upper clothes
draw.line([(132, 60), (148, 104), (164, 152)], fill=5, width=18)
draw.line([(60, 60), (44, 104), (32, 152)], fill=5, width=18)
draw.rectangle([64, 181, 128, 248], fill=9)         # pants
draw.rectangle([80, 4, 112, 16], fill=2)            # hair
draw.rectangle([84, 17, 108, 40], fill=13)          # face
parse = LabelMap(labels=np.asarray(parse_img, dtype=np.uint8), schema=LabelSchema.default())

# Densepose: torso part plus arm parts for the visibility filter.
dp_img = Image.new("L", (W, H), 0)
draw = ImageDraw.Draw(dp_img)
draw.line([(132, 60), (148, 104), (164, 152)], fill=15, width=22)
draw.line([(60, 60), (44, 104), (32, 152)], fill=16, width=22)
draw.rectangle([56, 52, 136, 184], fill=1)
densepose = DenseposeMap(parts=np.asarray(dp_img, dtype=np.uint8))

rng = np.random.default_rng(0)
image = RgbImage(pixels=rng.integers(40, 216, size=(H, W, 3), dtype=np.uint8))

bundle = AnnotationBundle(
    sample_id="demo", image=image, keypoints=kp, parse=parse, densepose=densepose
)

params = MaskParams()
style = classify_bundle(bundle, params)
print(f"wearing style: {style.value}")

baseline = make_baseline_mask(bundle, params)
print(f"baseline mask area: {baseline.area} px")
save_mask_png(baseline, OUT / "mask_baseline.png")

interfered, meta_i = make_adaptive_mask(bundle, WearingStyle.INTERFERED, params, rng_seed=0)
print(f"bottom-preserving mask area: {interfered.area} px ({meta_i})")
save_mask_png(interfered, OUT / "mask_interfered.png")

extended, meta_n = make_adaptive_mask(bundle, WearingStyle.NON_INTERFERED, params, rng_seed=0)
print(f"extended mask area: {extended.area} px (delta {meta_n['delta']} px)")
save_mask_png(extended, OUT / "mask_extended.png")

agnostic = apply_mask(bundle.image, extended)
save_rgb_png(agnostic, OUT / "agnostic_person.png")
print(f"wrote PNGs to {OUT}")

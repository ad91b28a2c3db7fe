import numpy as np
import pytest
from PIL import Image

from tryon_eval.annotations import AnnotationBundle, LabelMap, LabelSchema, RgbImage
from tryon_eval.errors import (
    DimensionMismatch,
    EmptyTorsoRegion,
    MissingShoulderKeypoint,
    MissingWaistKeypoint,
    NoValidSamples,
)
from tryon_eval.mask_maker import (
    MaskParams,
    MaskSpec,
    WearingStyle,
    apply_mask,
    calibrate_tau_t,
    choose_training_mask,
    classify_wearing_style,
    count_checkpoints_in_top,
    make_adaptive_mask,
    make_baseline_mask,
    plan_training_mask,
    save_mask_png,
    torso_aspect_ratio,
    waist_checkpoints,
)

from conftest import (
    HAIR,
    FACE,
    LOWER,
    UPPER,
    make_bundle,
    make_image,
    make_keypoints,
    make_parse,
)


def parse_from_grid(grid: np.ndarray) -> LabelMap:
    return LabelMap(labels=grid.astype(np.uint8), schema=LabelSchema.default())


class TestWaistCheckpoints:
    def test_midpoint_arithmetic(self):
        kp = make_keypoints(
            w=384, h=512,
            moves={9: (100, 300), 8: (150, 300), 12: (200, 300)},
        )
        cps = waist_checkpoints(kp)
        assert cps.points[:, 0].tolist() == [100, 125, 150, 175, 200]
        assert set(cps.points[:, 1].tolist()) == {300}

    def test_coincident_hips(self):
        kp = make_keypoints(moves={9: (50, 60), 8: (50, 60), 12: (50, 60)})
        cps = waist_checkpoints(kp)
        assert np.allclose(cps.points, [[50, 60]] * 5)

    def test_missing_midhip(self):
        kp = make_keypoints(present={2, 3, 4, 5, 6, 7, 9, 12})
        with pytest.raises(MissingWaistKeypoint):
            waist_checkpoints(kp)


class TestCountCheckpoints:
    def test_all_background(self):
        kp = make_keypoints()
        cps = waist_checkpoints(kp)
        assert count_checkpoints_in_top(cps, parse_from_grid(np.zeros((128, 96)))) == 0

    def test_top_everywhere(self):
        kp = make_keypoints()
        cps = waist_checkpoints(kp)
        grid = np.full((128, 96), UPPER)
        assert count_checkpoints_in_top(cps, parse_from_grid(grid)) == 5

    def test_exactly_three_inside(self):
        # checkpoints land at x = 38, 43, 48, 53, 58 (y=86); paint the top
        # over x in [41, 55] so only points 1, 2, 3 hit it
        kp = make_keypoints()
        cps = waist_checkpoints(kp)
        grid = np.zeros((128, 96))
        grid[86, 41:56] = UPPER
        assert count_checkpoints_in_top(cps, parse_from_grid(grid)) == 3


class TestTorsoAspectRatio:
    def test_hand_measured_bbox(self):
        # 130 px wide x 200 px tall restricted region -> 0.65
        grid = np.zeros((512, 384))
        grid[100:300, 100:230] = UPPER
        kp = make_keypoints(w=384, h=512, moves={2: (90, 80), 5: (300, 80)})
        assert torso_aspect_ratio(parse_from_grid(grid), kp) == pytest.approx(0.65)

    def test_square_region(self):
        grid = np.zeros((128, 96))
        grid[30:70, 30:70] = UPPER
        kp = make_keypoints(moves={2: (20, 30), 5: (80, 30)})
        assert torso_aspect_ratio(parse_from_grid(grid), kp) == pytest.approx(1.0)

    def test_empty_between_shoulders(self):
        grid = np.zeros((128, 96))
        grid[40:60, 2:6] = UPPER  # garment entirely outside the shoulder band
        kp = make_keypoints(moves={2: (30, 30), 5: (66, 30)})
        with pytest.raises(EmptyTorsoRegion):
            torso_aspect_ratio(parse_from_grid(grid), kp)

    def test_missing_shoulder(self):
        kp = make_keypoints(present={3, 4, 5, 6, 7, 8, 9, 12})
        with pytest.raises(MissingShoulderKeypoint):
            torso_aspect_ratio(parse_from_grid(np.zeros((128, 96))), kp)


class TestClassifyWearingStyle:
    def test_count_above_threshold_wins(self):
        params = MaskParams(tau_b=3)
        for r_t in (None, 0.1, 2.0):
            assert classify_wearing_style(4, r_t, params) is WearingStyle.NON_INTERFERED

    def test_short_type_non_interfered(self):
        params = MaskParams(tau_b=3, tau_t=0.65)
        assert classify_wearing_style(2, 0.80, params) is WearingStyle.NON_INTERFERED

    def test_long_type_interfered(self):
        params = MaskParams(tau_b=3, tau_t=0.65)
        assert classify_wearing_style(2, 0.50, params) is WearingStyle.INTERFERED

    def test_undefined_ratio_is_conservative(self):
        params = MaskParams()
        assert classify_wearing_style(0, None, params) is WearingStyle.INTERFERED

    def test_matches_literal_transcription(self):
        # exhaustive grid around the thresholds
        params = MaskParams(tau_b=3, tau_t=0.65)

        def eq1(count, r_t):
            if count > 3:
                return WearingStyle.NON_INTERFERED
            if r_t >= 0.65:
                return WearingStyle.NON_INTERFERED
            return WearingStyle.INTERFERED

        for count in range(6):
            for r_t in (0.64, 0.65, 0.66):
                assert classify_wearing_style(count, r_t, params) is eq1(count, r_t)


class TestCalibrate:
    def _bundle_with_ratio(self, width, height):
        # region of `width` x `height` px between far-apart shoulders
        grid = np.zeros((256, 192))
        grid[50 : 50 + height, 40 : 40 + width] = UPPER
        kp = make_keypoints(w=192, h=256, moves={2: (10, 50), 5: (180, 50)})
        b = make_bundle(w=192, h=256)
        return AnnotationBundle(
            sample_id="c", image=make_image(w=192, h=256),
            keypoints=kp, parse=parse_from_grid(grid), densepose=b.densepose,
        )

    def test_single_bundle_identity(self):
        result = calibrate_tau_t([self._bundle_with_ratio(70, 100)])
        assert result.tau_t == pytest.approx(0.7)

    def test_mean_of_two(self):
        bundles = [self._bundle_with_ratio(50, 100), self._bundle_with_ratio(80, 100)]
        result = calibrate_tau_t(bundles)
        assert result.tau_t == pytest.approx(0.65)
        assert result.n_used == 2

    def test_all_undefined(self):
        b = make_bundle()
        empty = AnnotationBundle(
            sample_id="e", image=b.image, keypoints=b.keypoints,
            parse=parse_from_grid(np.zeros((128, 96))), densepose=b.densepose,
        )
        with pytest.raises(NoValidSamples):
            calibrate_tau_t([empty])


def brute_force_dilate(mask: np.ndarray, radius: int) -> np.ndarray:
    """Independent O(HW r^2) dilation oracle."""
    h, w = mask.shape
    out = np.zeros_like(mask, dtype=bool)
    ys, xs = np.nonzero(mask)
    for y, x in zip(ys, xs):
        for dy in range(-radius, radius + 1):
            for dx in range(-radius, radius + 1):
                if dy * dy + dx * dx <= radius * radius:
                    yy, xx = y + dy, x + dx
                    if 0 <= yy < h and 0 <= xx < w:
                        out[yy, xx] = True
    return out


class TestBaselineMask:
    def test_face_pixels_never_masked(self, bundle):
        spec = make_baseline_mask(bundle, MaskParams())
        face = bundle.parse.role_mask("face")
        hair = bundle.parse.role_mask("hair")
        assert not (spec.mask & (face | hair)).any()

    # keypoints whose shoulder/hip quad is the axis-aligned [30..66]x[30..86]
    RECT_MOVES = {9: (30, 86), 8: (48, 86), 12: (66, 86)}

    def test_set_algebra_matches_scan_oracle(self):
        # no arms in the parse: mask must equal dilated-top | quad minus face/hair
        params = MaskParams(dilation_radius=3)
        parse = make_parse(hem=80, sleeves=False)
        b = make_bundle()
        bundle = AnnotationBundle(
            sample_id="x", image=b.image,
            keypoints=make_keypoints(moves=self.RECT_MOVES),
            parse=parse, densepose=b.densepose,
        )
        spec = make_baseline_mask(bundle, params)
        top = parse.role_mask("upper_clothes")
        quad = np.zeros_like(top)
        quad[30:87, 30:67] = True  # axis-aligned shoulder/hip rectangle
        oracle = brute_force_dilate(top, 3) | quad
        oracle &= ~(parse.role_mask("face") | parse.role_mask("hair"))
        assert np.array_equal(spec.mask, oracle)

    def test_all_background_parse_gives_quad_only(self):
        b = make_bundle()
        parse = parse_from_grid(np.zeros((128, 96)))
        bundle = AnnotationBundle(
            sample_id="x", image=b.image,
            keypoints=make_keypoints(moves=self.RECT_MOVES),
            parse=parse, densepose=b.densepose,
        )
        spec = make_baseline_mask(bundle, MaskParams())
        quad = np.zeros((128, 96), dtype=bool)
        quad[30:87, 30:67] = True
        assert np.array_equal(spec.mask, quad)

    def test_top_always_covered(self, bundle):
        spec = make_baseline_mask(bundle, MaskParams())
        top = bundle.parse.role_mask("upper_clothes")
        assert (spec.mask | ~top).all()

    def test_missing_hip_rejected(self):
        b = make_bundle(present={2, 3, 4, 5, 6, 7, 8, 12})
        with pytest.raises(MissingWaistKeypoint):
            make_baseline_mask(b, MaskParams())


class TestAdaptiveMask:
    def test_interfered_subtracts_lower_clothes(self):
        # bottom garment overlapping the baseline mask area
        bundle = make_bundle(hem=96, lower_top=84)
        params = MaskParams()
        baseline = make_baseline_mask(bundle, params)
        lower = bundle.parse.role_mask("lower_clothes")
        inside = int((baseline.mask & lower).sum())
        assert inside > 0
        spec, meta = make_adaptive_mask(bundle, WearingStyle.INTERFERED, params, 0)
        assert spec.area == baseline.area - inside
        assert not (spec.mask & lower).any()

    def test_zero_extension_identity(self):
        bundle = make_bundle()
        params = MaskParams(extend_frac_range=(0.0, 0.0))
        baseline = make_baseline_mask(bundle, params)
        spec, meta = make_adaptive_mask(bundle, WearingStyle.NON_INTERFERED, params, 0)
        assert np.array_equal(spec.mask, baseline.mask)
        assert meta["delta"] == 0

    def test_same_seed_byte_identical(self, tmp_path, bundle):
        params = MaskParams()
        a, _ = make_adaptive_mask(bundle, WearingStyle.NON_INTERFERED, params, 7)
        b, _ = make_adaptive_mask(bundle, WearingStyle.NON_INTERFERED, params, 7)
        pa, pb = tmp_path / "a.png", tmp_path / "b.png"
        save_mask_png(a, pa)
        save_mask_png(b, pb)
        assert pa.read_bytes() == pb.read_bytes()

    def test_extension_grows_downward_only(self, bundle):
        params = MaskParams()
        baseline = make_baseline_mask(bundle, params)
        spec, _ = make_adaptive_mask(bundle, WearingStyle.NON_INTERFERED, params, 3)
        assert (spec.mask | ~baseline.mask).all()  # superset
        h = spec.mask.shape[0]
        for col in range(spec.mask.shape[1]):
            if baseline.mask[:, col].any():
                base_low = h - 1 - np.argmax(baseline.mask[::-1, col])
                adp_low = h - 1 - np.argmax(spec.mask[::-1, col])
                assert adp_low >= base_low

    def test_face_hair_still_protected(self):
        # face rectangle straight below the garment: extension must skip it
        b = make_bundle()
        grid = np.array(b.parse.labels)
        grid[100:110, 40:56] = FACE
        bundle = AnnotationBundle(
            sample_id="x", image=b.image, keypoints=b.keypoints,
            parse=parse_from_grid(grid), densepose=b.densepose,
        )
        params = MaskParams(extend_frac_range=(0.35, 0.35))
        spec, _ = make_adaptive_mask(bundle, WearingStyle.NON_INTERFERED, params, 0)
        assert not (spec.mask & bundle.parse.role_mask("face")).any()


class TestApplyMask:
    def test_zero_mask_identity(self, bundle):
        mask = MaskSpec(mask=np.zeros((128, 96), dtype=bool))
        out = apply_mask(bundle.image, mask)
        assert np.array_equal(out.pixels, bundle.image.pixels)

    def test_full_mask_constant(self, bundle):
        mask = MaskSpec(mask=np.ones((128, 96), dtype=bool))
        out = apply_mask(bundle.image, mask, fill=(1, 2, 3))
        assert (out.pixels == np.array([1, 2, 3], dtype=np.uint8)).all()

    def test_checkerboard_per_pixel(self, bundle):
        grid = np.indices((128, 96)).sum(axis=0) % 2 == 0
        out = apply_mask(bundle.image, MaskSpec(mask=grid), fill=(9, 9, 9))
        for r in range(0, 128, 37):
            for c in range(0, 96, 17):
                expected = (
                    (9, 9, 9) if (r + c) % 2 == 0 else tuple(bundle.image.pixels[r, c])
                )
                assert tuple(out.pixels[r, c]) == expected

    def test_idempotent(self, bundle):
        grid = np.indices((128, 96)).sum(axis=0) % 3 == 0
        once = apply_mask(bundle.image, MaskSpec(mask=grid))
        twice = apply_mask(once, MaskSpec(mask=grid))
        assert np.array_equal(once.pixels, twice.pixels)

    def test_dimension_mismatch(self, bundle):
        with pytest.raises(DimensionMismatch):
            apply_mask(bundle.image, MaskSpec(mask=np.zeros((64, 48), dtype=bool)))


class TestChooseTrainingMask:
    def test_p_zero_never_adaptive(self):
        bundle = make_bundle(hem=70)  # NonInterfered (short top)
        params = MaskParams(prob_adaptive=0.0)
        for seed in range(20):
            _, _, style, used = choose_training_mask(bundle, params, seed)
            assert style is WearingStyle.NON_INTERFERED
            assert used is False

    def test_p_one_always_adaptive(self):
        bundle = make_bundle(hem=70)
        params = MaskParams(prob_adaptive=1.0)
        for seed in range(20):
            _, _, _, used = choose_training_mask(bundle, params, seed)
            assert used is True

    def test_interfered_always_bottom_preserving(self):
        bundle = make_bundle(hem=96, lower_top=84)  # checkpoints inside top
        params = MaskParams(prob_adaptive=1.0, tau_b=5, tau_t=10.0)
        spec, _, style, used = choose_training_mask(bundle, params, 0)
        assert style is WearingStyle.INTERFERED
        assert used is False
        assert not (spec.mask & bundle.parse.role_mask("lower_clothes")).any()

    def test_seeded_sampler_fraction(self):
        # Monte-Carlo over 10k seeds on a tiny fixture for speed
        bundle = make_bundle(hem=70, w=96, h=128)
        params = MaskParams(prob_adaptive=0.5, dilation_radius=0)
        hits = 0
        n = 10_000
        for seed in range(n):
            _, _, meta = plan_training_mask(bundle, params, seed)
            hits += bool(meta["used_adaptive"])
        assert abs(hits / n - 0.5) <= 0.02

"""Unpaired virtual try-on evaluation toolkit.

Implements the SDR and S-LPIPS metrics, the adaptive mask maker, and batch
harnesses (cross-try-on manifests, incorrect-sample mixing) over precomputed
pose/parsing/densepose annotations.
"""

from .annotations import (
    AnnotationBundle,
    DenseposeMap,
    Keypoints,
    LabelMap,
    LabelSchema,
    RgbImage,
    load_densepose,
    load_keypoints,
    load_label_map,
    load_rgb_image,
    region_area,
    region_intersection_area,
    validate_bundle,
)
from .config import EvalConfig, resolve_config
from .harness import (
    DatasetLayout,
    EvalRecord,
    Manifest,
    MixSpec,
    Report,
    evaluate_manifest,
    evaluate_pair,
    gen_cross_manifest,
    mix_experiment,
    read_report,
    write_report,
)
from .mask_maker import (
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
    torso_aspect_ratio,
    waist_checkpoints,
)
from .perceptual import (
    DeterministicBackend,
    FeatureBackend,
    SlpipsScore,
    extract_patches,
    layer_distance,
    load_backend,
    slpips,
)
from .sdr import (
    SdrInputs,
    sdr,
    sdr_distance,
    sdr_distance_general,
    sdr_factors,
    sdr_inputs_from_maps,
)
from .skeleton import (
    SkeletonGrid,
    build_grid,
    common_active,
    filter_missed,
    filter_unused,
)

__version__ = "0.1.0"

"""Command-line surface: mask | sdr | slpips | eval | manifest | mix | calibrate.

Flag precedence is flags > TRYON_EVAL_* environment > --config file >
defaults. Exit codes: 0 success, 1 internal failure, 2 input error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import harness
from .annotations import load_densepose, load_label_map
from .config import BACKEND_KINDS, FORMATS, METRICS, EvalConfig, resolve_config
from .errors import NoValidSamples, TryOnEvalError
from .harness import DatasetLayout, MixSpec, gen_cross_manifest, load_bundle
from .mask_maker import (
    calibrate_tau_t,
    classify_bundle,
    plan_training_mask,
    save_mask_png,
    save_rgb_png,
)
from .perceptual import load_backend, slpips
from .sdr import sdr, sdr_distance, sdr_inputs_from_maps
from .skeleton import build_grid, draw_overlay, filter_missed, filter_unused, grid_to_json

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_INPUT = 2


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="TOML or JSON config file")
    parser.add_argument("--seed", type=int, help="seed for all randomness (default 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tryon-eval",
        description="Unpaired virtual try-on evaluation toolkit (SDR, S-LPIPS, adaptive masks)",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mask", help="classify wearing style and write mask/agnostic/metadata")
    _add_common(p)
    p.add_argument("--dataset-root", help="dataset root directory")
    p.add_argument("--id", required=True, help="sample id to process")
    p.add_argument("--out", help="output directory (required unless --style-only)")
    p.add_argument("--style-only", action="store_true",
                   help="print Interfered/NonInterfered and write nothing")
    p.add_argument("--tau-b", type=int, help="checkpoint-count threshold (default 3)")
    p.add_argument("--tau-t", type=float, help="torso-ratio threshold (default 0.65)")
    p.add_argument("--prob-adaptive", type=float,
                   help="adaptive-mask probability for Non-Interfered samples")

    p = sub.add_parser("sdr", help="SDR distance for one real/virtual pair of maps")
    _add_common(p)
    p.add_argument("--real-parse", required=True, help="real try-on parsing PNG")
    p.add_argument("--real-densepose", required=True, help="real try-on densepose PNG")
    p.add_argument("--virt-parse", required=True, help="virtual try-on parsing PNG")
    p.add_argument("--virt-densepose", required=True, help="virtual try-on densepose PNG")
    p.add_argument("--out", help="write the per-pair JSON here instead of stdout only")

    p = sub.add_parser("slpips", help="S-LPIPS distance for one real/virtual pair")
    _add_common(p)
    p.add_argument("--real-image", required=True)
    p.add_argument("--real-pose", required=True, help="real OpenPose JSON")
    p.add_argument("--real-parse", required=True)
    p.add_argument("--real-densepose", required=True)
    p.add_argument("--virt-image", required=True)
    p.add_argument("--virt-pose", required=True, help="virtual OpenPose JSON")
    p.add_argument("--virt-densepose", required=True)
    p.add_argument("--virt-parse",
                   help="virtual parsing PNG (used when unused_filter_source=own)")
    p.add_argument("--backend", choices=BACKEND_KINDS)
    p.add_argument("--model", help="ONNX model path for reference-vgg")
    p.add_argument("--patch-size", type=int, help="patch side length (default 64)")
    p.add_argument("--dump-grid", metavar="PREFIX",
                   help="dump grid JSON + overlay PNGs with this path prefix")
    p.add_argument("--out", help="write the score JSON here instead of stdout only")

    p = sub.add_parser("eval", help="evaluate a manifest over a dataset root")
    _add_common(p)
    p.add_argument("--manifest", required=True, help="CSV manifest (model_id,clothing_id)")
    p.add_argument("--dataset-root", help="dataset root directory")
    p.add_argument("--out", required=True, help="report output path")
    p.add_argument("--metric", choices=METRICS)
    p.add_argument("--backend", choices=BACKEND_KINDS)
    p.add_argument("--model", help="ONNX model path for reference-vgg")
    p.add_argument("--patch-size", type=int)
    p.add_argument("--workers", type=int, help="parallel workers (default 1)")
    p.add_argument("--format", choices=FORMATS)

    p = sub.add_parser("manifest", help="generate the cross-try-on manifest from an id list")
    _add_common(p)
    p.add_argument("--ids", required=True, help="text file with one sample id per line")
    p.add_argument("--out", required=True, help="manifest CSV output path")

    p = sub.add_parser("mix", help="incorrect-sample mixing experiment over two reports")
    _add_common(p)
    p.add_argument("--correct", required=True, help="report of correct (unpaired) results")
    p.add_argument("--incorrect", required=True, help="report of incorrect (paired) results")
    p.add_argument("--fractions", help="comma-separated fractions (default 0,0.2,...,1)")
    p.add_argument("--out", help="write the table here")
    p.add_argument("--format", choices=FORMATS)

    p = sub.add_parser("calibrate", help="mean torso aspect ratio over a sample set")
    _add_common(p)
    p.add_argument("--dataset-root", help="dataset root directory")
    p.add_argument("--ids", required=True, help="text file with one sample id per line")
    return parser


def _config_from_args(args: argparse.Namespace) -> EvalConfig:
    keys = (
        "tau_b", "tau_t", "prob_adaptive", "patch_size", "backend", "model",
        "metric", "seed", "workers", "format", "dataset_root",
    )
    overrides = {k: getattr(args, k) for k in keys if hasattr(args, k)}
    return resolve_config(config_path=args.config, flag_overrides=overrides)


def _require_root(config: EvalConfig) -> DatasetLayout:
    if not config.dataset_root:
        raise TryOnEvalError("no dataset root (flag --dataset-root, env, or config)")
    root = Path(config.dataset_root)
    if not root.is_dir():
        raise TryOnEvalError(f"dataset root {root} is not a directory")
    return DatasetLayout(root=root)


def _load_sample(config: EvalConfig, sample_id: str):
    layout = _require_root(config)
    paths = layout.resolve_sample(sample_id)
    missing = paths.missing()
    if missing:
        raise TryOnEvalError(
            "missing sample files: " + ", ".join(str(p) for p in missing)
        )
    return load_bundle(sample_id, paths, config)


def _emit(doc: dict, out: str | None) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True)
    print(text)
    if out:
        Path(out).write_text(text + "\n", encoding="utf-8")


def cmd_mask(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    bundle = _load_sample(config, args.id)
    if args.style_only:
        print(classify_bundle(bundle, config.mask_params).value)
        return EXIT_OK
    if not args.out:
        raise TryOnEvalError("--out is required unless --style-only is given")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    spec, agnostic, meta = plan_training_mask(
        bundle, config.mask_params, config.seed, config.fill
    )
    save_mask_png(spec, out / f"{args.id}_mask.png")
    save_rgb_png(agnostic, out / f"{args.id}_agnostic.png")
    (out / f"{args.id}_mask.json").write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(meta["style"])
    return EXIT_OK


def cmd_sdr(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    real = sdr_inputs_from_maps(
        load_label_map(args.real_parse, config.schema),
        load_densepose(args.real_densepose, config.upper_body_parts),
    )
    virt = sdr_inputs_from_maps(
        load_label_map(args.virt_parse, config.schema),
        load_densepose(args.virt_densepose, config.upper_body_parts),
    )
    doc = {
        "s_r": real.s, "d_r": real.d,
        "s_v": virt.s, "d_v": virt.d,
        "sdr_r": sdr(real), "sdr_v": sdr(virt),
        "distance": sdr_distance(real, virt),
    }
    _emit(doc, args.out)
    return EXIT_OK


def cmd_slpips(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    from .annotations import load_keypoints, load_rgb_image

    image_r = load_rgb_image(args.real_image)
    image_v = load_rgb_image(args.virt_image)
    kp_r = load_keypoints(args.real_pose, image_r.width, image_r.height)
    kp_v = load_keypoints(args.virt_pose, image_v.width, image_v.height)
    parse_r = load_label_map(args.real_parse, config.schema)
    dp_r = load_densepose(args.real_densepose, config.upper_body_parts)
    dp_v = load_densepose(args.virt_densepose, config.upper_body_parts)

    grid_r = filter_missed(build_grid(kp_r), dp_r)
    grid_v = filter_missed(build_grid(kp_v), dp_v)
    if config.unused_filter_source == "own" and args.virt_parse:
        parse_v = load_label_map(args.virt_parse, config.schema)
        grid_r = filter_unused(grid_r, parse_r)
        grid_v = filter_unused(grid_v, parse_v)
    else:
        grid_r = filter_unused(grid_r, parse_r)
        grid_v = filter_unused(grid_v, parse_r)

    if args.dump_grid:
        prefix = Path(args.dump_grid)
        prefix.parent.mkdir(parents=True, exist_ok=True)
        for tag, grid, image in (("real", grid_r, image_r), ("virt", grid_v, image_v)):
            Path(f"{prefix}_{tag}_grid.json").write_text(
                grid_to_json(grid) + "\n", encoding="utf-8"
            )
            save_rgb_png(draw_overlay(image, grid), f"{prefix}_{tag}_overlay.png")

    backend = load_backend(config.backend, config.model_path)
    score = slpips(
        image_r, image_v, grid_r, grid_v, backend,
        config.patch_size, config.patch_size,
    )
    doc = {
        "value": score.value,
        "n_nodes": score.n_nodes,
        "per_layer": list(score.per_layer),
        "backend": backend.identifier,
    }
    _emit(doc, args.out)
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    layout = _require_root(config)
    manifest = harness.read_manifest(args.manifest)
    report = harness.evaluate_manifest(manifest, layout, config)
    harness.write_report(report, args.out, config.format)
    agg = report.aggregates
    if agg["mean_sdr_distance"] is not None:
        print(f"mean_sdr_distance={agg['mean_sdr_distance']:.6f} over {agg['n_sdr']} pairs")
    if agg["mean_slpips"] is not None:
        print(f"mean_slpips={agg['mean_slpips']:.6f} over {agg['n_slpips']} pairs")
    print(f"ok={agg['n_ok']} skipped={agg['n_skipped']} records={agg['n_records']}")
    if agg["n_records"] > 0 and agg["n_ok"] == 0:
        return EXIT_INTERNAL
    return EXIT_OK


def cmd_manifest(args: argparse.Namespace) -> int:
    _config_from_args(args)  # validates --config/--seed plumbing
    ids = [
        line.strip()
        for line in Path(args.ids).read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
    manifest = gen_cross_manifest(ids)
    harness.write_manifest(manifest, args.out)
    print(f"{len(manifest)} pairs written to {args.out}")
    return EXIT_OK


def cmd_mix(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    correct = harness.read_report(args.correct, _report_fmt(args.correct)).records
    incorrect = harness.read_report(args.incorrect, _report_fmt(args.incorrect)).records
    fractions = (
        tuple(float(f) for f in args.fractions.split(","))
        if args.fractions
        else (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)
    )
    spec = MixSpec(
        correct=correct, incorrect=incorrect, fractions=fractions, seed=config.seed
    )
    rows = harness.mix_experiment(spec)
    for row in rows:
        sdr_cell = "-" if row.mean_sdr_distance is None else f"{row.mean_sdr_distance:.6f}"
        slpips_cell = "-" if row.mean_slpips is None else f"{row.mean_slpips:.6f}"
        print(f"fraction={row.fraction:.2f} sdr={sdr_cell} slpips={slpips_cell}")
    if args.out:
        harness.write_mix_table(rows, args.out, config.format)
    return EXIT_OK


def _report_fmt(path) -> str:
    return "csv" if str(path).endswith(".csv") else "json"


def cmd_calibrate(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    ids = [
        line.strip()
        for line in Path(args.ids).read_text(encoding="utf-8").splitlines()
        if line.strip()
    ]
    bundles = (_load_sample(config, sample_id) for sample_id in ids)
    try:
        result = calibrate_tau_t(bundles)
    except NoValidSamples:
        raise TryOnEvalError("no sample yielded a defined torso ratio") from None
    print(f"{result.tau_t:.6f}")
    print(f"used={result.n_used} skipped={result.n_skipped}", file=sys.stderr)
    return EXIT_OK


_COMMANDS = {
    "mask": cmd_mask,
    "sdr": cmd_sdr,
    "slpips": cmd_slpips,
    "eval": cmd_eval,
    "manifest": cmd_manifest,
    "mix": cmd_mix,
    "calibrate": cmd_calibrate,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (TryOnEvalError, FileNotFoundError, NotADirectoryError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as e:  # noqa: BLE001 - last-resort diagnostics
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL


def entrypoint() -> None:
    sys.exit(main())

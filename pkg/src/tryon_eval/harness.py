"""Batch evaluation over manifests: cross-try-on manifest generation, pair
evaluation (SDR + S-LPIPS), deterministic parallel execution, report
round-tripping, and the incorrect-sample mixing experiment.

A manifest row (model_id, clothing_id) evaluates the generated image of
model_id wearing clothing_id's garment against the real try-on reference,
which is clothing_id's own sample.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .annotations import (
    AnnotationBundle,
    load_densepose,
    load_keypoints,
    load_label_map,
    load_rgb_image,
)
from .config import EvalConfig
from .errors import (
    DatasetResolutionFailure,
    DuplicateIds,
    EmptyPool,
    SerializationFailure,
    TryOnEvalError,
)
from .mask_maker import classify_bundle
from .perceptual import FeatureBackend, load_backend, slpips
from .sdr import sdr, sdr_distance, sdr_inputs_from_maps
from .skeleton import build_grid, filter_missed, filter_unused


# --- dataset layout ---


@dataclass(frozen=True)
class SamplePaths:
    image: Path
    parse: Path
    densepose: Path
    openpose: Path

    def missing(self) -> list:
        return [p for p in (self.image, self.parse, self.densepose, self.openpose)
                if not p.is_file()]


@dataclass(frozen=True)
class DatasetLayout:
    """Directory convention {root}/{image,parse,densepose,openpose} for real
    samples plus the same tree under {root}/generated for try-on results,
    keyed {model_id}_{clothing_id}."""

    root: Path
    image_dir: str = "image"
    parse_dir: str = "parse"
    densepose_dir: str = "densepose"
    openpose_dir: str = "openpose"
    generated_dir: str = "generated"
    image_exts: tuple = (".png", ".jpg", ".jpeg")

    def _find_image(self, base: Path, stem: str) -> Path:
        for ext in self.image_exts:
            candidate = base / f"{stem}{ext}"
            if candidate.is_file():
                return candidate
        return base / f"{stem}{self.image_exts[0]}"

    def _find_pose(self, base: Path, stem: str) -> Path:
        for name in (f"{stem}.json", f"{stem}_keypoints.json"):
            candidate = base / name
            if candidate.is_file():
                return candidate
        return base / f"{stem}.json"

    def _resolve(self, base: Path, stem: str) -> SamplePaths:
        return SamplePaths(
            image=self._find_image(base / self.image_dir, stem),
            parse=base / self.parse_dir / f"{stem}.png",
            densepose=base / self.densepose_dir / f"{stem}.png",
            openpose=self._find_pose(base / self.openpose_dir, stem),
        )

    def resolve_sample(self, sample_id: str) -> SamplePaths:
        return self._resolve(Path(self.root), sample_id)

    def resolve_generated(self, model_id: str, clothing_id: str) -> SamplePaths:
        return self._resolve(
            Path(self.root) / self.generated_dir, f"{model_id}_{clothing_id}"
        )


def load_bundle(sample_id: str, paths: SamplePaths, config: EvalConfig) -> AnnotationBundle:
    image = load_rgb_image(paths.image)
    return AnnotationBundle(
        sample_id=sample_id,
        image=image,
        keypoints=load_keypoints(paths.openpose, image.width, image.height),
        parse=load_label_map(paths.parse, config.schema),
        densepose=load_densepose(paths.densepose, config.upper_body_parts),
    )


# --- manifests ---


@dataclass(frozen=True)
class Manifest:
    entries: tuple

    def __post_init__(self):
        entries = tuple((str(m), str(c)) for m, c in self.entries)
        if len(set(entries)) != len(entries):
            raise DuplicateIds("manifest contains duplicate pairs")
        object.__setattr__(self, "entries", entries)

    def __len__(self) -> int:
        return len(self.entries)


def gen_cross_manifest(ids) -> Manifest:
    """Full n x n cartesian product in deterministic row-major order."""
    ids = [str(i) for i in ids]
    if len(set(ids)) != len(ids):
        raise DuplicateIds("sample id list contains duplicates")
    if not ids:
        raise ValueError("need at least one sample id")
    return Manifest(entries=tuple((m, c) for m in ids for c in ids))


def write_manifest(manifest: Manifest, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["model_id", "clothing_id"])
        writer.writerows(manifest.entries)


def read_manifest(path) -> Manifest:
    with open(path, "r", newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    if not rows or rows[0] != ["model_id", "clothing_id"]:
        raise SerializationFailure(f"{path}: expected header model_id,clothing_id")
    return Manifest(entries=tuple((r[0], r[1]) for r in rows[1:] if r))


# --- per-pair evaluation ---


@dataclass(frozen=True)
class EvalRecord:
    model_id: str
    clothing_id: str
    status: str = "ok"
    skip_reason: str | None = None
    style_real: str | None = None
    style_virtual: str | None = None
    sdr_distance: float | None = None
    sdr_detail: dict | None = None
    sdr_skip_reason: str | None = None
    slpips_value: float | None = None
    slpips_n_nodes: int | None = None
    slpips_per_layer: tuple | None = None
    slpips_skip_reason: str | None = None


def _bundle_dims_ok(bundle: AnnotationBundle) -> bool:
    ref = (bundle.image.width, bundle.image.height)
    return (
        (bundle.parse.width, bundle.parse.height) == ref
        and (bundle.densepose.width, bundle.densepose.height) == ref
        and (bundle.keypoints.image_w, bundle.keypoints.image_h) == ref
    )


def evaluate_pair(
    real: AnnotationBundle,
    virt: AnnotationBundle,
    config: EvalConfig,
    backend: FeatureBackend | None = None,
) -> EvalRecord:
    """Run SDR and/or S-LPIPS for one pair; failures land in the record."""
    base = dict(model_id=virt.sample_id, clothing_id=real.sample_id)
    if not _bundle_dims_ok(real) or not _bundle_dims_ok(virt):
        return EvalRecord(status="skipped", skip_reason="DimensionMismatch", **base)
    if (real.image.width, real.image.height) != (virt.image.width, virt.image.height):
        return EvalRecord(status="skipped", skip_reason="DimensionMismatch", **base)

    styles = {}
    for key, bundle in (("style_real", real), ("style_virtual", virt)):
        try:
            styles[key] = classify_bundle(bundle, config.mask_params).value
        except TryOnEvalError:
            styles[key] = None

    sdr_fields: dict = {}
    if config.metric in ("sdr", "both"):
        try:
            inputs_r = sdr_inputs_from_maps(real.parse, real.densepose)
            inputs_v = sdr_inputs_from_maps(virt.parse, virt.densepose)
            distance = sdr_distance(inputs_r, inputs_v)
            sdr_fields = {
                "sdr_distance": distance,
                "sdr_detail": {
                    "s_r": inputs_r.s, "d_r": inputs_r.d, "sd_r": inputs_r.sd,
                    "s_v": inputs_v.s, "d_v": inputs_v.d, "sd_v": inputs_v.sd,
                    "sdr_r": sdr(inputs_r), "sdr_v": sdr(inputs_v),
                },
            }
        except TryOnEvalError as e:
            sdr_fields = {"sdr_skip_reason": type(e).__name__}

    slpips_fields: dict = {}
    if config.metric in ("slpips", "both"):
        try:
            if backend is None:
                backend = load_backend(config.backend, config.model_path)
            grid_r = build_grid(real.keypoints)
            grid_v = build_grid(virt.keypoints)
            grid_r = filter_missed(grid_r, real.densepose)
            grid_v = filter_missed(grid_v, virt.densepose)
            if config.unused_filter_source == "real":
                grid_r = filter_unused(grid_r, real.parse)
                grid_v = filter_unused(grid_v, real.parse)
            else:
                grid_r = filter_unused(grid_r, real.parse)
                grid_v = filter_unused(grid_v, virt.parse)
            score = slpips(
                real.image, virt.image, grid_r, grid_v, backend,
                config.patch_size, config.patch_size,
            )
            slpips_fields = {
                "slpips_value": score.value,
                "slpips_n_nodes": score.n_nodes,
                "slpips_per_layer": score.per_layer,
            }
        except TryOnEvalError as e:
            slpips_fields = {"slpips_skip_reason": type(e).__name__}

    computed = ("sdr_distance" in sdr_fields) or ("slpips_value" in slpips_fields)
    if not computed:
        reasons = [
            v for v in (
                sdr_fields.get("sdr_skip_reason"),
                slpips_fields.get("slpips_skip_reason"),
            ) if v
        ]
        return EvalRecord(
            status="skipped",
            skip_reason="+".join(reasons) or "NoMetricComputed",
            **base, **styles, **sdr_fields, **slpips_fields,
        )
    return EvalRecord(status="ok", **base, **styles, **sdr_fields, **slpips_fields)


# --- report ---


@dataclass(frozen=True)
class Report:
    records: tuple
    aggregates: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)


def compute_aggregates(records) -> dict:
    sdr_values = [r.sdr_distance for r in records if r.sdr_distance is not None]
    slpips_values = [r.slpips_value for r in records if r.slpips_value is not None]
    return {
        "n_records": len(records),
        "n_ok": sum(1 for r in records if r.status == "ok"),
        "n_skipped": sum(1 for r in records if r.status == "skipped"),
        "n_sdr": len(sdr_values),
        "n_slpips": len(slpips_values),
        "mean_sdr_distance": (
            math.fsum(sdr_values) / len(sdr_values) if sdr_values else None
        ),
        "mean_slpips": (
            math.fsum(slpips_values) / len(slpips_values) if slpips_values else None
        ),
    }


def make_report(records, config: EvalConfig) -> Report:
    records = tuple(records)
    return Report(
        records=records,
        aggregates=compute_aggregates(records),
        config=config.echo(),
    )


# --- manifest evaluation (deterministic, embarrassingly parallel) ---

_WORKER: dict = {}


def _init_worker(layout: DatasetLayout, config: EvalConfig) -> None:
    _WORKER["layout"] = layout
    _WORKER["config"] = config
    _WORKER["backend"] = (
        load_backend(config.backend, config.model_path)
        if config.metric in ("slpips", "both")
        else None
    )


def _eval_entry(
    entry, layout: DatasetLayout, config: EvalConfig, backend
) -> EvalRecord:
    model_id, clothing_id = entry
    try:
        real = load_bundle(clothing_id, layout.resolve_sample(clothing_id), config)
        virt = load_bundle(
            f"{model_id}_{clothing_id}",
            layout.resolve_generated(model_id, clothing_id),
            config,
        )
    except TryOnEvalError as e:
        return EvalRecord(
            model_id=model_id,
            clothing_id=clothing_id,
            status="skipped",
            skip_reason=type(e).__name__,
        )
    record = evaluate_pair(real, virt, config, backend)
    return EvalRecord(
        **{**record.__dict__, "model_id": model_id, "clothing_id": clothing_id}
    )


def _eval_task(args):
    index, entry = args
    record = _eval_entry(
        entry, _WORKER["layout"], _WORKER["config"], _WORKER["backend"]
    )
    return index, record


def evaluate_manifest(
    manifest: Manifest,
    layout: DatasetLayout,
    config: EvalConfig,
    workers: int | None = None,
) -> Report:
    """Evaluate every manifest pair; record order always matches the manifest
    regardless of scheduling, so reports are bit-identical across worker
    counts."""
    workers = config.workers if workers is None else workers
    if workers < 1:
        raise ValueError("workers must be >= 1")

    missing = []
    for model_id, clothing_id in manifest.entries:
        missing += layout.resolve_sample(clothing_id).missing()
        missing += layout.resolve_generated(model_id, clothing_id).missing()
    if missing:
        raise DatasetResolutionFailure(sorted(set(str(p) for p in missing)))

    if workers == 1 or len(manifest) == 0:
        backend = (
            load_backend(config.backend, config.model_path)
            if config.metric in ("slpips", "both")
            else None
        )
        records = [
            _eval_entry(entry, layout, config, backend)
            for entry in manifest.entries
        ]
    else:
        tasks = list(enumerate(manifest.entries))
        results: list = [None] * len(tasks)
        with ProcessPoolExecutor(
            max_workers=workers,
            initializer=_init_worker,
            initargs=(layout, config),
        ) as pool:
            for index, record in pool.map(_eval_task, tasks, chunksize=4):
                results[index] = record
        records = results
    return make_report(records, config)


# --- mixing experiment ---


@dataclass(frozen=True)
class MixSpec:
    """Pools and fractions for the incorrect-sample mixing experiment.

    `incorrect[i]` substitutes `correct[i]`, mirroring the per-pair paired
    try-on stand-ins; substitution subsets are nested across fractions.
    """

    correct: tuple
    incorrect: tuple
    fractions: tuple = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)
    seed: int = 0

    def __post_init__(self):
        if not self.correct or not self.incorrect:
            raise EmptyPool("correct and incorrect pools must be non-empty")
        if len(self.correct) != len(self.incorrect):
            raise ValueError("pools must have equal length (slot-for-slot substitution)")
        fr = tuple(float(f) for f in self.fractions)
        if any(not 0.0 <= f <= 1.0 for f in fr):
            raise ValueError("fractions must lie in [0, 1]")
        if list(fr) != sorted(set(fr)):
            raise ValueError("fractions must be sorted and unique")
        object.__setattr__(self, "correct", tuple(self.correct))
        object.__setattr__(self, "incorrect", tuple(self.incorrect))
        object.__setattr__(self, "fractions", fr)


@dataclass(frozen=True)
class MixRow:
    fraction: float
    n_substituted: int
    mean_sdr_distance: float | None
    mean_slpips: float | None


def mix_experiment(spec: MixSpec) -> list:
    """Aggregate metrics as a growing seeded subset of correct results is
    replaced by incorrect ones."""
    n = len(spec.correct)
    order = np.random.default_rng(spec.seed).permutation(n)
    rows = []
    for fraction in spec.fractions:
        k = int(round(fraction * n))
        substituted = set(order[:k].tolist())
        records = [
            spec.incorrect[i] if i in substituted else spec.correct[i]
            for i in range(n)
        ]
        agg = compute_aggregates(records)
        rows.append(
            MixRow(
                fraction=fraction,
                n_substituted=k,
                mean_sdr_distance=agg["mean_sdr_distance"],
                mean_slpips=agg["mean_slpips"],
            )
        )
    return rows


def write_mix_table(rows, path, fmt: str = "csv") -> None:
    if fmt == "json":
        doc = [row.__dict__ for row in rows]
        Path(path).write_text(
            json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n",
            encoding="utf-8",
        )
        return
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["fraction", "n_substituted", "mean_sdr_distance", "mean_slpips"])
        for row in rows:
            writer.writerow(
                [row.fraction, row.n_substituted,
                 _csv_cell(row.mean_sdr_distance), _csv_cell(row.mean_slpips)]
            )


# --- report serialization ---

_RECORD_COLUMNS = [
    "model_id", "clothing_id", "status", "skip_reason",
    "style_real", "style_virtual",
    "sdr_distance", "sdr_skip_reason",
    "s_r", "d_r", "sd_r", "s_v", "d_v", "sd_v", "sdr_r", "sdr_v",
    "slpips_value", "slpips_n_nodes",
    "slpips_l1", "slpips_l2", "slpips_l3", "slpips_l4", "slpips_l5",
    "slpips_skip_reason",
]


def _csv_cell(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return value


def _record_to_json(r: EvalRecord) -> dict:
    doc = {k: v for k, v in r.__dict__.items() if v is not None}
    if "slpips_per_layer" in doc:
        doc["slpips_per_layer"] = list(doc["slpips_per_layer"])
    return doc


def _record_from_json(doc: dict) -> EvalRecord:
    doc = dict(doc)
    if doc.get("slpips_per_layer") is not None:
        doc["slpips_per_layer"] = tuple(doc["slpips_per_layer"])
    return EvalRecord(**doc)


def _record_to_row(r: EvalRecord) -> list:
    detail = r.sdr_detail or {}
    layers = r.slpips_per_layer or (None,) * 5
    cells = [
        r.model_id, r.clothing_id, r.status, r.skip_reason,
        r.style_real, r.style_virtual,
        r.sdr_distance, r.sdr_skip_reason,
        detail.get("s_r"), detail.get("d_r"), detail.get("sd_r"),
        detail.get("s_v"), detail.get("d_v"), detail.get("sd_v"),
        detail.get("sdr_r"), detail.get("sdr_v"),
        r.slpips_value, r.slpips_n_nodes,
        layers[0], layers[1], layers[2], layers[3], layers[4],
        r.slpips_skip_reason,
    ]
    return [_csv_cell(c) for c in cells]


def _record_from_row(row: list) -> EvalRecord:
    get = dict(zip(_RECORD_COLUMNS, row)).get

    def opt_str(key):
        return get(key) or None

    def opt_float(key):
        v = get(key)
        return float(v) if v not in (None, "") else None

    def opt_int(key):
        v = get(key)
        return int(v) if v not in (None, "") else None

    detail_keys = ["s_r", "d_r", "sd_r", "s_v", "d_v", "sd_v"]
    detail = {k: opt_int(k) for k in detail_keys}
    detail["sdr_r"] = opt_float("sdr_r")
    detail["sdr_v"] = opt_float("sdr_v")
    has_detail = any(v is not None for v in detail.values())
    layers = tuple(opt_float(f"slpips_l{i}") for i in range(1, 6))
    has_layers = any(v is not None for v in layers)
    return EvalRecord(
        model_id=get("model_id"),
        clothing_id=get("clothing_id"),
        status=get("status"),
        skip_reason=opt_str("skip_reason"),
        style_real=opt_str("style_real"),
        style_virtual=opt_str("style_virtual"),
        sdr_distance=opt_float("sdr_distance"),
        sdr_detail=detail if has_detail else None,
        sdr_skip_reason=opt_str("sdr_skip_reason"),
        slpips_value=opt_float("slpips_value"),
        slpips_n_nodes=opt_int("slpips_n_nodes"),
        slpips_per_layer=layers if has_layers else None,
        slpips_skip_reason=opt_str("slpips_skip_reason"),
    )


def aggregates_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".aggregates.csv")


def write_report(report: Report, path, fmt: str = "json") -> None:
    path = Path(path)
    try:
        if fmt == "json":
            doc = {
                "records": [_record_to_json(r) for r in report.records],
                "aggregates": report.aggregates,
                "config": report.config,
            }
            path.write_text(
                json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n",
                encoding="utf-8",
            )
            return
        if fmt != "csv":
            raise SerializationFailure(f"unknown report format {fmt!r}")
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(_RECORD_COLUMNS)
            for record in report.records:
                writer.writerow(_record_to_row(record))
        with open(aggregates_path(path), "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["key", "value"])
            for key in sorted(report.aggregates):
                writer.writerow([key, _csv_cell(report.aggregates[key])])
    except (OSError, ValueError) as e:
        raise SerializationFailure(f"{path}: {e}") from e


def _validate_aggregates(report: Report) -> Report:
    expected = compute_aggregates(report.records)
    for key, value in expected.items():
        stored = report.aggregates.get(key)
        if value is None or stored is None:
            if stored != value:
                raise SerializationFailure(f"aggregate {key} mismatch on read")
            continue
        if isinstance(value, float):
            if not math.isfinite(stored) or abs(stored - value) > 1e-12:
                raise SerializationFailure(f"aggregate {key} mismatch on read")
        elif stored != value:
            raise SerializationFailure(f"aggregate {key} mismatch on read")
    return report


def read_report(path, fmt: str = "json") -> Report:
    path = Path(path)
    try:
        if fmt == "json":
            doc = json.loads(path.read_text(encoding="utf-8"))
            report = Report(
                records=tuple(_record_from_json(r) for r in doc["records"]),
                aggregates=doc["aggregates"],
                config=doc.get("config", {}),
            )
            return _validate_aggregates(report)
        if fmt != "csv":
            raise SerializationFailure(f"unknown report format {fmt!r}")
        with open(path, "r", newline="", encoding="utf-8") as f:
            rows = list(csv.reader(f))
        if not rows or rows[0] != _RECORD_COLUMNS:
            raise SerializationFailure(f"{path}: unexpected CSV header")
        records = tuple(_record_from_row(r) for r in rows[1:] if r)
        aggregates: dict = {}
        with open(aggregates_path(path), "r", newline="", encoding="utf-8") as f:
            for row in list(csv.reader(f))[1:]:
                if not row:
                    continue
                key, raw = row
                if raw == "":
                    aggregates[key] = None
                elif key.startswith("mean_"):
                    aggregates[key] = float(raw)
                else:
                    aggregates[key] = int(raw)
        report = Report(records=records, aggregates=aggregates, config={})
        return _validate_aggregates(report)
    except (OSError, KeyError, ValueError, json.JSONDecodeError) as e:
        raise SerializationFailure(f"{path}: {e}") from e

"""Resolved toolkit configuration.

Precedence: command-line flags > TRYON_EVAL_* environment variables >
config file (TOML or JSON) > built-in defaults. The resolved view is echoed
into every report so results stay attributable.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, replace
from pathlib import Path

from .annotations import DEFAULT_UPPER_BODY_PARTS, LabelSchema, ROLES
from .errors import MalformedFile
from .mask_maker import DEFAULT_FILL, MaskParams

ENV_PREFIX = "TRYON_EVAL_"

BACKEND_KINDS = ("deterministic-test", "reference-vgg")
METRICS = ("sdr", "slpips", "both")
FORMATS = ("json", "csv")
UNUSED_SOURCES = ("real", "own")


@dataclass(frozen=True)
class EvalConfig:
    schema: LabelSchema
    upper_body_parts: frozenset = DEFAULT_UPPER_BODY_PARTS
    mask_params: MaskParams = MaskParams()
    fill: tuple = DEFAULT_FILL
    patch_size: int = 64
    backend: str = "deterministic-test"
    model_path: str | None = None
    unused_filter_source: str = "real"
    metric: str = "both"
    seed: int = 0
    workers: int = 1
    format: str = "json"
    dataset_root: str | None = None

    def __post_init__(self):
        if self.backend not in BACKEND_KINDS:
            raise ValueError(f"backend must be one of {BACKEND_KINDS}")
        if self.metric not in METRICS:
            raise ValueError(f"metric must be one of {METRICS}")
        if self.format not in FORMATS:
            raise ValueError(f"format must be one of {FORMATS}")
        if self.unused_filter_source not in UNUSED_SOURCES:
            raise ValueError(f"unused_filter_source must be one of {UNUSED_SOURCES}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.patch_size % 2 or self.patch_size < 16:
            raise ValueError("patch_size must be even and >= 16")

    @classmethod
    def default(cls) -> "EvalConfig":
        return cls(schema=LabelSchema.default())

    def echo(self) -> dict:
        """Config view embedded in reports. Worker count and paths are
        deliberately excluded so reports stay bit-identical across runs."""
        return {
            "tau_b": self.mask_params.tau_b,
            "tau_t": self.mask_params.tau_t,
            "prob_adaptive": self.mask_params.prob_adaptive,
            "extend_frac_range": list(self.mask_params.extend_frac_range),
            "dilation_radius": self.mask_params.dilation_radius,
            "fill": list(self.fill),
            "patch_size": self.patch_size,
            "backend": self.backend,
            "unused_filter_source": self.unused_filter_source,
            "metric": self.metric,
            "seed": self.seed,
            "schema": {role: sorted(self.schema.ids_for(role)) for role in ROLES},
            "upper_body_parts": sorted(self.upper_body_parts),
        }


def _load_file(path) -> dict:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise MalformedFile(f"{path}: {e}") from e
    if path.suffix.lower() == ".json":
        try:
            return json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise MalformedFile(f"{path}: {e}") from e
    try:
        import tomllib  # Python >= 3.11
    except ImportError:
        import tomli as tomllib
    try:
        return tomllib.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, tomllib.TOMLDecodeError) as e:
        raise MalformedFile(f"{path}: {e}") from e


def _apply_mapping(cfg: EvalConfig, doc: dict) -> EvalConfig:
    mp = cfg.mask_params
    mask_kwargs = {}
    if "tau_b" in doc:
        mask_kwargs["tau_b"] = int(doc["tau_b"])
    if "tau_t" in doc:
        mask_kwargs["tau_t"] = float(doc["tau_t"])
    if "prob_adaptive" in doc:
        mask_kwargs["prob_adaptive"] = float(doc["prob_adaptive"])
    if "extend_frac_low" in doc or "extend_frac_high" in doc:
        low = float(doc.get("extend_frac_low", mp.extend_frac_range[0]))
        high = float(doc.get("extend_frac_high", mp.extend_frac_range[1]))
        mask_kwargs["extend_frac_range"] = (low, high)
    if "dilation_radius" in doc:
        mask_kwargs["dilation_radius"] = int(doc["dilation_radius"])
    if mask_kwargs:
        cfg = replace(cfg, mask_params=replace(mp, **mask_kwargs))

    simple = {}
    if "fill" in doc:
        simple["fill"] = tuple(int(v) for v in doc["fill"])
    if "patch_size" in doc:
        simple["patch_size"] = int(doc["patch_size"])
    if "backend" in doc:
        simple["backend"] = str(doc["backend"])
    if "model" in doc:
        simple["model_path"] = str(doc["model"]) if doc["model"] else None
    if "unused_filter_source" in doc:
        simple["unused_filter_source"] = str(doc["unused_filter_source"])
    if "metric" in doc:
        simple["metric"] = str(doc["metric"])
    if "seed" in doc:
        simple["seed"] = int(doc["seed"])
    if "workers" in doc:
        simple["workers"] = int(doc["workers"])
    if "format" in doc:
        simple["format"] = str(doc["format"])
    if "dataset_root" in doc:
        simple["dataset_root"] = str(doc["dataset_root"])
    if simple:
        cfg = replace(cfg, **simple)

    if "schema" in doc:
        roles = {
            role: frozenset(int(i) for i in ids)
            for role, ids in doc["schema"].items()
        }
        merged = dict(cfg.schema.roles)
        merged.update(roles)
        cfg = replace(cfg, schema=LabelSchema(merged))
    if "upper_body_parts" in doc:
        cfg = replace(
            cfg, upper_body_parts=frozenset(int(p) for p in doc["upper_body_parts"])
        )
    return cfg


_ENV_KEYS = {
    "TAU_B": "tau_b",
    "TAU_T": "tau_t",
    "PROB_ADAPTIVE": "prob_adaptive",
    "DILATION_RADIUS": "dilation_radius",
    "PATCH_SIZE": "patch_size",
    "BACKEND": "backend",
    "MODEL": "model",
    "UNUSED_FILTER_SOURCE": "unused_filter_source",
    "METRIC": "metric",
    "SEED": "seed",
    "WORKERS": "workers",
    "FORMAT": "format",
    "DATASET_ROOT": "dataset_root",
}


def _env_mapping(environ) -> dict:
    doc = {}
    for env_key, doc_key in _ENV_KEYS.items():
        value = environ.get(ENV_PREFIX + env_key)
        if value is not None:
            doc[doc_key] = value
    return doc


def resolve_config(
    config_path=None, flag_overrides: dict | None = None, environ=None
) -> EvalConfig:
    """Merge defaults <- config file <- environment <- flags."""
    environ = os.environ if environ is None else environ
    cfg = EvalConfig.default()
    if config_path is None:
        config_path = environ.get(ENV_PREFIX + "CONFIG")
    if config_path:
        cfg = _apply_mapping(cfg, _load_file(config_path))
    cfg = _apply_mapping(cfg, _env_mapping(environ))
    if flag_overrides:
        cfg = _apply_mapping(
            cfg, {k: v for k, v in flag_overrides.items() if v is not None}
        )
    return cfg

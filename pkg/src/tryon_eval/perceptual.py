"""Patch extraction at skeleton-grid nodes and the S-LPIPS distance.

The distance runs through a pluggable 5-layer feature backend: features are
channel-unit-normalized at each spatial location, squared differences are
averaged over space and channels per layer (unit linear weights), per-layer
means are averaged over the common active nodes, and the final score is the
mean of the 5 per-layer means.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .annotations import RgbImage
from .errors import BackendFailure, ModelLoadFailure, NoActiveNodes
from .skeleton import NodeStatus, SkeletonGrid, common_active

DEFAULT_PATCH = 64
_NORM_EPS = 1e-10


@dataclass(frozen=True)
class PatchSet:
    """Patches of one image, aligned with `indices` (grid node indices)."""

    patches: np.ndarray
    indices: tuple

    def __post_init__(self):
        p = np.asarray(self.patches)
        if p.ndim != 4 or p.shape[3] != 3 or p.dtype != np.uint8:
            raise ValueError("patches must be (N, h, w, 3) uint8")
        if p.shape[0] != len(self.indices):
            raise ValueError("one patch per index required")
        p = np.ascontiguousarray(p)
        p.setflags(write=False)
        object.__setattr__(self, "patches", p)
        object.__setattr__(self, "indices", tuple(self.indices))


@dataclass(frozen=True)
class SlpipsScore:
    value: float
    n_nodes: int
    per_layer: tuple

    def __post_init__(self):
        if len(self.per_layer) != 5:
            raise ValueError("expected 5 per-layer means")


def _reflect_pad(pixels: np.ndarray, pad_y: int, pad_x: int) -> np.ndarray:
    """np.pad reflect, applied in steps so pads larger than the image work."""
    out = pixels
    while pad_y > 0 or pad_x > 0:
        step_y = min(pad_y, out.shape[0] - 1)
        step_x = min(pad_x, out.shape[1] - 1)
        out = np.pad(out, ((step_y, step_y), (step_x, step_x), (0, 0)), mode="reflect")
        pad_y -= step_y
        pad_x -= step_x
    return out


def extract_patches(
    image: RgbImage,
    grid: SkeletonGrid,
    indices,
    h: int = DEFAULT_PATCH,
    w: int = DEFAULT_PATCH,
) -> PatchSet:
    """One h x w patch per node index, centered at the rounded node position,
    reflect-padded at image borders."""
    indices = list(indices)
    if not indices:
        raise NoActiveNodes("empty node index list")
    if h % 2 or w % 2 or h < 16 or w < 16:
        raise ValueError("patch height/width must be even and >= 16")
    for i in indices:
        node = grid.nodes[i]
        if node.status is not NodeStatus.ACTIVE:
            raise ValueError(f"node {i} is {node.status.value}, not Active")
    pad_y, pad_x = h // 2, w // 2
    padded = _reflect_pad(image.pixels, pad_y, pad_x)
    out = np.empty((len(indices), h, w, 3), dtype=np.uint8)
    for k, i in enumerate(indices):
        node = grid.nodes[i]
        col = min(max(int(math.floor(node.x + 0.5)), 0), image.width - 1)
        row = min(max(int(math.floor(node.y + 0.5)), 0), image.height - 1)
        r0 = row + pad_y - h // 2
        c0 = col + pad_x - w // 2
        out[k] = padded[r0 : r0 + h, c0 : c0 + w]
    return PatchSet(patches=out, indices=tuple(indices))


class FeatureBackend:
    """5-layer feature extractor contract.

    `features` maps a (N, h, w, 3) uint8 batch to a list of five
    (N, C_j, H_j, W_j) float arrays; identical input bytes must give
    bit-stable outputs on the same platform.
    """

    identifier: str = "abstract"
    deterministic: bool = False
    channels: tuple = ()

    @property
    def n_layers(self) -> int:
        return 5

    def features(self, batch: np.ndarray) -> list:
        raise NotImplementedError


def _pool2(a: np.ndarray) -> np.ndarray:
    """2x2 average pooling, cropping a trailing odd row/column."""
    hh = (a.shape[0] // 2) * 2
    ww = (a.shape[1] // 2) * 2
    a = a[:hh, :ww]
    return a.reshape(hh // 2, 2, ww // 2, 2).mean(axis=(1, 3))


class DeterministicBackend(FeatureBackend):
    """Fixed-arithmetic 5-scale pyramid of local gradient-orientation
    histograms plus radial-basis intensity channels. No learned weights, no
    model file; float64 numpy throughout, patch-by-patch so results never
    depend on batch composition.
    """

    identifier = "deterministic-test"
    deterministic = True

    _N_BINS = 8
    _RBF_CENTERS = np.array([0.125, 0.375, 0.625, 0.875])
    _RBF_SIGMA = 0.15

    def __init__(self):
        self.channels = tuple([self._N_BINS + len(self._RBF_CENTERS)] * 5)

    def _scale_features(self, lum: np.ndarray) -> np.ndarray:
        gy, gx = np.gradient(lum)
        mag = np.hypot(gx, gy)
        theta = np.arctan2(gy, gx)  # [-pi, pi]
        pos = (theta + np.pi) / (2 * np.pi) * self._N_BINS
        lo = np.floor(pos).astype(int) % self._N_BINS
        hi = (lo + 1) % self._N_BINS
        frac = pos - np.floor(pos)
        hist = np.zeros((self._N_BINS,) + lum.shape)
        rows, cols = np.indices(lum.shape)
        np.add.at(hist, (lo, rows, cols), mag * (1.0 - frac))
        np.add.at(hist, (hi, rows, cols), mag * frac)
        rbf = np.exp(
            -((lum[None, :, :] - self._RBF_CENTERS[:, None, None]) ** 2)
            / (2.0 * self._RBF_SIGMA**2)
        )
        return np.concatenate([hist, rbf], axis=0)

    def _patch_features(self, patch: np.ndarray) -> list:
        x = patch.astype(np.float64) / 255.0
        lum = 0.299 * x[:, :, 0] + 0.587 * x[:, :, 1] + 0.114 * x[:, :, 2]
        layers = []
        for _ in range(5):
            layers.append(self._scale_features(lum))
            lum = _pool2(lum)
        return layers

    def features(self, batch: np.ndarray) -> list:
        per_patch = [self._patch_features(p) for p in batch]
        return [
            np.stack([feats[j] for feats in per_patch]) for j in range(5)
        ]


def _unit_normalize(f: np.ndarray) -> np.ndarray:
    """Scale each spatial location's channel vector to unit length."""
    norm = np.sqrt((f * f).sum(axis=0, keepdims=True)) + _NORM_EPS
    return f / norm


def _feature_distance(fa: np.ndarray, fb: np.ndarray) -> float:
    """Mean over space and channels of the squared normalized difference."""
    diff = _unit_normalize(fa) - _unit_normalize(fb)
    return float((diff * diff).mean())


def layer_distance(
    backend: FeatureBackend, j: int, patch_a: np.ndarray, patch_b: np.ndarray
) -> float:
    """Distance between two single patches at layer j in 1..5."""
    if not 1 <= j <= 5:
        raise ValueError("layer index must be in 1..5")
    if patch_a.shape != patch_b.shape:
        raise ValueError("patches must share shape")
    try:
        fa = backend.features(patch_a[None])[j - 1][0]
        fb = backend.features(patch_b[None])[j - 1][0]
    except Exception as e:  # noqa: BLE001 - backend internals vary
        raise BackendFailure(str(e)) from e
    return _feature_distance(fa, fb)


def slpips(
    image_r: RgbImage,
    image_v: RgbImage,
    grid_r: SkeletonGrid,
    grid_v: SkeletonGrid,
    backend: FeatureBackend,
    h: int = DEFAULT_PATCH,
    w: int = DEFAULT_PATCH,
) -> SlpipsScore:
    """Average patch distance over the nodes Active in both grids."""
    indices = common_active(grid_r, grid_v)
    if not indices:
        raise NoActiveNodes("no nodes are Active in both grids")
    return slpips_for_indices(image_r, image_v, grid_r, grid_v, indices, backend, h, w)


def slpips_for_indices(
    image_r: RgbImage,
    image_v: RgbImage,
    grid_r: SkeletonGrid,
    grid_v: SkeletonGrid,
    indices,
    backend: FeatureBackend,
    h: int = DEFAULT_PATCH,
    w: int = DEFAULT_PATCH,
) -> SlpipsScore:
    """slpips over an explicit node index list.

    Per-node distances are accumulated with exact summation, so the score does
    not depend on the order of `indices`.
    """
    patches_r = extract_patches(image_r, grid_r, indices, h, w)
    patches_v = extract_patches(image_v, grid_v, indices, h, w)
    try:
        feats_r = backend.features(patches_r.patches)
        feats_v = backend.features(patches_v.patches)
    except Exception as e:  # noqa: BLE001
        raise BackendFailure(str(e)) from e
    if len(feats_r) != 5 or len(feats_v) != 5:
        raise BackendFailure("backend must produce 5 feature layers")
    n = len(patches_r.indices)
    order = np.argsort(np.asarray(patches_r.indices))
    per_layer = []
    for j in range(5):
        dists = [_feature_distance(feats_r[j][k], feats_v[j][k]) for k in order]
        per_layer.append(math.fsum(dists) / n)
    value = math.fsum(per_layer) / 5.0
    return SlpipsScore(value=value, n_nodes=n, per_layer=tuple(per_layer))


def load_backend(kind: str, model_path=None) -> FeatureBackend:
    """Instantiate a feature backend by kind.

    `deterministic-test` needs no file; `reference-vgg` loads an ONNX VGG16
    feature extractor with 5 named outputs.
    """
    if kind == "deterministic-test":
        return DeterministicBackend()
    if kind == "reference-vgg":
        if model_path is None:
            raise ModelLoadFailure("reference-vgg requires a model file path")
        from .onnx_backend import OnnxVggBackend

        return OnnxVggBackend(model_path)
    raise ModelLoadFailure(f"unknown backend kind {kind!r}")

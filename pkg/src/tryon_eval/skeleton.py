"""Pose-anchored skeleton grid: 8 left-arm + 40 torso + 8 right-arm nodes
interpolated from BODY_25 keypoints, plus the two node-filtering rounds
(occlusion against densepose parts, garment membership against the parse).
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .annotations import (
    DenseposeMap,
    Keypoints,
    LabelMap,
    RgbImage,
    L_ELBOW,
    L_HIP,
    L_SHOULDER,
    L_WRIST,
    R_ELBOW,
    R_HIP,
    R_SHOULDER,
    R_WRIST,
)
from .errors import DimensionMismatch, MissingCoreKeypoints

ARM_NODE_COUNT = 8
TORSO_COLS = 5
TORSO_ROWS = 8
TORSO_NODE_COUNT = TORSO_COLS * TORSO_ROWS
TOTAL_NODES = ARM_NODE_COUNT * 2 + TORSO_NODE_COUNT

# densepose part groups a node must sit on to count as visible
ARM_PARTS = frozenset(range(15, 23))
TORSO_PARTS = frozenset({1, 2})


class NodeRegion(enum.Enum):
    LEFT_ARM = "LeftArm"
    TORSO = "Torso"
    RIGHT_ARM = "RightArm"


class NodeStatus(enum.Enum):
    ACTIVE = "Active"
    MISSED = "Missed"
    UNUSED = "Unused"
    INVALID = "Invalid"


@dataclass(frozen=True)
class GridNode:
    region: NodeRegion
    index_in_region: int
    x: float
    y: float
    status: NodeStatus


@dataclass(frozen=True)
class SkeletonGrid:
    """56 nodes in fixed region-major order (LeftArm, Torso, RightArm), so
    index i means the same semantic body location in every grid."""

    nodes: tuple
    image_w: int
    image_h: int

    def __post_init__(self):
        if len(self.nodes) != TOTAL_NODES:
            raise ValueError(f"grid must have {TOTAL_NODES} nodes")
        counts = {region: 0 for region in NodeRegion}
        for node in self.nodes:
            counts[node.region] += 1
        if (
            counts[NodeRegion.LEFT_ARM] != ARM_NODE_COUNT
            or counts[NodeRegion.TORSO] != TORSO_NODE_COUNT
            or counts[NodeRegion.RIGHT_ARM] != ARM_NODE_COUNT
        ):
            raise ValueError("grid must be partitioned 8/40/8")
        object.__setattr__(self, "nodes", tuple(self.nodes))

    def active_indices(self) -> list[int]:
        return [i for i, n in enumerate(self.nodes) if n.status is NodeStatus.ACTIVE]

    def statuses(self) -> list[NodeStatus]:
        return [n.status for n in self.nodes]


def _sample_polyline(points: list[tuple[float, float]], n: int) -> np.ndarray:
    """n points evenly spaced by arc length along the polyline, endpoints
    included. A zero-length polyline collapses to n coincident points."""
    pts = np.asarray(points, dtype=np.float64)
    seg = np.diff(pts, axis=0)
    seg_len = np.hypot(seg[:, 0], seg[:, 1])
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    total = cum[-1]
    if total == 0.0:
        return np.repeat(pts[:1], n, axis=0)
    targets = np.linspace(0.0, total, n)
    out = np.empty((n, 2))
    for i, t in enumerate(targets):
        k = int(np.searchsorted(cum, t, side="right") - 1)
        k = min(k, len(seg_len) - 1)
        local = (t - cum[k]) / seg_len[k] if seg_len[k] > 0 else 0.0
        out[i] = pts[k] + local * seg[k]
    return out


def build_grid(kp: Keypoints) -> SkeletonGrid:
    """Interpolate the 56-node grid from shoulders, elbows, wrists and hips.

    A limb with any missing keypoint contributes Invalid nodes instead of
    failing; only losing both shoulders or both hips is unrecoverable.
    """
    if (not kp.present(R_SHOULDER) and not kp.present(L_SHOULDER)) or (
        not kp.present(R_HIP) and not kp.present(L_HIP)
    ):
        raise MissingCoreKeypoints("both shoulders or both hips absent")

    nodes: list[GridNode] = []

    def arm_nodes(region, shoulder, elbow, wrist):
        if kp.present(shoulder) and kp.present(elbow) and kp.present(wrist):
            pos = _sample_polyline([kp.xy(shoulder), kp.xy(elbow), kp.xy(wrist)],
                                   ARM_NODE_COUNT)
            return [
                GridNode(region, i, float(p[0]), float(p[1]), NodeStatus.ACTIVE)
                for i, p in enumerate(pos)
            ]
        return [
            GridNode(region, i, math.nan, math.nan, NodeStatus.INVALID)
            for i in range(ARM_NODE_COUNT)
        ]

    nodes += arm_nodes(NodeRegion.LEFT_ARM, L_SHOULDER, L_ELBOW, L_WRIST)

    torso_ok = all(kp.present(i) for i in (L_SHOULDER, R_SHOULDER, R_HIP, L_HIP))
    if torso_ok:
        sl = np.array(kp.xy(L_SHOULDER))
        sr = np.array(kp.xy(R_SHOULDER))
        hl = np.array(kp.xy(L_HIP))
        hr = np.array(kp.xy(R_HIP))
        for row in range(TORSO_ROWS):
            v = row / (TORSO_ROWS - 1)
            left = (1 - v) * sl + v * hl
            right = (1 - v) * sr + v * hr
            for col in range(TORSO_COLS):
                u = col / (TORSO_COLS - 1)
                p = (1 - u) * left + u * right
                nodes.append(
                    GridNode(
                        NodeRegion.TORSO,
                        row * TORSO_COLS + col,
                        float(p[0]),
                        float(p[1]),
                        NodeStatus.ACTIVE,
                    )
                )
    else:
        nodes += [
            GridNode(NodeRegion.TORSO, i, math.nan, math.nan, NodeStatus.INVALID)
            for i in range(TORSO_NODE_COUNT)
        ]

    nodes += arm_nodes(NodeRegion.RIGHT_ARM, R_SHOULDER, R_ELBOW, R_WRIST)
    return SkeletonGrid(nodes=tuple(nodes), image_w=kp.image_w, image_h=kp.image_h)


def _node_pixel(node: GridNode, width: int, height: int) -> tuple[int, int]:
    col = min(max(int(math.floor(node.x + 0.5)), 0), width - 1)
    row = min(max(int(math.floor(node.y + 0.5)), 0), height - 1)
    return row, col


def filter_missed(grid: SkeletonGrid, densepose: DenseposeMap) -> SkeletonGrid:
    """Demote Active nodes whose pixel is not on their expected body parts
    (arm nodes on arm parts, torso nodes on torso parts)."""
    if (densepose.width, densepose.height) != (grid.image_w, grid.image_h):
        raise DimensionMismatch(
            f"grid {grid.image_w}x{grid.image_h} vs densepose "
            f"{densepose.width}x{densepose.height}"
        )
    out = []
    for node in grid.nodes:
        if node.status is not NodeStatus.ACTIVE:
            out.append(node)
            continue
        expected = TORSO_PARTS if node.region is NodeRegion.TORSO else ARM_PARTS
        row, col = _node_pixel(node, densepose.width, densepose.height)
        if int(densepose.parts[row, col]) in expected:
            out.append(node)
        else:
            out.append(replace(node, status=NodeStatus.MISSED))
    return SkeletonGrid(nodes=tuple(out), image_w=grid.image_w, image_h=grid.image_h)


def filter_unused(grid: SkeletonGrid, parse: LabelMap) -> SkeletonGrid:
    """Demote Active nodes lying outside the tried-on garment region."""
    if (parse.width, parse.height) != (grid.image_w, grid.image_h):
        raise DimensionMismatch(
            f"grid {grid.image_w}x{grid.image_h} vs parse "
            f"{parse.width}x{parse.height}"
        )
    top = parse.role_mask("upper_clothes")
    out = []
    for node in grid.nodes:
        if node.status is not NodeStatus.ACTIVE:
            out.append(node)
            continue
        row, col = _node_pixel(node, parse.width, parse.height)
        if top[row, col]:
            out.append(node)
        else:
            out.append(replace(node, status=NodeStatus.UNUSED))
    return SkeletonGrid(nodes=tuple(out), image_w=grid.image_w, image_h=grid.image_h)


def common_active(real: SkeletonGrid, virt: SkeletonGrid) -> list[int]:
    """Sorted node indices Active in both grids; len() of this is N."""
    real_active = set(real.active_indices())
    return sorted(real_active.intersection(virt.active_indices()))


# --- debug output ---


def grid_to_json(grid: SkeletonGrid) -> str:
    doc = {
        "image_w": grid.image_w,
        "image_h": grid.image_h,
        "nodes": [
            {
                "index": i,
                "region": n.region.value,
                "index_in_region": n.index_in_region,
                "x": None if math.isnan(n.x) else n.x,
                "y": None if math.isnan(n.y) else n.y,
                "status": n.status.value,
            }
            for i, n in enumerate(grid.nodes)
        ],
    }
    return json.dumps(doc, indent=2, sort_keys=True)


_STATUS_COLORS = {
    NodeStatus.ACTIVE: (0, 220, 0),
    NodeStatus.MISSED: (230, 0, 0),
    NodeStatus.UNUSED: (240, 200, 0),
    NodeStatus.INVALID: (120, 120, 120),
}


def draw_overlay(image: RgbImage, grid: SkeletonGrid, radius: int = 2) -> RgbImage:
    """Image copy with each positioned node drawn as a status-colored dot."""
    out = image.pixels.copy()
    for node in grid.nodes:
        if math.isnan(node.x):
            continue
        row, col = _node_pixel(node, image.width, image.height)
        r0, r1 = max(row - radius, 0), min(row + radius + 1, image.height)
        c0, c1 = max(col - radius, 0), min(col + radius + 1, image.width)
        out[r0:r1, c0:c1] = _STATUS_COLORS[node.status]
    return RgbImage(pixels=out)

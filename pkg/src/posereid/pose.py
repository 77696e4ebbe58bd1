"""Keypoint heatmaps: ground-truth oracle, external files, labels, noise.

Heatmaps live on a (H/4, W/4) grid. Each keypoint contributes one channel:
an isotropic Gaussian blob at its (downsampled) location, plus a scalar
confidence. Confidences are thresholded into binary labels that mark which
keypoints count as reliably visible; the threshold comparison is inclusive
(confidence exactly at the threshold labels 1).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# Fraction of a keypoint's square neighborhood that occluders must cover is
# estimated on this many sample points per axis.
_COVERAGE_GRID = 16
# Half-size of the neighborhood square, in normalized image units.
_NEIGHBORHOOD_RADIUS = 0.08


@dataclass
class KeypointTruth:
    """Ground-truth pose for one rendered sample.

    Coordinates are normalized to [0, 1] (x across width, y down height).
    `occluder_boxes` are (x0, y0, x1, y1) rectangles in the same units.
    """

    points: np.ndarray  # (M, 2) as (x, y)
    visible: np.ndarray  # (M,) bool
    occluder_boxes: list[tuple[float, float, float, float]] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.points = np.asarray(self.points, dtype=np.float64)
        self.visible = np.asarray(self.visible, dtype=bool)
        if self.points.ndim != 2 or self.points.shape[1] != 2:
            raise ValueError("points must have shape (M, 2)")
        if self.visible.shape != (self.points.shape[0],):
            raise ValueError("visible must have shape (M,)")


@dataclass
class HeatmapSet:
    """M heatmap channels with per-keypoint confidences and binary labels."""

    maps: np.ndarray  # (M, H/4, W/4) float, non-negative
    confidences: np.ndarray  # (M,) in [0, 1]
    labels: np.ndarray  # (M,) int, 1 = high confidence
    source: str = "oracle"  # "oracle" | "file"

    def copy(self) -> "HeatmapSet":
        return HeatmapSet(
            self.maps.copy(), self.confidences.copy(), self.labels.copy(), self.source
        )

    @property
    def num_keypoints(self) -> int:
        return self.maps.shape[0]


def label_confidences(confidences: np.ndarray, threshold: float) -> np.ndarray:
    """Binary visibility labels: 1 where confidence >= threshold, else 0."""
    confidences = np.asarray(confidences, dtype=np.float64)
    if confidences.size and (confidences.min() < 0 or confidences.max() > 1):
        raise ValueError("confidences must lie in [0, 1]")
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must be in [0, 1], got {threshold}")
    return (confidences >= threshold).astype(np.int64)


def occlusion_coverage(
    point: np.ndarray | tuple[float, float],
    boxes: list[tuple[float, float, float, float]],
    radius: float = _NEIGHBORHOOD_RADIUS,
) -> float:
    """Fraction of the square neighborhood around `point` covered by boxes.

    Estimated on a fixed grid of sample points, so it is deterministic and
    strictly positive whenever the point itself lies inside a box.
    """
    if not boxes:
        return 0.0
    x, y = float(point[0]), float(point[1])
    offsets = (np.arange(_COVERAGE_GRID) + 0.5) / _COVERAGE_GRID * 2.0 - 1.0
    xs = x + offsets * radius
    ys = y + offsets * radius
    gx, gy = np.meshgrid(xs, ys)
    covered = np.zeros(gx.shape, dtype=bool)
    for x0, y0, x1, y1 in boxes:
        covered |= (gx >= x0) & (gx <= x1) & (gy >= y0) & (gy <= y1)
    return float(covered.mean())


def oracle_confidence(coverage: float, visible: bool, threshold: float) -> float:
    """Confidence from occluder coverage, banded so labels match visibility.

    The attenuation core is exp(-4 * coverage); visible keypoints are mapped
    into [threshold, 1], occluded ones strictly below the threshold. Labels
    derived with `label_confidences` therefore equal the visibility flags for
    any threshold in (0, 1]; a threshold of 0 degenerates to all-ones labels.
    """
    atten = float(np.exp(-4.0 * coverage))
    if visible:
        return threshold + (1.0 - threshold) * atten
    return 0.999 * threshold * atten


def render_blob(
    grid_hw: tuple[int, int], center_xy: tuple[float, float], sigma: float, amplitude: float
) -> np.ndarray:
    """Isotropic Gaussian on a (h, w) grid, peak `amplitude` at `center_xy`.

    `center_xy` is in grid pixel units (x across columns, y down rows).
    """
    h, w = grid_hw
    cx, cy = center_xy
    ys = np.arange(h, dtype=np.float64)[:, None]
    xs = np.arange(w, dtype=np.float64)[None, :]
    d2 = (xs - cx) ** 2 + (ys - cy) ** 2
    return amplitude * np.exp(-d2 / (2.0 * sigma**2))


def _grid_center(point: np.ndarray, grid_hw: tuple[int, int]) -> tuple[float, float]:
    """Normalized (x, y) -> continuous grid coords with cell-center alignment."""
    h, w = grid_hw
    return float(point[0]) * w - 0.5, float(point[1]) * h - 0.5


def synth_heatmaps(
    truth: KeypointTruth,
    image_hw: tuple[int, int],
    blob_sigma: float = 1.5,
    threshold: float = 0.2,
) -> HeatmapSet:
    """Oracle heatmaps from ground-truth pose.

    Visible keypoints render with peak 1.0; occluded keypoints render a
    low-amplitude blob (amplitude = confidence). A map is never zeroed for a
    low-confidence keypoint — downstream consumers decide via the labels.
    """
    height, width = image_hw
    if height % 4 or width % 4:
        raise ValueError("image dims must be divisible by 4")
    grid_hw = (height // 4, width // 4)
    m = truth.points.shape[0]
    maps = np.zeros((m, *grid_hw), dtype=np.float64)
    confidences = np.zeros(m, dtype=np.float64)
    for i in range(m):
        coverage = occlusion_coverage(truth.points[i], truth.occluder_boxes)
        conf = oracle_confidence(coverage, bool(truth.visible[i]), threshold)
        amplitude = 1.0 if truth.visible[i] else conf
        cx, cy = _grid_center(truth.points[i], grid_hw)
        maps[i] = render_blob(grid_hw, (cx, cy), blob_sigma, amplitude)
        confidences[i] = conf
    return HeatmapSet(maps, confidences, label_confidences(confidences, threshold), "oracle")


def heatmaps_from_triplets(
    triplets: np.ndarray,
    image_hw: tuple[int, int],
    blob_sigma: float = 1.5,
    threshold: float = 0.2,
) -> HeatmapSet:
    """Heatmaps from (x, y, confidence) rows, e.g. an external pose estimate.

    Blob amplitude equals the supplied confidence.
    """
    triplets = np.asarray(triplets, dtype=np.float64)
    if triplets.ndim != 2 or triplets.shape[1] != 3:
        raise ValueError("triplets must have shape (M, 3)")
    height, width = image_hw
    if height % 4 or width % 4:
        raise ValueError("image dims must be divisible by 4")
    grid_hw = (height // 4, width // 4)
    confidences = triplets[:, 2].copy()
    if confidences.size and (confidences.min() < 0 or confidences.max() > 1):
        raise ValueError("confidences must lie in [0, 1]")
    maps = np.zeros((triplets.shape[0], *grid_hw), dtype=np.float64)
    for i, (x, y, conf) in enumerate(triplets):
        cx, cy = _grid_center(np.array([x, y]), grid_hw)
        maps[i] = render_blob(grid_hw, (cx, cy), blob_sigma, conf)
    return HeatmapSet(maps, confidences, label_confidences(confidences, threshold), "file")


def save_keypoint_file(path: str | Path, records: dict[str, np.ndarray]) -> None:
    """Write keypoint records as JSON lines.

    One line per image: {"image_id": ..., "num_keypoints": M,
    "keypoints": [[x, y, confidence], ...]} with normalized coordinates.
    """
    path = Path(path)
    with path.open("w") as fh:
        for image_id, triplets in records.items():
            triplets = np.asarray(triplets, dtype=np.float64)
            if triplets.ndim != 2 or triplets.shape[1] != 3:
                raise ValueError(f"record {image_id!r} must have shape (M, 3)")
            fh.write(
                json.dumps(
                    {
                        "image_id": str(image_id),
                        "num_keypoints": int(triplets.shape[0]),
                        "keypoints": [[float(v) for v in row] for row in triplets],
                    }
                )
                + "\n"
            )


def load_keypoint_file(path: str | Path, num_keypoints: int | None = None) -> dict[str, np.ndarray]:
    """Parse a JSONL keypoint file into {image_id: (M, 3) array}."""
    path = Path(path)
    records: dict[str, np.ndarray] = {}
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: malformed record: {exc}") from exc
            try:
                image_id = str(obj["image_id"])
                declared = int(obj["num_keypoints"])
                triplets = np.asarray(obj["keypoints"], dtype=np.float64)
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed record: {exc}") from exc
            if triplets.ndim != 2 or triplets.shape[1] != 3 or triplets.shape[0] != declared:
                raise ValueError(
                    f"{path}:{lineno}: keypoint rows do not match num_keypoints={declared}"
                )
            if num_keypoints is not None and declared != num_keypoints:
                raise ValueError(
                    f"{path}:{lineno}: expected {num_keypoints} keypoints, file has {declared}"
                )
            records[image_id] = triplets
    return records


def load_external_keypoints(
    path: str | Path,
    image_id: str,
    image_hw: tuple[int, int],
    num_keypoints: int,
    blob_sigma: float = 1.5,
    threshold: float = 0.2,
) -> HeatmapSet:
    """Load one image's keypoints from a JSONL file and render heatmaps."""
    records = load_keypoint_file(path, num_keypoints=num_keypoints)
    if image_id not in records:
        raise ValueError(f"image id {image_id!r} not present in {path}")
    return heatmaps_from_triplets(records[image_id], image_hw, blob_sigma, threshold)


def add_pose_noise(
    heatmaps: HeatmapSet,
    sigma: float,
    rng: np.random.Generator,
    threshold: float = 0.2,
) -> HeatmapSet:
    """Elementwise Gaussian noise on the maps, clamped at 0.

    With sigma > 0, confidences are re-read from the perturbed peaks
    (clipped to [0, 1]) and labels re-derived; sigma == 0 returns the set
    unchanged.
    """
    if sigma < 0:
        raise ValueError(f"noise sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return heatmaps.copy()
    maps = np.clip(heatmaps.maps + rng.normal(0.0, sigma, size=heatmaps.maps.shape), 0.0, None)
    confidences = np.clip(maps.reshape(maps.shape[0], -1).max(axis=1), 0.0, 1.0)
    return HeatmapSet(maps, confidences, label_confidences(confidences, threshold), heatmaps.source)

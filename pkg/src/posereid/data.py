"""Synthetic occluded-person dataset.

Each identity is a colored stick figure built from a 17-keypoint template:
the skeleton geometry and the per-part colors are jittered deterministically
per (seed, identity). Samples add per-sample pose jitter, a per-camera color
transform, and optional rectangle occluders; a keypoint is marked invisible
exactly when its coordinate lies inside an occluder box. The whole dataset
is a pure function of (config, seed).

Datasets serialize to a directory of lossless PNGs plus one metadata.json
holding per-record identity, camera, split, keypoints, visibility, and
occluder boxes.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .config import AugmentConfig, DatasetConfig, OcclusionConfig, dataset_config_from_dict

NUM_TEMPLATE_KEYPOINTS = 17

KEYPOINT_NAMES = [
    "nose", "left_eye", "right_eye", "left_ear", "right_ear",
    "left_shoulder", "right_shoulder", "left_elbow", "right_elbow",
    "left_wrist", "right_wrist", "left_hip", "right_hip",
    "left_knee", "right_knee", "left_ankle", "right_ankle",
]

# Template pose, normalized (x, y) with y growing downward.
_TEMPLATE = np.array(
    [
        (0.50, 0.10), (0.44, 0.08), (0.56, 0.08), (0.38, 0.10), (0.62, 0.10),
        (0.30, 0.24), (0.70, 0.24), (0.22, 0.40), (0.78, 0.40),
        (0.18, 0.55), (0.82, 0.55), (0.36, 0.52), (0.64, 0.52),
        (0.34, 0.72), (0.66, 0.72), (0.33, 0.92), (0.67, 0.92),
    ],
    dtype=np.float64,
)

SKELETON_EDGES = [
    (0, 1), (0, 2), (1, 3), (2, 4),
    (5, 6), (0, 5), (0, 6),
    (5, 7), (7, 9), (6, 8), (8, 10),
    (5, 11), (6, 12), (11, 12),
    (11, 13), (13, 15), (12, 14), (14, 16),
]


@dataclass
class IdentitySpec:
    """Deterministic per-identity appearance: skeleton geometry + part colors."""

    identity_id: int
    keypoints: np.ndarray  # (17, 2) normalized template pose
    part_colors: np.ndarray  # (17, 3) RGB in [0, 1]


@dataclass
class SampleRecord:
    """One rendered sample plus its ground truth."""

    image_id: str
    identity_id: int
    camera_id: int
    split: str  # "train" | "query" | "gallery"
    keypoints: np.ndarray  # (17, 2) normalized, after per-sample jitter
    visible: np.ndarray  # (17,) bool
    occluder_boxes: list[tuple[float, float, float, float]]
    image: np.ndarray | None = None  # (H, W, 3) float32 in [0, 1]


def generate_identity(seed: int, identity_id: int, num_keypoints: int = 17) -> IdentitySpec:
    """Jitter the template into a per-identity skeleton with its own colors."""
    if num_keypoints != NUM_TEMPLATE_KEYPOINTS:
        raise ValueError(f"the figure template has {NUM_TEMPLATE_KEYPOINTS} keypoints")
    rng = np.random.default_rng((seed, identity_id, 0xA11CE))
    keypoints = _TEMPLATE + rng.normal(0.0, 0.015, size=_TEMPLATE.shape)
    keypoints = np.clip(keypoints, 0.04, 0.96)
    part_colors = rng.uniform(0.15, 0.95, size=(num_keypoints, 3))
    return IdentitySpec(identity_id=identity_id, keypoints=keypoints, part_colors=part_colors)


def camera_color_transform(camera_id: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-camera channel gains and offsets, stable across datasets/seeds."""
    rng = np.random.default_rng((camera_id, 0xCA3EBA))
    gain = rng.uniform(0.7, 1.1, size=3)
    offset = rng.uniform(-0.08, 0.08, size=3)
    return gain, offset


def point_in_box(point: np.ndarray, box: tuple[float, float, float, float]) -> bool:
    x0, y0, x1, y1 = box
    return bool(x0 <= point[0] <= x1 and y0 <= point[1] <= y1)


def sample_occluders(
    rng: np.random.Generator, occlusion: OcclusionConfig
) -> tuple[list[tuple[float, float, float, float]], list[np.ndarray]]:
    """Draw occluder rectangles and their fill colors from the config."""
    occlusion.validate()
    boxes: list[tuple[float, float, float, float]] = []
    colors: list[np.ndarray] = []
    if rng.random() >= occlusion.probability:
        return boxes, colors
    count = int(rng.integers(1, occlusion.max_boxes + 1))
    for _ in range(count):
        area = rng.uniform(occlusion.min_area, occlusion.max_area)
        aspect = float(np.exp(rng.uniform(np.log(0.5), np.log(2.0))))
        bw = min(float(np.sqrt(area * aspect)), 0.95)
        bh = min(area / bw, 0.95)
        x0 = rng.uniform(0.0, 1.0 - bw)
        y0 = rng.uniform(0.0, 1.0 - bh)
        boxes.append((float(x0), float(y0), float(x0 + bw), float(y0 + bh)))
        if occlusion.distractor:
            colors.append(rng.uniform(0.15, 0.95, size=3))
        else:
            gray = rng.uniform(0.25, 0.85)
            colors.append(np.full(3, gray) + rng.uniform(-0.03, 0.03, size=3))
    return boxes, colors


def _paint_segment(
    image: np.ndarray,
    p0: np.ndarray,
    p1: np.ndarray,
    color: np.ndarray,
    thickness: float,
) -> None:
    """Paint a thick line segment; endpoints in pixel coords (x, y)."""
    h, w, _ = image.shape
    ys = np.arange(h, dtype=np.float64)[:, None] + 0.5
    xs = np.arange(w, dtype=np.float64)[None, :] + 0.5
    d = p1 - p0
    length2 = float(d @ d)
    if length2 < 1e-12:
        t = np.zeros((h, w))
    else:
        t = np.clip(((xs - p0[0]) * d[0] + (ys - p0[1]) * d[1]) / length2, 0.0, 1.0)
    px = p0[0] + t * d[0]
    py = p0[1] + t * d[1]
    dist2 = (xs - px) ** 2 + (ys - py) ** 2
    mask = dist2 <= thickness**2
    image[mask] = color


def render_sample(
    spec: IdentitySpec,
    camera_id: int,
    occlusion: OcclusionConfig,
    rng: np.random.Generator,
    image_hw: tuple[int, int] = (64, 32),
    pose_jitter: float = 0.02,
    background_noise: float = 0.02,
    boxes: list[tuple[float, float, float, float]] | None = None,
) -> SampleRecord:
    """Render one sample of an identity under one camera.

    `boxes` forces explicit occluder rectangles (otherwise they are sampled
    from the occlusion config). Identity, image id, and split are filled in
    by the dataset builder.
    """
    h, w = image_hw
    keypoints = spec.keypoints + rng.normal(0.0, pose_jitter, size=spec.keypoints.shape)
    keypoints = np.clip(keypoints, 0.03, 0.97)

    image = np.full((h, w, 3), 0.12, dtype=np.float64)
    image += rng.normal(0.0, background_noise, size=image.shape)

    px = np.column_stack([keypoints[:, 0] * w, keypoints[:, 1] * h])
    limb = max(1.2, 0.085 * w)
    for a, b in SKELETON_EDGES:
        _paint_segment(image, px[a], px[b], spec.part_colors[b], limb)
    ys = np.arange(h, dtype=np.float64)[:, None] + 0.5
    xs = np.arange(w, dtype=np.float64)[None, :] + 0.5
    joint = max(1.2, 0.055 * w)
    for i in range(keypoints.shape[0]):
        r = joint * (2.2 if i == 0 else 1.0)  # nose doubles as the head
        mask = (xs - px[i, 0]) ** 2 + (ys - px[i, 1]) ** 2 <= r**2
        image[mask] = spec.part_colors[i]

    if boxes is None:
        boxes, box_colors = sample_occluders(rng, occlusion)
    else:
        boxes = [tuple(float(v) for v in box) for box in boxes]
        box_colors = [np.full(3, 0.55) for _ in boxes]
    for box, color in zip(boxes, box_colors):
        x0, y0, x1, y1 = box
        c0, c1 = int(np.floor(x0 * w)), int(np.ceil(x1 * w))
        r0, r1 = int(np.floor(y0 * h)), int(np.ceil(y1 * h))
        image[max(r0, 0) : max(r1, 0), max(c0, 0) : max(c1, 0)] = color

    visible = np.array([not any(point_in_box(kp, box) for box in boxes) for kp in keypoints])

    gain, offset = camera_color_transform(camera_id)
    image = np.clip(image * gain + offset, 0.0, 1.0)

    return SampleRecord(
        image_id="",
        identity_id=spec.identity_id,
        camera_id=camera_id,
        split="",
        keypoints=keypoints,
        visible=visible,
        occluder_boxes=list(boxes),
        image=image.astype(np.float32),
    )


def _split_for_index(sample_index: int, samples_per_identity: int, train_fraction: float) -> str:
    n_train = int(round(samples_per_identity * train_fraction))
    n_train = min(max(n_train, 1), samples_per_identity - 2)
    if sample_index < n_train:
        return "train"
    return "query" if (sample_index - n_train) % 2 == 0 else "gallery"


@dataclass
class DatasetManifest:
    """In-memory dataset: config + records (images attached)."""

    config: DatasetConfig
    records: list[SampleRecord]

    def split(self, name: str) -> list[SampleRecord]:
        found = [r for r in self.records if r.split == name]
        if not found:
            raise ValueError(f"split {name!r} is empty or unknown")
        return found

    def record(self, image_id: str) -> SampleRecord:
        for r in self.records:
            if r.image_id == image_id:
                return r
        raise KeyError(f"no record with image id {image_id!r}")


def build_dataset(cfg: DatasetConfig) -> DatasetManifest:
    """Render the full dataset deterministically from the config."""
    cfg.validate()
    if cfg.num_keypoints != NUM_TEMPLATE_KEYPOINTS:
        raise ValueError(f"the figure template has {NUM_TEMPLATE_KEYPOINTS} keypoints")
    records: list[SampleRecord] = []
    for identity in range(cfg.num_identities):
        spec = generate_identity(cfg.seed, identity)
        for s in range(cfg.samples_per_identity):
            split = _split_for_index(s, cfg.samples_per_identity, cfg.train_fraction)
            rng = np.random.default_rng((cfg.seed, identity, s))
            record = render_sample(
                spec,
                camera_id=s % cfg.num_cameras,
                occlusion=cfg.occlusion_for_split(split),
                rng=rng,
                image_hw=(cfg.image_height, cfg.image_width),
                pose_jitter=cfg.pose_jitter,
                background_noise=cfg.background_noise,
            )
            record.image_id = f"{identity * cfg.samples_per_identity + s:05d}"
            record.split = split
            records.append(record)
    manifest = DatasetManifest(config=cfg, records=records)
    _check_camera_constraint(manifest)
    return manifest


def _check_camera_constraint(manifest: DatasetManifest) -> None:
    """Every query identity must appear in the gallery under another camera."""
    gallery = {}
    for r in manifest.records:
        if r.split == "gallery":
            gallery.setdefault(r.identity_id, set()).add(r.camera_id)
    for r in manifest.records:
        if r.split != "query":
            continue
        cams = gallery.get(r.identity_id, set())
        if not (cams - {r.camera_id}):
            raise ValueError(
                f"query {r.image_id} (identity {r.identity_id}, camera {r.camera_id}) "
                "has no cross-camera gallery sample; adjust splits/cameras"
            )


def save_manifest(manifest: DatasetManifest, out_dir: str | Path) -> Path:
    """Write images/<id>.png plus metadata.json under `out_dir`."""
    out_dir = Path(out_dir)
    image_dir = out_dir / "images"
    image_dir.mkdir(parents=True, exist_ok=True)
    meta_records = []
    for r in manifest.records:
        if r.image is None:
            raise ValueError(f"record {r.image_id} has no image attached")
        img8 = np.clip(np.round(r.image * 255.0), 0, 255).astype(np.uint8)
        Image.fromarray(img8).save(image_dir / f"{r.image_id}.png")
        meta_records.append(
            {
                "image_id": r.image_id,
                "identity_id": int(r.identity_id),
                "camera_id": int(r.camera_id),
                "split": r.split,
                "keypoints": [[float(x), float(y)] for x, y in r.keypoints],
                "visible": [bool(v) for v in r.visible],
                "occluder_boxes": [[float(v) for v in box] for box in r.occluder_boxes],
            }
        )
    meta = {"config": dataclasses.asdict(manifest.config), "records": meta_records}
    (out_dir / "metadata.json").write_text(json.dumps(meta, indent=1) + "\n")
    return out_dir


def load_manifest(root: str | Path) -> DatasetManifest:
    """Load a dataset directory produced by `save_manifest`."""
    root = Path(root)
    meta_path = root / "metadata.json"
    if not meta_path.exists():
        raise FileNotFoundError(f"no metadata.json under {root}")
    meta = json.loads(meta_path.read_text())
    cfg = dataset_config_from_dict(meta["config"])
    records = []
    for m in meta["records"]:
        img_path = root / "images" / f"{m['image_id']}.png"
        image = np.asarray(Image.open(img_path), dtype=np.float32) / 255.0
        records.append(
            SampleRecord(
                image_id=m["image_id"],
                identity_id=int(m["identity_id"]),
                camera_id=int(m["camera_id"]),
                split=m["split"],
                keypoints=np.asarray(m["keypoints"], dtype=np.float64),
                visible=np.asarray(m["visible"], dtype=bool),
                occluder_boxes=[tuple(box) for box in m["occluder_boxes"]],
                image=image,
            )
        )
    return DatasetManifest(config=cfg, records=records)


def augment_image(image: np.ndarray, rng: np.random.Generator, aug: AugmentConfig) -> np.ndarray:
    """Flip / pad+crop / random-erase. Pose truth is left untouched."""
    if not aug.enabled:
        return image
    h, w, _ = image.shape
    out = image
    if aug.flip_probability > 0 and rng.random() < aug.flip_probability:
        out = out[:, ::-1]
    if aug.pad_pixels > 0:
        p = aug.pad_pixels
        padded = np.pad(out, ((p, p), (p, p), (0, 0)), mode="edge")
        oy = int(rng.integers(0, 2 * p + 1))
        ox = int(rng.integers(0, 2 * p + 1))
        out = padded[oy : oy + h, ox : ox + w]
    if aug.erase_probability > 0 and rng.random() < aug.erase_probability:
        area = rng.uniform(aug.erase_min_area, aug.erase_max_area) * h * w
        aspect = float(np.exp(rng.uniform(np.log(0.5), np.log(2.0))))
        eh = min(h, max(1, int(round(np.sqrt(area * aspect)))))
        ew = min(w, max(1, int(round(np.sqrt(area / aspect)))))
        y0 = int(rng.integers(0, h - eh + 1))
        x0 = int(rng.integers(0, w - ew + 1))
        out = out.copy()
        out[y0 : y0 + eh, x0 : x0 + ew] = rng.uniform(0.0, 1.0, size=(eh, ew, 3)).astype(
            out.dtype
        )
    return np.ascontiguousarray(out)

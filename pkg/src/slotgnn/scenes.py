"""Procedural around-view parking scenes and the binary dataset format.

A scene is a textured top-down image with 1..k rectangular perpendicular
parking slots drawn as bright painted lines. Each slot contributes two
marking points (the entrance-line endpoints) and one ordered entrance pair,
directed so the slot interior always lies to the same side of the line:
with unit entrance direction u, the interior extends along n = (-u.y, u.x),
which makes the signed (shoelace) area of the corner polygon positive in
image coordinates for every generated slot.

Slots are open at the rear: side lines terminate bare instead of meeting a
rear line. A rear line would create corner junctions locally identical to
entrance corners, which no detector could tell apart under rotation.
Distractor segments and blobs provide negatives that never sit on a
marking point.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .binio import BinaryReader
from .errors import DataError, FormatError, GenerationError, ParameterError

DATASET_MAGIC = b"PSGD"
DATASET_VERSION = 1

MAX_ATTEMPTS = 100

PALETTES = {
    # base color low/high corners, mottle amplitude
    "asphalt": ((0.20, 0.20, 0.22), (0.36, 0.36, 0.38), 0.05),
    "brick": ((0.40, 0.24, 0.20), (0.55, 0.34, 0.28), 0.04),
}


@dataclass
class SceneConfig:
    image_size: int = 256
    slots_min: int = 1
    slots_max: int = 3
    slot_width: tuple[float, float] = (0.16, 0.34)
    slot_depth: tuple[float, float] = (0.18, 0.34)
    rotation: tuple[float, float] = (0.0, 2.0 * np.pi)
    line_thickness: float = 0.008
    noise_amplitude: float = 0.02
    distractors: int = 3
    palettes: tuple[str, ...] = ("asphalt", "brick")
    margin: float = 0.05
    min_separation: float = 0.09375  # 1.5 cells of a 16-cell grid

    def __post_init__(self):
        if not 0 <= self.slots_min <= self.slots_max:
            raise ParameterError(
                f"invalid slot count range [{self.slots_min}, {self.slots_max}]")
        for name in ("slot_width", "slot_depth", "rotation"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ParameterError(f"{name} range ({lo}, {hi}) is inverted")
        if self.slot_width[0] <= self.min_separation:
            raise ParameterError(
                f"slot width must exceed the minimum point separation "
                f"{self.min_separation}, got {self.slot_width}")
        if not 0.0 < self.margin < 0.5:
            raise ParameterError(f"margin must be in (0, 0.5), got {self.margin}")
        if self.distractors < 0 or self.line_thickness <= 0:
            raise ParameterError("distractor count and line thickness must be positive")
        for p in self.palettes:
            if p not in PALETTES:
                raise ParameterError(f"unknown palette {p!r} (have {sorted(PALETTES)})")
        if not self.palettes:
            raise ParameterError("need at least one background palette")


@dataclass
class SceneRecord:
    """One labeled scene: float32 image in [0,1], marking points in
    normalized coordinates, and ordered entrance pairs indexing them."""

    seed: int
    image: np.ndarray
    points: np.ndarray
    entrance_pairs: list[tuple[int, int]] = field(default_factory=list)

    def validate(self, min_separation: float = 0.0) -> None:
        n = self.points.shape[0]
        if self.points.shape != (n, 2):
            raise DataError(f"points must be (N, 2), got {self.points.shape}")
        if n and not (self.points.min() >= 0.0 and self.points.max() <= 1.0):
            raise DataError("points outside the unit square")
        for i, j in self.entrance_pairs:
            if not (0 <= i < n and 0 <= j < n) or i == j:
                raise DataError(f"entrance pair ({i}, {j}) invalid for {n} points")
        if n > 1 and min_separation > 0.0:
            diff = self.points[:, None, :] - self.points[None, :, :]
            dist = np.sqrt((diff ** 2).sum(axis=2))
            dist[np.diag_indices(n)] = np.inf
            if dist.min() < min_separation:
                raise DataError(
                    f"two points closer than {min_separation}: {dist.min():.5f}")


def _segment_distance(px: np.ndarray, py: np.ndarray,
                      a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distance from points (px, py) to segment a-b."""
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return np.hypot(px - a[0], py - a[1])
    t = np.clip(((px - a[0]) * ab[0] + (py - a[1]) * ab[1]) / denom, 0.0, 1.0)
    return np.hypot(px - (a[0] + t * ab[0]), py - (a[1] + t * ab[1]))


def _pixel_window(img: np.ndarray, lo: np.ndarray, hi: np.ndarray, pad: float):
    """Clipped pixel box around a normalized-coordinate extent, with the
    pixel-center coordinate grids of that box."""
    size = img.shape[0]
    x0 = max(0, int(np.floor(lo[0] * size - pad)))
    y0 = max(0, int(np.floor(lo[1] * size - pad)))
    x1 = min(size, int(np.ceil(hi[0] * size + pad)) + 1)
    y1 = min(size, int(np.ceil(hi[1] * size + pad)) + 1)
    if x0 >= x1 or y0 >= y1:
        return None
    yy, xx = np.meshgrid(np.arange(y0, y1) + 0.5, np.arange(x0, x1) + 0.5,
                         indexing="ij")
    return (slice(y0, y1), slice(x0, x1)), xx, yy


def _draw_segment(img: np.ndarray, a, b, halfwidth_px: float,
                  color: np.ndarray, alpha: float = 1.0) -> None:
    """Anti-aliased segment: coverage falls off linearly over one pixel."""
    size = img.shape[0]
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    window = _pixel_window(img, np.minimum(a, b), np.maximum(a, b), halfwidth_px + 1.5)
    if window is None:
        return
    box, xx, yy = window
    d = _segment_distance(xx, yy, a * size, b * size)
    cov = np.clip(halfwidth_px + 0.5 - d, 0.0, 1.0) * alpha
    img[box] += cov[:, :, None] * (color - img[box])


def _draw_disc(img: np.ndarray, center, radius_px: float,
               color: np.ndarray, alpha: float = 1.0) -> None:
    size = img.shape[0]
    center = np.asarray(center, dtype=float)
    window = _pixel_window(img, center, center, radius_px + 1.5)
    if window is None:
        return
    box, xx, yy = window
    d = np.hypot(xx - center[0] * size, yy - center[1] * size)
    cov = np.clip(radius_px + 0.5 - d, 0.0, 1.0) * alpha
    img[box] += cov[:, :, None] * (color - img[box])


def _background(rng: np.random.Generator, config: SceneConfig) -> np.ndarray:
    size = config.image_size
    name = config.palettes[int(rng.integers(len(config.palettes)))]
    lo, hi, mottle = PALETTES[name]
    base = rng.uniform(lo, hi)
    img = np.tile(base, (size, size, 1))
    # low-frequency mottling: coarse noise, bilinearly upsampled
    coarse = rng.normal(0.0, 1.0, (9, 9))
    t = np.linspace(0.0, 8.0, size)
    i0 = np.clip(t.astype(int), 0, 7)
    frac = t - i0
    rows = coarse[i0] * (1 - frac)[:, None] + coarse[np.minimum(i0 + 1, 8)] * frac[:, None]
    smooth = rows[:, i0] * (1 - frac) + rows[:, np.minimum(i0 + 1, 8)] * frac
    img += mottle * smooth[:, :, None]
    return img


def _paint(rng: np.random.Generator) -> np.ndarray:
    if rng.random() < 0.7:  # white paint, else yellow
        v = rng.uniform(0.82, 0.95)
        return np.array([v, v, v]) + rng.uniform(-0.02, 0.02, 3)
    return np.array([rng.uniform(0.78, 0.9), rng.uniform(0.72, 0.85),
                     rng.uniform(0.25, 0.4)])


def _min_distance_to_points(points: np.ndarray, a: np.ndarray,
                            b: np.ndarray | None = None) -> float:
    if points.size == 0:
        return np.inf
    if b is None:
        return float(np.hypot(*(points - a).T).min())
    return float(_segment_distance(points[:, 0], points[:, 1], a, b).min())


@dataclass
class _Slot:
    p1: np.ndarray
    p2: np.ndarray
    depth: float
    normal: np.ndarray
    overhang: float
    center: np.ndarray
    radius: float


def _sample_slot(rng: np.random.Generator, config: SceneConfig,
                 points: list[np.ndarray], placed: list[_Slot],
                 index: int) -> _Slot:
    m = config.margin
    for _ in range(MAX_ATTEMPTS):
        theta = rng.uniform(*config.rotation)
        width = rng.uniform(*config.slot_width)
        depth = rng.uniform(*config.slot_depth)
        overhang = rng.uniform(0.015, 0.04) if rng.random() < 0.5 else 0.0
        p1 = rng.uniform(m, 1.0 - m, 2)
        u = np.array([np.cos(theta), np.sin(theta)])
        p2 = p1 + width * u
        if not ((m <= p2) & (p2 <= 1.0 - m)).all():
            continue
        normal = np.array([-u[1], u[0]])
        corners = np.stack([p1, p2, p2 + depth * normal, p1 + depth * normal])
        center = corners.mean(axis=0)
        radius = float(np.hypot(*(corners - center).T).max()) + overhang + 0.02
        if any(np.hypot(*(s.center - center)) < s.radius + radius for s in placed):
            continue
        existing = np.asarray(points).reshape(-1, 2)
        if existing.size and min(_min_distance_to_points(existing, p1),
                                 _min_distance_to_points(existing, p2)) \
                < config.min_separation:
            continue
        return _Slot(p1, p2, depth, normal, overhang, center, radius)
    raise GenerationError(
        f"could not place slot {index} after {MAX_ATTEMPTS} attempts; "
        f"config geometry is too dense for the separation invariant")


def _draw_slot(img: np.ndarray, slot: _Slot, halfw: float,
               color: np.ndarray) -> None:
    for p in (slot.p1, slot.p2):
        start = p - slot.overhang * slot.normal
        _draw_segment(img, start, p + slot.depth * slot.normal, halfw, color)
    _draw_segment(img, slot.p1, slot.p2, halfw, color)


def _place_distractor(rng: np.random.Generator, config: SceneConfig,
                      img: np.ndarray, points: np.ndarray, index: int) -> None:
    size = config.image_size
    halfw = config.line_thickness * size / 2.0
    for _ in range(MAX_ATTEMPTS):
        if rng.random() < 0.5:  # stray line segment
            a = rng.uniform(0.02, 0.98, 2)
            angle = rng.uniform(0.0, 2.0 * np.pi)
            length = rng.uniform(0.1, 0.4)
            b = a + length * np.array([np.cos(angle), np.sin(angle)])
            b = np.clip(b, 0.02, 0.98)
            if _min_distance_to_points(points, a, b) < config.min_separation:
                continue
            _draw_segment(img, a, b, halfw, _paint(rng), rng.uniform(0.45, 1.0))
        else:  # stain or patch blob
            center = rng.uniform(0.02, 0.98, 2)
            radius = rng.uniform(0.02, 0.06)
            if _min_distance_to_points(points, center) \
                    < config.min_separation + radius:
                continue
            v = rng.uniform(0.05, 0.7)
            color = np.clip(np.array([v, v, v]) + rng.uniform(-0.05, 0.05, 3), 0, 1)
            _draw_disc(img, center, radius * size, color, rng.uniform(0.5, 1.0))
        return
    raise GenerationError(
        f"could not place distractor {index} after {MAX_ATTEMPTS} attempts")


def generate_scene(config: SceneConfig, seed: int) -> SceneRecord:
    """Deterministic scene from (config, seed)."""
    rng = np.random.default_rng(seed)
    img = _background(rng, config)
    halfw = config.line_thickness * config.image_size / 2.0

    n_slots = int(rng.integers(config.slots_min, config.slots_max + 1))
    slots: list[_Slot] = []
    points: list[np.ndarray] = []
    pairs: list[tuple[int, int]] = []
    for k in range(n_slots):
        slot = _sample_slot(rng, config, points, slots, k)
        slots.append(slot)
        _draw_slot(img, slot, halfw, _paint(rng))
        pairs.append((len(points), len(points) + 1))
        points.extend([slot.p1, slot.p2])

    point_arr = np.asarray(points, dtype=float).reshape(-1, 2)
    for k in range(config.distractors):
        _place_distractor(rng, config, img, point_arr, k)

    if config.noise_amplitude > 0:
        img += rng.normal(0.0, config.noise_amplitude, img.shape)
    image = np.clip(img, 0.0, 1.0).astype(np.float32)
    record = SceneRecord(int(seed), image, point_arr, pairs)
    record.validate(config.min_separation)
    return record


def generate_dataset(config: SceneConfig, count: int, seed: int) -> list[SceneRecord]:
    """Scenes for seeds seed..seed+count-1."""
    return [generate_scene(config, seed + i) for i in range(count)]


def write_dataset(records: list[SceneRecord], path: str) -> None:
    with open(path, "wb") as fh:
        fh.write(DATASET_MAGIC)
        fh.write(struct.pack("<I", DATASET_VERSION))
        fh.write(struct.pack("<I", len(records)))
        for rec in records:
            rec.validate()
            if rec.image.ndim != 3 or rec.image.shape[2] != 3 \
                    or rec.image.shape[0] != rec.image.shape[1]:
                raise DataError(f"image must be square (S, S, 3), got {rec.image.shape}")
            fh.write(struct.pack("<Q", rec.seed))
            fh.write(struct.pack("<I", rec.points.shape[0]))
            fh.write(np.ascontiguousarray(rec.points, dtype="<f8").tobytes())
            fh.write(struct.pack("<I", len(rec.entrance_pairs)))
            for i, j in rec.entrance_pairs:
                fh.write(struct.pack("<II", i, j))
            fh.write(struct.pack("<I", rec.image.shape[0]))
            fh.write(np.ascontiguousarray(rec.image, dtype="<f4").tobytes())


def read_dataset(path: str) -> list[SceneRecord]:
    with open(path, "rb") as fh:
        blob = fh.read()
    r = BinaryReader(blob, "dataset")
    r.expect_magic(DATASET_MAGIC)
    version = r.u32("version")
    if version != DATASET_VERSION:
        raise FormatError(f"dataset: unsupported version {version} at byte offset 4")
    count = r.u32("record count")
    records = []
    for _ in range(count):
        seed = r.u64("seed")
        n_points = r.u32("point count")
        pts = np.frombuffer(r.take(16 * n_points, "points"),
                            dtype="<f8").reshape(n_points, 2).copy()
        n_pairs = r.u32("pair count")
        pairs = []
        for _ in range(n_pairs):
            i, j = struct.unpack("<II", r.take(8, "pair"))
            pairs.append((i, j))
        size = r.u32("image size")
        img = np.frombuffer(r.take(4 * size * size * 3, "image"),
                            dtype="<f4").reshape(size, size, 3).copy()
        records.append(SceneRecord(seed, img, pts, pairs))
    r.expect_end()
    return records

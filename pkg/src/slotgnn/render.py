"""Portable-pixmap output and prediction overlays.

Overlays follow the usual debugging palette: detected marking points as
filled red circles, entrance lines as blue segments.
"""

from __future__ import annotations

import numpy as np

from .discriminator import SlotPrediction
from .errors import DataError, FormatError
from .scenes import _draw_disc, _draw_segment

POINT_COLOR = np.array([0.9, 0.1, 0.1])
LINE_COLOR = np.array([0.15, 0.3, 0.95])


def write_ppm(image: np.ndarray, path: str) -> None:
    """Write a (H, W, 3) image as binary PPM; floats are taken as [0, 1]."""
    if image.ndim != 3 or image.shape[2] != 3:
        raise DataError(f"PPM needs an (H, W, 3) image, got {image.shape}")
    if image.dtype != np.uint8:
        image = (np.clip(image, 0.0, 1.0) * 255.0).round().astype(np.uint8)
    h, w = image.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(image.tobytes())


def read_ppm(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    fields = []
    pos = 0
    while len(fields) < 4:
        while pos < len(blob) and blob[pos:pos + 1].isspace():
            pos += 1
        if blob[pos:pos + 1] == b"#":  # comment runs to end of line
            while pos < len(blob) and blob[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(blob) and not blob[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"ppm: truncated header at byte offset {pos}")
        fields.append(blob[start:pos])
    pos += 1  # single whitespace after maxval
    if fields[0] != b"P6":
        raise FormatError(f"ppm: unsupported format {fields[0]!r}, expected P6")
    w, h, maxval = (int(f) for f in fields[1:])
    if maxval != 255:
        raise FormatError(f"ppm: unsupported maxval {maxval}")
    need = w * h * 3
    data = blob[pos:pos + need]
    if len(data) != need:
        raise FormatError(
            f"ppm: truncated pixel data at byte offset {pos} "
            f"(need {need} bytes, have {len(data)})")
    return np.frombuffer(data, dtype=np.uint8).reshape(h, w, 3).copy()


def render_overlay(image: np.ndarray, predictions: list[SlotPrediction],
                   out_path: str, point_radius_px: float = 4.0,
                   line_halfwidth_px: float = 1.2) -> None:
    """Draw predictions over a copy of the image and write it as PPM.
    Out-of-range coordinates are clamped to the frame."""
    canvas = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0).copy()
    for pred in predictions:
        a = np.clip([pred.x1, pred.y1], 0.0, 1.0)
        b = np.clip([pred.x2, pred.y2], 0.0, 1.0)
        _draw_segment(canvas, a, b, line_halfwidth_px, LINE_COLOR)
    for pred in predictions:
        for p in ((pred.x1, pred.y1), (pred.x2, pred.y2)):
            _draw_disc(canvas, np.clip(p, 0.0, 1.0), point_radius_px, POINT_COLOR)
    write_ppm(canvas, out_path)

"""Landmark-geometry symmetry properties and a mirrored-half dissimilarity.

Coordinates are pixel coordinates with y increasing downward.  The
mirror-based metric is a plain pixel-space stand-in for perceptual
half-face similarity scores, which are ingested as precomputed columns.
"""

import csv
import math
import re
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import map_coordinates

from .errors import (
    DegenerateInputError,
    InsufficientDataError,
    ParseError,
    SchemaError,
    ValidationError,
)

MIN_CROP_PIXELS = 8

LANDMARK_COLUMNS = ("sample_id", "lx", "ly", "rx", "ry", "nx", "ny", "sx", "sy")


@dataclass(frozen=True)
class LandmarkSet:
    """Eye centers and nose-bridge endpoints; image-left eye must lie left of
    the image-right eye (subject's right/left is not used)."""

    left_eye: tuple
    right_eye: tuple
    nasion: tuple
    subnasale: tuple
    image_size: tuple | None = None  # (width, height)

    def __post_init__(self):
        pts = (self.left_eye, self.right_eye, self.nasion, self.subnasale)
        for p in pts:
            if not all(math.isfinite(v) for v in p):
                raise ValidationError(f"non-finite landmark coordinate {p}")
        if self.left_eye[0] >= self.right_eye[0]:
            raise ValidationError(
                "left_eye.x must be smaller than right_eye.x (image-left convention)"
            )
        if self.image_size is not None:
            w, h = self.image_size
            for p in pts:
                if not (0 <= p[0] <= w and 0 <= p[1] <= h):
                    raise ValidationError(f"landmark {p} outside image bounds {self.image_size}")


@dataclass(frozen=True)
class SymmetryRecord:
    eye_level_deg: float
    midline_deg: float
    mirror_dissimilarity: float | None = None
    lpips: float | None = None
    volume_diff: float | None = None


def eye_level_deviation(landmarks: LandmarkSet) -> float:
    """Absolute angle (degrees, in [0, 90]) between the eye line and horizontal."""
    dx = landmarks.right_eye[0] - landmarks.left_eye[0]
    dy = landmarks.right_eye[1] - landmarks.left_eye[1]
    if dx == 0 and dy == 0:
        raise DegenerateInputError("eye centers coincide")
    return math.degrees(math.atan2(abs(dy), abs(dx)))


def midline_deviation(landmarks: LandmarkSet) -> float:
    """Absolute angle (degrees, in [0, 90]) between the nose-bridge line and vertical."""
    dx = landmarks.subnasale[0] - landmarks.nasion[0]
    dy = landmarks.subnasale[1] - landmarks.nasion[1]
    if dx == 0 and dy == 0:
        raise DegenerateInputError("nasion and subnasale coincide")
    return math.degrees(math.atan2(abs(dx), abs(dy)))


def mirror_dissimilarity(image, landmarks: LandmarkSet, intensity_range: float = 255.0) -> float:
    """Mean absolute pixel difference between the two facial halves, in [0, 1].

    The image is resampled so the eye line is horizontal, a square centered
    between the eyes (side = 2x inter-ocular distance, clipped to bounds) is
    cropped, and the right half is mirrored onto the left.
    """
    img = np.asarray(image, dtype=float)
    if img.ndim != 2 or img.size == 0:
        raise ValidationError("image must be a non-empty 2-D grayscale array")
    h, w = img.shape
    lx, ly = landmarks.left_eye
    rx, ry = landmarks.right_eye
    cx, cy = (lx + rx) / 2.0, (ly + ry) / 2.0
    interocular = math.hypot(rx - lx, ry - ly)
    if interocular == 0:
        raise DegenerateInputError("eye centers coincide")
    theta = math.atan2(ry - ly, rx - lx)

    half = min(interocular, cx, cy, (w - 1) - cx, (h - 1) - cy)
    m = int(math.floor(half))
    if 2 * m < MIN_CROP_PIXELS:
        raise InsufficientDataError(
            f"crop region degenerates to {2 * m}x{2 * m} pixels (minimum {MIN_CROP_PIXELS})"
        )

    # crop axes: u along the eye line, v perpendicular; half-pixel offsets keep
    # the grid symmetric about the vertical midline
    offs = np.arange(2 * m) + 0.5 - m
    vv, uu = np.meshgrid(offs, offs, indexing="ij")
    xs = cx + uu * math.cos(theta) - vv * math.sin(theta)
    ys = cy + uu * math.sin(theta) + vv * math.cos(theta)
    patch = map_coordinates(img, [ys, xs], order=1, mode="nearest")

    left = patch[:, :m]
    right_mirrored = patch[:, m:][:, ::-1]
    return float(np.mean(np.abs(left - right_mirrored)) / intensity_range)


def read_pgm(path) -> np.ndarray:
    """Read a binary (P5) 8-bit grayscale PGM."""
    with open(path, "rb") as fh:
        data = fh.read()
    tokens = []
    pos = 0
    while len(tokens) < 4:
        match = re.match(rb"\s*(#[^\n]*\n|\S+)", data[pos:])
        if match is None:
            raise ParseError(f"{path}: truncated PGM header")
        pos += match.end()
        tok = match.group(1)
        if not tok.startswith(b"#"):
            tokens.append(tok)
    magic, width, height, maxval = tokens
    if magic != b"P5":
        raise ParseError(f"{path}: not a binary PGM (magic {magic!r})")
    width, height, maxval = int(width), int(height), int(maxval)
    if maxval > 255:
        raise ParseError(f"{path}: only 8-bit PGMs supported (maxval {maxval})")
    pixels = np.frombuffer(data[pos + 1 : pos + 1 + width * height], dtype=np.uint8)
    if pixels.size != width * height:
        raise ParseError(f"{path}: pixel data truncated")
    return pixels.reshape(height, width)


def write_pgm(path, image):
    img = np.asarray(image)
    if img.dtype != np.uint8:
        img = np.clip(img, 0, 255).astype(np.uint8)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def load_landmarks(path) -> dict:
    """Read the landmark CSV into {sample_id: LandmarkSet}."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in LANDMARK_COLUMNS:
            if col not in header:
                raise SchemaError(f"landmark file missing column {col!r}")
        out = {}
        for i, row in enumerate(reader):
            try:
                vals = {c: float(row[c]) for c in LANDMARK_COLUMNS[1:]}
            except (TypeError, ValueError):
                raise ParseError(f"row {i}: non-numeric landmark coordinate") from None
            out[row["sample_id"]] = LandmarkSet(
                left_eye=(vals["lx"], vals["ly"]),
                right_eye=(vals["rx"], vals["ry"]),
                nasion=(vals["nx"], vals["ny"]),
                subnasale=(vals["sx"], vals["sy"]),
            )
    return out


def symmetry_records(landmarks: dict, images: dict | None = None) -> dict:
    """Compute a SymmetryRecord per sample; ``images`` optionally maps
    sample_id to a grayscale array for the mirror metric."""
    images = images or {}
    out = {}
    for sid, lm in landmarks.items():
        mirror = mirror_dissimilarity(images[sid], lm) if sid in images else None
        out[sid] = SymmetryRecord(
            eye_level_deg=eye_level_deviation(lm),
            midline_deg=midline_deviation(lm),
            mirror_dissimilarity=mirror,
        )
    return out


def write_symmetry_csv(records: dict, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["sample_id", "eye_level_deg", "midline_deg", "mirror_dissimilarity"]
        )
        for sid in sorted(records):
            r = records[sid]
            writer.writerow(
                [
                    sid,
                    repr(r.eye_level_deg),
                    repr(r.midline_deg),
                    "" if r.mirror_dissimilarity is None else repr(r.mirror_dissimilarity),
                ]
            )

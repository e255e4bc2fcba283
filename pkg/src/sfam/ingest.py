"""RGB-D sequence loading, validation, depth denormalization and background
removal.

On-disk sequence format: a directory with a plain-text manifest. Each
non-comment, non-header line names one frame as ``<intensity-path>
<depth-path>`` (paths relative to the manifest). Optional header lines
``fx= fy= cx= cy= zmin= zmax= label=`` set intrinsics, 8-bit depth
denormalization bounds, and the class label. Intensity images are 8-bit
grayscale PNG (RGB inputs are averaged over channels); depth images are
16-bit PNG in millimeters, or 8-bit PNG when ``zmin``/``zmax`` are given.
Invalid depth is encoded as exactly 0 everywhere.
"""

import os
from dataclasses import dataclass, field

import cv2
import numpy as np

from .errors import DataError

# Background tolerance (meters) behind the last depth-histogram peak.
DEFAULT_BACKGROUND_TOLERANCE = 0.1

_HIST_BINS = 100
_PEAK_MIN_FRACTION = 0.01


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise DataError("focal lengths must be positive")


@dataclass(frozen=True)
class RgbdFrame:
    """One intensity/depth pair.

    ``intensity`` is H x W in [0, 1]; ``depth`` is H x W in meters with 0
    marking invalid pixels.
    """

    intensity: np.ndarray
    depth: np.ndarray
    timestamp_index: int
    intrinsics: CameraIntrinsics

    def __post_init__(self):
        if self.intensity.shape != self.depth.shape:
            raise DataError(
                f"intensity {self.intensity.shape} and depth "
                f"{self.depth.shape} dimensions differ"
            )
        if self.intensity.ndim != 2:
            raise DataError("frames must be 2-D grids")
        if np.any(self.depth < 0):
            raise DataError("depth values must be >= 0")

    @property
    def shape(self):
        return self.intensity.shape


@dataclass
class RgbdSequence:
    """Ordered frames sharing dimensions and intrinsics."""

    frames: list
    sequence_id: str
    label: int | None = None
    z_bounds: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        if not self.frames:
            raise DataError("sequence has no frames")
        shape = self.frames[0].shape
        intr = self.frames[0].intrinsics
        for f in self.frames:
            if f.shape != shape:
                raise DataError("frames differ in dimensions")
            if f.intrinsics != intr:
                raise DataError("frames differ in intrinsics")

    def __len__(self):
        return len(self.frames)

    @property
    def intrinsics(self):
        return self.frames[0].intrinsics


def rgb_to_intensity(img):
    """Convert an 8-bit image to [0, 1] intensity by unweighted channel mean."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 3:
        arr = arr.mean(axis=2)
    return arr / 255.0


def denormalize_depth(raw, z_min, z_max):
    """Map 8-bit depth values to meters linearly over [z_min, z_max].

    Raw value 0 stays 0 (invalid); raw value 255 maps to ``z_max``.
    """
    if z_max <= z_min:
        raise DataError(f"z_max ({z_max}) must exceed z_min ({z_min})")
    if z_min < 0:
        raise DataError("z_min must be >= 0")
    raw = np.asarray(raw, dtype=np.float64)
    out = raw / 255.0 * (z_max - z_min) + z_min
    out[raw == 0] = 0.0
    return out


def _last_peak_depth(values):
    """Depth of the last local maximum of a 100-bin histogram of ``values``."""
    vmin = float(values.min())
    vmax = float(values.max())
    if vmax <= vmin:
        return vmin
    counts, edges = np.histogram(values, bins=_HIST_BINS, range=(vmin, vmax))
    min_count = max(1, int(np.ceil(_PEAK_MIN_FRACTION * values.size)))
    padded = np.concatenate(([0], counts, [0]))
    for i in range(_HIST_BINS - 1, -1, -1):
        c = padded[i + 1]
        if c >= min_count and c >= padded[i] and c >= padded[i + 2]:
            return 0.5 * (edges[i] + edges[i + 1])
    # No bin clears the mass threshold; fall back to the fullest bin.
    i = int(np.argmax(counts))
    return 0.5 * (edges[i] + edges[i + 1])


def remove_background(frame, tolerance=DEFAULT_BACKGROUND_TOLERANCE):
    """Zero out pixels deeper than the last depth-histogram peak minus
    ``tolerance``. Intensity is untouched."""
    valid = frame.depth > 0
    if not np.any(valid):
        raise DataError("cannot remove background from an all-invalid depth map")
    peak = _last_peak_depth(frame.depth[valid])
    threshold = peak - tolerance
    depth = frame.depth.copy()
    depth[depth > threshold] = 0.0
    return RgbdFrame(frame.intensity, depth, frame.timestamp_index, frame.intrinsics)


def _parse_manifest(manifest_path):
    headers = {}
    pairs = []
    with open(manifest_path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" in line and " " not in line:
                key, _, value = line.partition("=")
                headers[key.strip()] = value.strip()
                continue
            parts = line.split()
            if len(parts) != 2:
                raise DataError(
                    f"{manifest_path}:{lineno}: expected '<intensity> <depth>'"
                )
            pairs.append(parts)
    return headers, pairs


def _read_image(path):
    img = cv2.imread(path, cv2.IMREAD_UNCHANGED)
    if img is None:
        raise DataError(f"missing or unreadable image: {path}")
    return img


def load_sequence(manifest_path, sequence_id=None):
    """Load and validate a sequence from its manifest file."""
    if not os.path.isfile(manifest_path):
        raise DataError(f"manifest not found: {manifest_path}")
    headers, pairs = _parse_manifest(manifest_path)
    if len(pairs) < 2:
        raise DataError(
            f"{manifest_path}: sequence too short ({len(pairs)} frame(s), need >= 2)"
        )
    base = os.path.dirname(os.path.abspath(manifest_path))
    z_bounds = None
    if "zmin" in headers or "zmax" in headers:
        if not ("zmin" in headers and "zmax" in headers):
            raise DataError(f"{manifest_path}: zmin and zmax must be given together")
        z_bounds = (float(headers["zmin"]), float(headers["zmax"]))

    frames = []
    intrinsics = None
    for t, (ipath, dpath) in enumerate(pairs):
        iraw = _read_image(os.path.join(base, ipath))
        draw = _read_image(os.path.join(base, dpath))
        intensity = rgb_to_intensity(iraw)
        if draw.ndim != 2:
            raise DataError(f"depth image must be single-channel: {dpath}")
        if draw.dtype == np.uint16:
            depth = draw.astype(np.float64) / 1000.0
        elif draw.dtype == np.uint8:
            if z_bounds is None:
                raise DataError(
                    f"8-bit depth {dpath} requires zmin=/zmax= manifest headers"
                )
            depth = denormalize_depth(draw, *z_bounds)
        else:
            raise DataError(f"unsupported depth dtype {draw.dtype}: {dpath}")
        if intensity.shape != depth.shape:
            raise DataError(
                f"frame {t}: intensity {intensity.shape} != depth {depth.shape}"
            )
        if intrinsics is None:
            h, w = intensity.shape
            intrinsics = CameraIntrinsics(
                fx=float(headers.get("fx", max(h, w))),
                fy=float(headers.get("fy", max(h, w))),
                cx=float(headers.get("cx", (w - 1) / 2.0)),
                cy=float(headers.get("cy", (h - 1) / 2.0)),
            )
        frames.append(RgbdFrame(intensity, depth, t, intrinsics))

    label = int(headers["label"]) if "label" in headers else None
    if sequence_id is None:
        sequence_id = os.path.basename(os.path.dirname(os.path.abspath(manifest_path)))
    return RgbdSequence(frames, sequence_id, label=label, z_bounds=z_bounds)


def save_sequence(seq, out_dir):
    """Write a sequence in the native format. Returns the manifest path.

    Intensity is quantized to 8 bits and depth to whole millimeters, so a
    sequence that originated from :func:`load_sequence` round-trips
    bit-exactly.
    """
    os.makedirs(out_dir, exist_ok=True)
    intr = seq.intrinsics
    lines = [
        f"fx={intr.fx!r}",
        f"fy={intr.fy!r}",
        f"cx={intr.cx!r}",
        f"cy={intr.cy!r}",
    ]
    if seq.label is not None:
        lines.append(f"label={seq.label}")
    for t, frame in enumerate(seq.frames):
        iname = f"intensity_{t:04d}.png"
        dname = f"depth_{t:04d}.png"
        i8 = np.floor(frame.intensity * 255.0 + 0.5).astype(np.uint8)
        d16 = np.floor(frame.depth * 1000.0 + 0.5).astype(np.uint16)
        cv2.imwrite(os.path.join(out_dir, iname), i8)
        cv2.imwrite(os.path.join(out_dir, dname), d16)
        lines.append(f"{iname} {dname}")
    manifest = os.path.join(out_dir, "manifest.txt")
    with open(manifest, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    return manifest

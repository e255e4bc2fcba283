"""Scene flow maps (SFM) and the accumulation-based action maps.

An SFM is the 3-channel image (X_mu, X_nu, X_omega) of one flow field; a
whole sequence of SFMs collapses into a single 3-channel ActionMap. This
module provides the difference (D) and sum (S) accumulators, the amplitude
and Lab-style channel transforms consumed by rank pooling, and min-max
quantization of any ActionMap to an 8-bit image.
"""

import os
from dataclasses import dataclass, field

import cv2
import numpy as np

from .errors import DataError

VARIANT_TAGS = (
    "D",
    "S",
    "RPf",
    "RPb",
    "AMRPf",
    "AMRPb",
    "LABRPf",
    "LABRPb",
    "CTKRP",
)

# sRGB -> XYZ (D65) and the D65 white point.
_SRGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
_WHITE_D65 = np.array([0.95047, 1.0, 1.08883])


@dataclass
class SceneFlowMap:
    """Three-channel reorganization of one scene flow field."""

    x_mu: np.ndarray
    x_nu: np.ndarray
    x_omega: np.ndarray
    index: int

    def __post_init__(self):
        if not (self.x_mu.shape == self.x_nu.shape == self.x_omega.shape):
            raise DataError("SFM channels differ in dimensions")

    @property
    def shape(self):
        return self.x_mu.shape

    def channels(self):
        return (self.x_mu, self.x_nu, self.x_omega)


@dataclass
class ActionMap:
    """Single 3-channel image encoding a whole sequence."""

    c1: np.ndarray
    c2: np.ndarray
    c3: np.ndarray
    variant_tag: str
    normalization: list | None = field(default=None)

    def __post_init__(self):
        if not (self.c1.shape == self.c2.shape == self.c3.shape):
            raise DataError("action map channels differ in dimensions")
        if self.variant_tag not in VARIANT_TAGS:
            raise DataError(f"unknown variant tag {self.variant_tag!r}")

    @property
    def shape(self):
        return self.c1.shape

    def channels(self):
        return (self.c1, self.c2, self.c3)


def build_sfm_sequence(flows):
    """Reorganize flow fields into SFMs, zeroing invalid pixels."""
    if not flows:
        raise DataError("need at least one flow field")
    sfms = []
    for t, f in enumerate(flows, start=1):
        v = f.validity.astype(np.float64)
        sfms.append(SceneFlowMap(f.mu * v, f.nu * v, f.omega * v, index=t))
    return sfms


def _require(sfms, minimum):
    if len(sfms) < minimum:
        raise DataError(f"need >= {minimum} scene flow maps, got {len(sfms)}")


def sfam_d(sfms):
    """Accumulated absolute differences between consecutive SFMs."""
    _require(sfms, 2)
    acc = [np.zeros(sfms[0].shape) for _ in range(3)]
    for prev, cur in zip(sfms[:-1], sfms[1:]):
        for i, (a, b) in enumerate(zip(prev.channels(), cur.channels())):
            acc[i] += np.abs(b - a)
    return ActionMap(acc[0], acc[1], acc[2], "D")


def sfam_s(sfms):
    """Accumulated sums of consecutive SFMs."""
    _require(sfms, 2)
    acc = [np.zeros(sfms[0].shape) for _ in range(3)]
    for prev, cur in zip(sfms[:-1], sfms[1:]):
        for i, (a, b) in enumerate(zip(prev.channels(), cur.channels())):
            acc[i] += b + a
    return ActionMap(acc[0], acc[1], acc[2], "S")


def amplitude_maps(sfms):
    """Per-map Euclidean norm of the three channels."""
    _require(sfms, 1)
    return [
        np.sqrt(m.x_mu**2 + m.x_nu**2 + m.x_omega**2)
        for m in sfms
    ]


def _minmax_01(stack):
    lo = stack.min()
    hi = stack.max()
    if hi <= lo:
        return np.full_like(stack, 0.5)
    return (stack - lo) / (hi - lo)


def srgb_to_lab(rgb):
    """Pixelwise sRGB (in [0,1]) to CIELAB under D65."""
    rgb = np.asarray(rgb, dtype=np.float64)
    linear = np.where(
        rgb <= 0.04045, rgb / 12.92, ((rgb + 0.055) / 1.055) ** 2.4
    )
    xyz = linear @ _SRGB_TO_XYZ.T
    t = xyz / _WHITE_D65
    delta = 6.0 / 29.0
    f = np.where(t > delta**3, np.cbrt(t), t / (3 * delta**2) + 4.0 / 29.0)
    lab = np.empty_like(xyz)
    lab[..., 0] = 116.0 * f[..., 1] - 16.0
    lab[..., 1] = 500.0 * (f[..., 0] - f[..., 1])
    lab[..., 2] = 200.0 * (f[..., 1] - f[..., 2])
    return lab


def lab_maps(sfms):
    """Min-max normalize each channel over the whole sequence, interpret the
    triple as sRGB, and transform pixelwise to CIELAB (channels L, a, b)."""
    _require(sfms, 1)
    stacks = [
        _minmax_01(np.stack([m.channels()[i] for m in sfms]))
        for i in range(3)
    ]
    out = []
    for t, m in enumerate(sfms):
        rgb = np.stack([stacks[i][t] for i in range(3)], axis=-1)
        lab = srgb_to_lab(rgb)
        out.append(SceneFlowMap(lab[..., 0], lab[..., 1], lab[..., 2], m.index))
    return out


def normalize_to_image(amap):
    """Min-max map each channel to [0, 255] with half-up rounding.

    Returns (H x W x 3 uint8 image, per-channel (min, max) records) and
    stores the records on ``amap.normalization``. A constant channel maps to
    128 everywhere.
    """
    channels = []
    records = []
    for c in amap.channels():
        if not np.all(np.isfinite(c)):
            raise DataError("action map must be finite")
        lo = float(c.min())
        hi = float(c.max())
        records.append((lo, hi))
        if hi <= lo:
            channels.append(np.full(c.shape, 128, dtype=np.uint8))
            continue
        scaled = (c - lo) / (hi - lo) * 255.0
        channels.append(np.floor(scaled + 0.5).astype(np.uint8))
    amap.normalization = records
    return np.stack(channels, axis=-1), records


def denormalize_image(image, records):
    """Invert :func:`normalize_to_image` up to quantization error."""
    out = []
    for i, (lo, hi) in enumerate(records):
        plane = image[..., i].astype(np.float64)
        if hi <= lo:
            out.append(np.full(plane.shape, lo))
        else:
            out.append(plane / 255.0 * (hi - lo) + lo)
    return out


def save_action_map(amap, png_path):
    """Export an ActionMap as PNG plus a sidecar record of the variant tag
    and per-channel (min, max)."""
    image, records = normalize_to_image(amap)
    # cv2 writes channels in BGR order; store c1 in the file's first plane.
    ok = cv2.imwrite(png_path, image[..., ::-1])
    if not ok:
        raise DataError(f"could not write {png_path}")
    sidecar = os.path.splitext(png_path)[0] + ".txt"
    with open(sidecar, "w", encoding="utf-8") as fh:
        fh.write(f"variant={amap.variant_tag}\n")
        for i, (lo, hi) in enumerate(records, start=1):
            fh.write(f"c{i}_min={lo!r}\nc{i}_max={hi!r}\n")
    return png_path, sidecar


def load_action_map(png_path):
    """Load an exported ActionMap; channel values carry quantized (8-bit)
    precision."""
    image = cv2.imread(png_path, cv2.IMREAD_UNCHANGED)
    if image is None or image.ndim != 3 or image.shape[2] != 3:
        raise DataError(f"not a 3-channel action map PNG: {png_path}")
    image = image[..., ::-1]
    sidecar = os.path.splitext(png_path)[0] + ".txt"
    if not os.path.isfile(sidecar):
        raise DataError(f"missing sidecar record: {sidecar}")
    fields = {}
    with open(sidecar, "r", encoding="utf-8") as fh:
        for line in fh:
            key, _, value = line.strip().partition("=")
            fields[key] = value
    records = [
        (float(fields[f"c{i}_min"]), float(fields[f"c{i}_max"])) for i in (1, 2, 3)
    ]
    planes = denormalize_image(image, records)
    amap = ActionMap(planes[0], planes[1], planes[2], fields["variant"])
    amap.normalization = records
    return amap

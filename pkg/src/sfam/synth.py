"""Synthetic RGB-D sequences with analytic ground truth.

Scenes are fronto-parallel planes carrying a band-limited random texture (a
finite sum of sinusoids, so frames can be sampled exactly at any real
coordinate). Motions are simple parametric maps with closed-form flow, and
depth maps can be pre-warped by a known homography to exercise the
self-calibration path.
"""

from dataclasses import dataclass

import numpy as np

from .calibrate import Homography
from .errors import DataError
from .ingest import CameraIntrinsics, RgbdFrame, RgbdSequence
from .pdflow import SceneFlowField

MOTION_KINDS = ("translate-xy", "approach-z", "rotate-in-plane", "composite")

_TEXTURE_COMPONENTS = 40
_FREQ_RANGE = (0.10, 0.70)  # rad/px
_FREQ_DAMP_PIVOT = 0.30  # amplitudes fall off ~1/(1 + f/pivot)
_AMPLITUDE_TOTAL = 0.45  # keeps intensity inside [0.05, 0.95]
_COMPOSITE_DZ = -0.02  # m/frame used by the composite motion


@dataclass(frozen=True)
class SyntheticSceneSpec:
    motion_kind: str
    magnitude: float
    texture_seed: int
    num_frames: int
    image_size: tuple = (64, 64)
    plane_depth: float = 2.0
    misalignment: Homography | None = None
    depth_noise_sigma: float = 0.0

    def __post_init__(self):
        if self.motion_kind not in MOTION_KINDS:
            raise DataError(f"unknown motion kind {self.motion_kind!r}")
        if self.num_frames < 2:
            raise DataError("need at least 2 frames")
        if self.plane_depth <= 0:
            raise DataError("plane depth must be positive")
        if not np.isfinite(self.magnitude):
            raise DataError("magnitude must be finite")


class _Texture:
    """Band-limited random texture, exact at any real coordinate."""

    def __init__(self, seed):
        rng = np.random.default_rng(seed)
        freq = rng.uniform(*_FREQ_RANGE, size=_TEXTURE_COMPONENTS)
        angle = rng.uniform(0.0, 2.0 * np.pi, size=_TEXTURE_COMPONENTS)
        self.wx = freq * np.cos(angle)
        self.wy = freq * np.sin(angle)
        self.phase = rng.uniform(0.0, 2.0 * np.pi, size=_TEXTURE_COMPONENTS)
        # Damp high frequencies, then normalize the L1 amplitude budget.
        raw = rng.uniform(0.5, 1.0, size=_TEXTURE_COMPONENTS) / (1.0 + freq / _FREQ_DAMP_PIVOT)
        self.amp = raw * (_AMPLITUDE_TOTAL / raw.sum())

    def sample(self, u, v):
        out = np.full(np.broadcast(u, v).shape, 0.5)
        for a, wx, wy, ph in zip(self.amp, self.wx, self.wy, self.phase):
            out += a * np.cos(wx * u + wy * v + ph)
        return out


def default_intrinsics(image_size):
    h, w = image_size
    f = 5.0 * max(h, w)
    return CameraIntrinsics(fx=f, fy=f, cx=(w - 1) / 2.0, cy=(h - 1) / 2.0)


def interior_mask(shape, margin=5):
    """Mask excluding a boundary band where warping is ill-posed."""
    mask = np.zeros(shape, dtype=bool)
    mask[margin:-margin, margin:-margin] = True
    return mask


def _plane_depth_at(spec, t):
    if spec.motion_kind in ("approach-z", "composite"):
        dz = spec.magnitude if spec.motion_kind == "approach-z" else _COMPOSITE_DZ
        z = spec.plane_depth + t * dz
        if z <= 0:
            raise DataError("plane crosses the camera; shorten the sequence")
        return z
    return spec.plane_depth


def _texture_coords(spec, intr, xs, ys, t):
    kind = spec.motion_kind
    if kind == "translate-xy":
        return xs - t * spec.magnitude, ys
    if kind == "approach-z":
        s = _plane_depth_at(spec, t) / spec.plane_depth
        return (xs - intr.cx) * s + intr.cx, (ys - intr.cy) * s + intr.cy
    if kind == "rotate-in-plane":
        ang = -t * spec.magnitude
        ca, sa = np.cos(ang), np.sin(ang)
        dx = xs - intr.cx
        dy = ys - intr.cy
        return ca * dx - sa * dy + intr.cx, sa * dx + ca * dy + intr.cy
    # composite: approach + horizontal translate
    s = _plane_depth_at(spec, t) / spec.plane_depth
    return (
        (xs - intr.cx) * s + intr.cx - t * spec.magnitude,
        (ys - intr.cy) * s + intr.cy,
    )


def _ground_truth_flow(spec, intr, xs, ys, t):
    kind = spec.motion_kind
    shape = xs.shape
    zeros = np.zeros(shape)
    if kind == "translate-xy":
        return np.full(shape, spec.magnitude), zeros.copy(), zeros.copy()
    if kind == "approach-z":
        z_next = _plane_depth_at(spec, t + 1)
        dz = spec.magnitude
        mu = -(xs - intr.cx) * dz / z_next
        nu = -(ys - intr.cy) * dz / z_next
        return mu, nu, np.full(shape, dz)
    if kind == "rotate-in-plane":
        ca, sa = np.cos(spec.magnitude), np.sin(spec.magnitude)
        dx = xs - intr.cx
        dy = ys - intr.cy
        return (ca - 1.0) * dx - sa * dy, sa * dx + (ca - 1.0) * dy, zeros.copy()
    s_t = _plane_depth_at(spec, t) / spec.plane_depth
    s_next = _plane_depth_at(spec, t + 1) / spec.plane_depth
    dx = xs - intr.cx
    dy = ys - intr.cy
    mu = (dx * s_t + spec.magnitude) / s_next - dx
    nu = dy * s_t / s_next - dy
    return mu, nu, np.full(shape, _COMPOSITE_DZ)


def _misalign_depth(depth, h):
    hh, ww = depth.shape
    ys, xs = np.mgrid[0:hh, 0:ww].astype(np.float64)
    mapped = h.apply(np.column_stack([xs.ravel(), ys.ravel()]))
    xi = np.rint(mapped[:, 0]).astype(np.int64)
    yi = np.rint(mapped[:, 1]).astype(np.int64)
    inside = (xi >= 0) & (xi < ww) & (yi >= 0) & (yi < hh)
    out = np.zeros(hh * ww)
    out[inside] = depth[yi[inside], xi[inside]]
    return out.reshape(hh, ww)


def generate_sequence(spec, sequence_id="synthetic", label=None):
    """Generate a sequence with analytic ground truth.

    Returns (sequence, ground-truth flow fields between consecutive frames,
    ground-truth depth-to-RGB homography). The flow fields describe the
    aligned geometry even when a misalignment homography is applied to the
    stored depth maps.
    """
    h, w = spec.image_size
    intr = default_intrinsics(spec.image_size)
    texture = _Texture(spec.texture_seed)
    noise_rng = np.random.default_rng(spec.texture_seed + 1)
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)

    frames = []
    gt_flows = []
    for t in range(spec.num_frames):
        u, v = _texture_coords(spec, intr, xs, ys, t)
        intensity = texture.sample(u, v)
        depth = np.full((h, w), _plane_depth_at(spec, t))
        if spec.depth_noise_sigma > 0:
            depth = depth + noise_rng.normal(0.0, spec.depth_noise_sigma, size=depth.shape)
            depth = np.maximum(depth, 1e-3)
        if spec.misalignment is not None:
            depth = _misalign_depth(depth, spec.misalignment)
        frames.append(RgbdFrame(intensity, depth, t, intr))
        if t < spec.num_frames - 1:
            mu, nu, om = _ground_truth_flow(spec, intr, xs, ys, t)
            gt_flows.append(
                SceneFlowField(mu, nu, om, np.ones((h, w), dtype=bool))
            )

    seq = RgbdSequence(frames, sequence_id, label=label)
    gt_h = spec.misalignment if spec.misalignment is not None else Homography.identity()
    return seq, gt_flows, gt_h


# The four dataset archetypes: (motion kind, signed base magnitude).
DATASET_ARCHETYPES = (
    ("translate-xy", -1.0),  # left-translate
    ("translate-xy", 1.0),  # right-translate
    ("approach-z", -0.04),  # approach
    ("approach-z", 0.04),  # recede
)


def generate_action_dataset(
    num_classes=4,
    samples_per_class=5,
    seed=0,
    image_size=(48, 48),
    frames_range=(6, 9),
    plane_depth=2.0,
):
    """Labeled synthetic sequences for the four motion archetypes, with
    per-sample texture, +-20% magnitude jitter and duration jitter.
    Deterministic for a fixed seed."""
    if not (1 <= num_classes <= len(DATASET_ARCHETYPES)):
        raise DataError(f"num_classes must be in 1..{len(DATASET_ARCHETYPES)}")
    if samples_per_class < 1:
        raise DataError("samples_per_class must be >= 1")
    rng = np.random.default_rng(seed)
    sequences = []
    for label in range(num_classes):
        kind, base = DATASET_ARCHETYPES[label]
        for s in range(samples_per_class):
            magnitude = base * rng.uniform(0.8, 1.2)
            num_frames = int(rng.integers(frames_range[0], frames_range[1] + 1))
            texture_seed = int(rng.integers(0, 2**31 - 1))
            spec = SyntheticSceneSpec(
                motion_kind=kind,
                magnitude=magnitude,
                texture_seed=texture_seed,
                num_frames=num_frames,
                image_size=image_size,
                plane_depth=plane_depth,
            )
            seq, _, _ = generate_sequence(
                spec, sequence_id=f"c{label}_s{s:03d}", label=label
            )
            sequences.append(seq)
    return sequences

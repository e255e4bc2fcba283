"""Depth-to-RGB self-calibration via 2-D homography estimation.

The homography maps depth-view pixels into the RGB view (p = H p'). It is
estimated from externally provided point correspondences: a direct linear
transform on Hartley-normalized points, outlier rejection by RANSAC, and
Levenberg-Marquardt refinement of the symmetric transfer error.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from .errors import DataError, NumericalError

RANSAC_CONFIDENCE = 0.999
DEFAULT_RANSAC_ITERS = 1000
DEFAULT_INLIER_THRESHOLD = 2.0

_MIN_DET = 1e-12


@dataclass(frozen=True)
class Homography:
    """Invertible 3x3 projective map, normalized so h[2,2] = 1 when nonzero."""

    h: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.h, dtype=np.float64)
        if m.shape != (3, 3):
            raise DataError("homography must be 3x3")
        if not np.all(np.isfinite(m)):
            raise DataError("homography entries must be finite")
        if abs(np.linalg.det(m)) <= _MIN_DET:
            raise DataError("homography is singular")
        if abs(m[2, 2]) > 1e-12:
            m = m / m[2, 2]
        object.__setattr__(self, "h", m)

    @classmethod
    def identity(cls):
        return cls(np.eye(3))

    def apply(self, pts):
        """Map N x 2 points projectively."""
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        ones = np.ones((pts.shape[0], 1))
        ph = np.hstack([pts, ones]) @ self.h.T
        return ph[:, :2] / ph[:, 2:3]

    def inverse(self):
        return Homography(np.linalg.inv(self.h))


@dataclass(frozen=True)
class PointMatch:
    """Corresponding pixel in the RGB image (p) and the depth map (p')."""

    p: tuple
    p_prime: tuple

    def __post_init__(self):
        if not (np.all(np.isfinite(self.p)) and np.all(np.isfinite(self.p_prime))):
            raise DataError("match coordinates must be finite")


def matches_from_arrays(p, p_prime):
    p = np.asarray(p, dtype=np.float64)
    p_prime = np.asarray(p_prime, dtype=np.float64)
    return [PointMatch(tuple(a), tuple(b)) for a, b in zip(p, p_prime)]


def _match_arrays(matches):
    p = np.array([m.p for m in matches], dtype=np.float64)
    pp = np.array([m.p_prime for m in matches], dtype=np.float64)
    return p, pp


def _hartley_normalize(pts):
    """Similarity transform taking the centroid to 0 and RMS radius to sqrt(2)."""
    centroid = pts.mean(axis=0)
    rms = np.sqrt(np.mean(np.sum((pts - centroid) ** 2, axis=1)))
    scale = np.sqrt(2.0) / rms if rms > 0 else 1.0
    t = np.array(
        [
            [scale, 0.0, -scale * centroid[0]],
            [0.0, scale, -scale * centroid[1]],
            [0.0, 0.0, 1.0],
        ]
    )
    return t


def dlt_homography(matches):
    """Least-squares homography from >= 4 matches via the stacked
    cross-product system, solved on Hartley-normalized coordinates."""
    if len(matches) < 4:
        raise DataError(f"need >= 4 matches, got {len(matches)}")
    p, pp = _match_arrays(matches)
    t_p = _hartley_normalize(p)
    t_pp = _hartley_normalize(pp)
    pn = (np.hstack([p, np.ones((len(p), 1))]) @ t_p.T)[:, :2]
    ppn = (np.hstack([pp, np.ones((len(pp), 1))]) @ t_pp.T)[:, :2]

    n = len(matches)
    a = np.zeros((2 * n, 9))
    for i in range(n):
        x, y = pn[i]
        xp, yp = ppn[i]
        src = np.array([xp, yp, 1.0])
        a[2 * i, 3:6] = -src
        a[2 * i, 6:9] = y * src
        a[2 * i + 1, 0:3] = src
        a[2 * i + 1, 6:9] = -x * src

    _, s, vt = np.linalg.svd(a)
    if n > 4 and s[7] <= 1e-10 * s[0]:
        raise NumericalError("degenerate point configuration (rank-deficient system)")
    h_norm = vt[-1].reshape(3, 3)
    h = np.linalg.inv(t_p) @ h_norm @ t_pp
    try:
        return Homography(h)
    except DataError as exc:
        raise NumericalError(f"degenerate point configuration: {exc}") from exc


def symmetric_transfer_sq(h, matches):
    """Per-match squared symmetric transfer error d(p,Hp')^2 + d(p',H^-1 p)^2."""
    p, pp = _match_arrays(matches)
    fwd = h.apply(pp)
    bwd = h.inverse().apply(p)
    return np.sum((fwd - p) ** 2, axis=1) + np.sum((bwd - pp) ** 2, axis=1)


def refinement_objective(h, matches):
    """Sum of squared symmetric transfer distances (the surrogate refined by
    :func:`refine_homography`)."""
    return float(np.sum(symmetric_transfer_sq(h, matches)))


def _transfer_residuals(params, p, pp):
    h = np.empty(9)
    h[:8] = params
    h[8] = 1.0
    m = h.reshape(3, 3)
    det = np.linalg.det(m)
    if abs(det) <= _MIN_DET or not np.isfinite(det):
        return np.full(4 * len(p), 1e6)
    fwd = np.hstack([pp, np.ones((len(pp), 1))]) @ m.T
    fwd = fwd[:, :2] / fwd[:, 2:3]
    minv = np.linalg.inv(m)
    bwd = np.hstack([p, np.ones((len(p), 1))]) @ minv.T
    bwd = bwd[:, :2] / bwd[:, 2:3]
    return np.concatenate([(fwd - p).ravel(), (bwd - pp).ravel()])


def refine_homography(h0, matches, max_iterations=200):
    """Levenberg-Marquardt refinement of the symmetric transfer objective.

    Never returns a worse homography than ``h0``; emits a warning instead of
    failing when the iteration cap is hit before convergence.
    """
    if len(matches) < 4:
        raise DataError(f"need >= 4 matches, got {len(matches)}")
    if abs(h0.h[2, 2]) < 1e-8:
        # h22 ~ 0 cannot be gauge-fixed to 1; refinement is skipped.
        warnings.warn("homography has h[2,2] ~ 0; refinement skipped")
        return h0
    p, pp = _match_arrays(matches)
    params0 = h0.h.ravel()[:8]
    result = least_squares(
        _transfer_residuals,
        params0,
        args=(p, pp),
        method="lm",
        max_nfev=max_iterations * 9,
    )
    if not result.success:
        warnings.warn(f"homography refinement did not converge: {result.message}")
    h_refined = np.empty(9)
    h_refined[:8] = result.x
    h_refined[8] = 1.0
    try:
        candidate = Homography(h_refined.reshape(3, 3))
    except DataError:
        return h0
    if refinement_objective(candidate, matches) <= refinement_objective(h0, matches):
        return candidate
    return h0


def ransac_homography(
    matches,
    inlier_threshold=DEFAULT_INLIER_THRESHOLD,
    max_iters=DEFAULT_RANSAC_ITERS,
    seed=0,
):
    """RANSAC + DLT + LM refinement. Returns (homography, inlier mask).

    Deterministic for a fixed seed; iteration count adapts to the observed
    inlier ratio with the (1 - w^4) confidence rule.
    """
    n = len(matches)
    if n < 4:
        raise DataError(f"need >= 4 matches, got {n}")
    rng = np.random.default_rng(seed)
    thr_sq = float(inlier_threshold) ** 2

    best_mask = None
    best_count = 0
    needed = max_iters
    k = 0
    while k < min(max_iters, needed):
        k += 1
        idx = rng.choice(n, size=4, replace=False)
        try:
            h = dlt_homography([matches[i] for i in idx])
        except (DataError, NumericalError):
            continue
        err = symmetric_transfer_sq(h, matches)
        mask = err < thr_sq
        count = int(mask.sum())
        if count > best_count:
            best_count = count
            best_mask = mask
            w = count / n
            if w >= 1.0:
                break
            denom = np.log(max(1.0 - w**4, 1e-12))
            needed = int(np.ceil(np.log(1.0 - RANSAC_CONFIDENCE) / denom))

    if best_mask is None or best_count < 4:
        raise NumericalError("RANSAC found no model with >= 4 inliers")

    consensus = [m for m, keep in zip(matches, best_mask) if keep]
    h = dlt_homography(consensus)
    h = refine_homography(h, consensus)
    final_mask = symmetric_transfer_sq(h, matches) < thr_sq
    if final_mask.sum() < 4:
        final_mask = best_mask
    return h, final_mask


def warp_depth(depth, h):
    """Inverse-warp a depth map into the RGB view with nearest-neighbor
    sampling; pixels mapping outside the source become invalid (0)."""
    depth = np.asarray(depth, dtype=np.float64)
    hh, ww = depth.shape
    ys, xs = np.mgrid[0:hh, 0:ww].astype(np.float64)
    pts = np.column_stack([xs.ravel(), ys.ravel()])
    src = h.inverse().apply(pts)
    xi = np.rint(src[:, 0]).astype(np.int64)
    yi = np.rint(src[:, 1]).astype(np.int64)
    inside = (xi >= 0) & (xi < ww) & (yi >= 0) & (yi < hh)
    out = np.zeros(hh * ww, dtype=np.float64)
    out[inside] = depth[yi[inside], xi[inside]]
    return out.reshape(hh, ww)


def load_matches(path):
    """Read whitespace-separated ``x y x' y'`` correspondence lines."""
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 4:
                raise DataError(f"{path}:{lineno}: expected 'x y x_prime y_prime'")
            x, y, xp, yp = map(float, parts)
            rows.append(PointMatch((x, y), (xp, yp)))
    if not rows:
        raise DataError(f"{path}: no correspondences found")
    return rows


def save_homography(path, h):
    with open(path, "w", encoding="utf-8") as fh:
        for row in h.h:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def load_homography(path):
    values = np.loadtxt(path, dtype=np.float64)
    if values.size != 9:
        raise DataError(f"{path}: expected 9 numbers, got {values.size}")
    return Homography(values.reshape(3, 3))

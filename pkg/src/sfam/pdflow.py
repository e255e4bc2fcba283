"""Dense RGB-D scene flow by coarse-to-fine primal-dual minimization.

The energy couples an L1 data term (brightness constancy plus geometry
consistency, weighted per pixel) with a geometry-aware total-variation
regularizer over the three flow channels (mu, nu: optical flow in px/frame;
omega: range flow in m/frame). At each pyramid level the data term is
linearized at the current warp point and the resulting convex problem is
solved by Chambolle-Pock iterations: all nonsmooth terms are dualized, so
every step is a linear update plus a projection.
"""

import json
import warnings
from dataclasses import dataclass, asdict, replace

import cv2
import numpy as np

from . import kernels
from .errors import DataError, NumericalError
from .ingest import CameraIntrinsics, RgbdFrame

# Depth softening in the geometric-consistency weight eps = scale/(Z^2 + kappa).
_EPS_KAPPA = 1e-4
# Clamp range of the geometry-aware TV weights.
_R_MIN = 0.1
_R_MAX = 1.0
_MIN_COARSE_SIZE = 16

# The first iterations at each level build the dual variables and may raise
# the energy; afterwards a descent safeguard rejects any step that increases
# it beyond _SAFEGUARD_REL (relative) and retries with halved steps.
_WARMUP_ITERS = 5
_SAFEGUARD_REL = 1e-7
_REJECTS_BEFORE_HALVING = 3
_STEP_GROWTH = 1.25
_MIN_STEP_FACTOR = 2.0**-20
_FLAT_RUN_STOP = 5
_DUAL_CHARGE_ITERS = 60.0


@dataclass
class SolverConfig:
    """Primal-dual solver parameters.

    ``primal_step`` and ``dual_step`` are dimensionless multipliers; the
    actual steps are ``primal_step / L`` and ``dual_step / L`` where L bounds
    the operator norm, so their product must stay <= 1 for convergence.
    """

    lambda_i: float = 0.04
    lambda_d: float = 0.35
    pyramid_levels: int = 4
    iters_per_level: int = 100
    geometric_weight_scale: float = 1.0
    primal_step: float = 1.0
    dual_step: float = 1.0
    convergence_tol: float = 1e-6
    warps_per_level: int = 3

    def __post_init__(self):
        for name in (
            "lambda_i",
            "lambda_d",
            "pyramid_levels",
            "iters_per_level",
            "geometric_weight_scale",
            "primal_step",
            "dual_step",
            "convergence_tol",
            "warps_per_level",
        ):
            if getattr(self, name) <= 0:
                raise DataError(f"SolverConfig.{name} must be positive")
        if self.primal_step * self.dual_step > 1.0 + 1e-12:
            raise DataError("primal_step * dual_step must be <= 1")

    @classmethod
    def from_file(cls, path):
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        return cls(**data)

    def to_file(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")


@dataclass
class SceneFlowField:
    """Per-pixel optical flow (px/frame) and range flow (m/frame)."""

    mu: np.ndarray
    nu: np.ndarray
    omega: np.ndarray
    validity: np.ndarray

    def __post_init__(self):
        shapes = {self.mu.shape, self.nu.shape, self.omega.shape, self.validity.shape}
        if len(shapes) != 1:
            raise DataError("flow channels differ in dimensions")
        for grid in (self.mu, self.nu, self.omega):
            if not np.all(np.isfinite(grid)):
                raise DataError("flow values must be finite")

    @property
    def shape(self):
        return self.mu.shape

    @classmethod
    def zeros(cls, shape, validity=None):
        if validity is None:
            validity = np.ones(shape, dtype=bool)
        z = np.zeros(shape, dtype=np.float64)
        return cls(z, z.copy(), z.copy(), validity)


@dataclass
class MotionField:
    """Metric 3-D scene motion per pixel, camera frame, m/frame."""

    m: np.ndarray


def _forward_dx(f):
    g = np.zeros_like(f)
    g[:, :-1] = f[:, 1:] - f[:, :-1]
    return g


def _forward_dy(f):
    g = np.zeros_like(f)
    g[:-1, :] = f[1:, :] - f[:-1, :]
    return g


def _central_gradients(f):
    gy, gx = np.gradient(f)
    return gx, gy


def geometry_weights(depth, intr):
    """TV weights from finite differences of the back-projected coordinates,
    clamped to [0.1, 1]."""
    h, w = depth.shape
    xs = np.arange(w, dtype=np.float64)
    ys = np.arange(h, dtype=np.float64)
    bx = (xs[None, :] - intr.cx) * depth / intr.fx
    by = (ys[:, None] - intr.cy) * depth / intr.fy
    dxx = _forward_dx(bx)
    dzx = _forward_dx(depth)
    dyy = _forward_dy(by)
    dzy = _forward_dy(depth)
    rx = 1.0 / np.sqrt(dxx * dxx + dzx * dzx + 1e-24)
    ry = 1.0 / np.sqrt(dyy * dyy + dzy * dzy + 1e-24)
    return np.clip(rx, _R_MIN, _R_MAX), np.clip(ry, _R_MIN, _R_MAX)


def geometric_weight(depth, cfg):
    """Per-pixel weight of the geometry residual: scale / (Z^2 + kappa),
    zero on invalid pixels."""
    eps = cfg.geometric_weight_scale / (depth * depth + _EPS_KAPPA)
    eps[depth <= 0] = 0.0
    return eps


def _downsample_intensity(img):
    h2, w2 = img.shape[0] // 2, img.shape[1] // 2
    c = img[: 2 * h2, : 2 * w2]
    return 0.25 * (c[0::2, 0::2] + c[0::2, 1::2] + c[1::2, 0::2] + c[1::2, 1::2])


def _downsample_depth(depth):
    # Lower median of the valid entries in each 2x2 block; never fabricates
    # depth values across discontinuities.
    h2, w2 = depth.shape[0] // 2, depth.shape[1] // 2
    c = depth[: 2 * h2, : 2 * w2]
    blocks = np.stack(
        [c[0::2, 0::2], c[0::2, 1::2], c[1::2, 0::2], c[1::2, 1::2]], axis=-1
    )
    invalid = blocks <= 0
    filled = np.where(invalid, np.inf, blocks)
    srt = np.sort(filled, axis=-1)
    n_valid = 4 - invalid.sum(axis=-1)
    idx = np.maximum(n_valid - 1, 0) // 2
    med = np.take_along_axis(srt, idx[..., None], axis=-1)[..., 0]
    return np.where(n_valid > 0, med, 0.0)


def _level_intrinsics(intr, level):
    f = 2.0**level
    return CameraIntrinsics(intr.fx / f, intr.fy / f, intr.cx / f, intr.cy / f)


def _effective_levels(shape, requested):
    levels = 1
    h, w = shape
    while (
        levels < requested
        and min(h, w) // 2 >= _MIN_COARSE_SIZE
    ):
        levels += 1
        h //= 2
        w //= 2
    return levels


def _upsample_flow(mu, nu, om, target_shape):
    th, tw = target_shape
    sh, sw = mu.shape
    size = (tw, th)
    mu_f = cv2.resize(mu, size, interpolation=cv2.INTER_LINEAR) * (tw / sw)
    nu_f = cv2.resize(nu, size, interpolation=cv2.INTER_LINEAR) * (th / sh)
    om_f = cv2.resize(om, size, interpolation=cv2.INTER_LINEAR)
    return mu_f, nu_f, om_f


def _check_pair(f0, f1):
    if f0.shape != f1.shape:
        raise DataError(f"frame dimensions differ: {f0.shape} vs {f1.shape}")
    if f0.intrinsics != f1.intrinsics:
        raise DataError("frames differ in intrinsics")
    valid = (f0.depth > 0) & (f1.depth > 0)
    if not np.any(valid):
        raise DataError("no pixel has valid depth in both frames")
    return valid


def _total_energy(i0, i1, z0, z1, mu, nu, om, eps, valid_f, rx, ry, cfg):
    return kernels.data_energy_kernel(
        i0, i1, z0, z1, mu, nu, om, eps, valid_f
    ) + kernels.tv_energy_kernel(mu, nu, om, rx, ry, cfg.lambda_i, cfg.lambda_d)


def _solve(f0, f1, cfg, record):
    valid_fine = _check_pair(f0, f1)
    levels = _effective_levels(f0.shape, cfg.pyramid_levels)

    pyr = [(f0.intensity, f1.intensity, f0.depth, f1.depth)]
    for _ in range(1, levels):
        i0, i1, z0, z1 = pyr[-1]
        pyr.append(
            (
                _downsample_intensity(i0),
                _downsample_intensity(i1),
                _downsample_depth(z0),
                _downsample_depth(z1),
            )
        )

    mu = nu = om = None
    traces = []
    for level in range(levels - 1, -1, -1):
        i0, i1, z0, z1 = pyr[level]
        intr = _level_intrinsics(f0.intrinsics, level)
        valid = ((z0 > 0) & (z1 > 0)).astype(np.float64)
        if mu is None:
            mu = np.zeros_like(i0)
            nu = np.zeros_like(i0)
            om = np.zeros_like(i0)
        else:
            mu, nu, om = _upsample_flow(mu, nu, om, i0.shape)
            mu *= valid
            nu *= valid
            om *= valid

        rx, ry = geometry_weights(z0, intr)
        eps = geometric_weight(z0, cfg)
        gi_x, gi_y = _central_gradients(i1)
        gz_x, gz_y = _central_gradients(z1)
        ys, xs = np.mgrid[0 : i0.shape[0], 0 : i0.shape[1]].astype(np.float64)
        energies = []

        # Primal/bar/dual state persists across warp blocks within a level;
        # only the data-term linearization is refreshed per warp.
        mub, nub, omb = mu.copy(), nu.copy(), om.copy()
        state = [mu, nu, om, mub, nub, omb] + [np.zeros_like(mu) for _ in range(8)]
        snapshot = [np.empty_like(s) for s in state]
        p1x, p1y, p2x, p2y, p3x, p3y, a, b = state[6:]
        level_iter = 0
        e_prev = None
        first_warp = True

        for _ in range(cfg.warps_per_level):
            xw = xs + mu
            yw = ys + nu
            i1w = kernels.bilinear_sample(i1, xw, yw)
            z1w = kernels.bilinear_sample(z1, xw, yw)
            gix = kernels.bilinear_sample(gi_x, xw, yw)
            giy = kernels.bilinear_sample(gi_y, xw, yw)
            gzx = kernels.bilinear_sample(gz_x, xw, yw)
            gzy = kernels.bilinear_sample(gz_y, xw, yw)
            ci = i0 - i1w + gix * mu + giy * nu
            cz = z0 - z1w + gzx * mu + gzy * nu

            g_i_sq = valid * (gix * gix + giy * giy)
            g_z_sq = valid * (gzx * gzx + gzy * gzy)
            l_sq = 8.0 * _R_MAX**2 + float(g_i_sq.max()) + float(g_z_sq.max()) + 1.0
            l_op = max(np.sqrt(l_sq), 1e-6)
            tau = cfg.primal_step / l_op
            sigma = cfg.dual_step / l_op

            if first_warp:
                # Charge the duals with the closed form of _DUAL_CHARGE_ITERS
                # dual-only ascent iterations at the fixed initial flow. The
                # primal is untouched, so the energy is unchanged, but descent
                # then starts without a charging transient.
                charge = _DUAL_CHARGE_ITERS * sigma
                rho_i0 = i0 - i1w
                rho_z0 = om - z1w + z0
                np.copyto(a, np.clip(charge * rho_i0, -1.0, 1.0) * valid)
                np.copyto(b, np.clip(charge * rho_z0, -eps, eps) * valid)
                for f, qx, qy, lam in (
                    (mu, p1x, p1y, cfg.lambda_i),
                    (nu, p2x, p2y, cfg.lambda_i),
                    (om, p3x, p3y, cfg.lambda_d),
                ):
                    gx = np.zeros_like(f)
                    gx[:, :-1] = f[:, 1:] - f[:, :-1]
                    gy = np.zeros_like(f)
                    gy[:-1, :] = f[1:, :] - f[:-1, :]
                    qx[...] = charge * rx * gx
                    qy[...] = charge * ry * gy
                    nrm = np.sqrt(qx * qx + qy * qy)
                    scale = lam / np.maximum(lam, nrm)
                    qx *= scale
                    qy *= scale
                first_warp = False
            else:
                np.clip(b, -eps, eps, out=b)

            tau0, sigma0 = tau, sigma
            reject_streak = 0
            flat_run = 0
            for _ in range(cfg.iters_per_level):
                guarded = level_iter >= _WARMUP_ITERS
                if guarded:
                    for dst, src in zip(snapshot, state):
                        np.copyto(dst, src)
                kernels.pd_chunk(
                    mu, nu, om, mub, nub, omb,
                    p1x, p1y, p2x, p2y, p3x, p3y, a, b,
                    ci, gix, giy, cz, gzx, gzy,
                    rx, ry, eps, valid,
                    cfg.lambda_i, cfg.lambda_d, tau, sigma, 1,
                )
                level_iter += 1
                e = _total_energy(i0, i1, z0, z1, mu, nu, om, eps, valid, rx, ry, cfg)
                if (
                    guarded
                    and e_prev is not None
                    and e > e_prev * (1.0 + _SAFEGUARD_REL)
                ):
                    # Descent safeguard: reject the step; let the duals adjust
                    # at the frozen primal (energy-neutral) and retry, then
                    # shrink the steps if rejects persist. Accepted steps grow
                    # the steps back, trust-region style.
                    for dst, src in zip(state, snapshot):
                        np.copyto(dst, src)
                    reject_streak += 1
                    flat_run = 0
                    if reject_streak % _REJECTS_BEFORE_HALVING == 0:
                        if tau > tau0 * _MIN_STEP_FACTOR:
                            tau *= 0.5
                            sigma *= 0.5
                    else:
                        kernels.dual_chunk(
                            mub, nub, omb,
                            p1x, p1y, p2x, p2y, p3x, p3y, a, b,
                            ci, gix, giy, cz, gzx, gzy,
                            rx, ry, eps, valid,
                            cfg.lambda_i, cfg.lambda_d, sigma, 1,
                        )
                    if record:
                        energies.append(e_prev)
                    continue
                reject_streak = 0
                tau = min(tau * _STEP_GROWTH, tau0)
                sigma = min(sigma * _STEP_GROWTH, sigma0)
                if record:
                    energies.append(e)
                if e_prev is not None and abs(e_prev - e) <= cfg.convergence_tol * max(
                    abs(e_prev), 1e-12
                ):
                    flat_run += 1
                    # Converged only when flat at full step size; a shrunk
                    # step means the safeguard is still contesting descent.
                    if flat_run >= _FLAT_RUN_STOP and tau >= 0.99 * tau0:
                        e_prev = e
                        break
                else:
                    flat_run = 0
                e_prev = e

        if record:
            traces.append(np.asarray(energies))

    valid_f = valid_fine.astype(np.float64)
    mu *= valid_f
    nu *= valid_f
    om *= valid_f
    if not (
        np.all(np.isfinite(mu)) and np.all(np.isfinite(nu)) and np.all(np.isfinite(om))
    ):
        raise NumericalError("flow solver produced non-finite values")

    # Sanity bound: never return a field worse than zero flow.
    i0, i1, z0, z1 = pyr[0]
    rx, ry = geometry_weights(z0, f0.intrinsics)
    eps = geometric_weight(z0, cfg)
    e_final = _total_energy(i0, i1, z0, z1, mu, nu, om, eps, valid_f, rx, ry, cfg)
    zero = np.zeros_like(mu)
    e_zero = _total_energy(i0, i1, z0, z1, zero, zero, zero, eps, valid_f, rx, ry, cfg)
    if e_final > e_zero:
        warnings.warn("solver energy above zero-flow energy; returning zero field")
        mu, nu, om = zero, zero.copy(), zero.copy()

    field = SceneFlowField(mu, nu, om, valid_fine)
    return field, traces


def compute_scene_flow(f0, f1, cfg=None):
    """Scene flow from frame ``f0`` to ``f1`` (coarse-to-fine primal-dual)."""
    field, _ = _solve(f0, f1, cfg or SolverConfig(), record=False)
    return field


def compute_scene_flow_with_trace(f0, f1, cfg=None):
    """As :func:`compute_scene_flow`, also returning per-iteration total
    energies, one array per pyramid level in solve order (coarsest first)."""
    return _solve(f0, f1, cfg or SolverConfig(), record=True)


def data_energy(s, f0, f1, cfg=None):
    """L1 data energy of flow ``s`` over its valid pixels."""
    cfg = cfg or SolverConfig()
    if f0.shape != f1.shape or f0.shape != s.shape:
        raise DataError("flow and frame dimensions differ")
    eps = geometric_weight(f0.depth, cfg)
    return kernels.data_energy_kernel(
        f0.intensity,
        f1.intensity,
        f0.depth,
        f1.depth,
        s.mu,
        s.nu,
        s.omega,
        eps,
        s.validity.astype(np.float64),
    )


def regularizer_energy(s, f0, cfg=None):
    """Geometry-weighted TV energy of flow ``s``."""
    cfg = cfg or SolverConfig()
    if f0.shape != s.shape:
        raise DataError("flow and frame dimensions differ")
    rx, ry = geometry_weights(f0.depth, f0.intrinsics)
    return kernels.tv_energy_kernel(
        s.mu, s.nu, s.omega, rx, ry, cfg.lambda_i, cfg.lambda_d
    )


def total_energy(s, f0, f1, cfg=None):
    cfg = cfg or SolverConfig()
    return data_energy(s, f0, f1, cfg) + regularizer_energy(s, f0, cfg)


def project_motion_field(s, depth, intr):
    """Map flow to the metric 3-D motion field M = Gamma(s).

    Invalid pixels (flow invalid or depth 0) yield zero motion.
    """
    depth = np.asarray(depth, dtype=np.float64)
    if depth.shape != s.shape:
        raise DataError("depth and flow dimensions differ")
    h, w = depth.shape
    xs = np.arange(w, dtype=np.float64)[None, :]
    ys = np.arange(h, dtype=np.float64)[:, None]
    m1 = (depth * s.mu + (xs - intr.cx) * s.omega) / intr.fx
    m2 = (depth * s.nu + (ys - intr.cy) * s.omega) / intr.fy
    m3 = s.omega.copy()
    mask = s.validity & (depth > 0)
    m = np.stack([m1, m2, m3], axis=-1)
    m[~mask] = 0.0
    return MotionField(m)


def write_flow(path, field):
    """Write a flow field: ASCII ``W H`` header, three float32-LE planes
    (mu, nu, omega), then a 0/1 byte validity plane."""
    h, w = field.shape
    with open(path, "wb") as fh:
        fh.write(f"{w} {h}\n".encode("ascii"))
        for plane in (field.mu, field.nu, field.omega):
            fh.write(np.ascontiguousarray(plane, dtype="<f4").tobytes())
        fh.write(field.validity.astype(np.uint8).tobytes())


def read_flow(path):
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").split()
        if len(header) != 2:
            raise DataError(f"{path}: malformed flow header")
        w, h = int(header[0]), int(header[1])
        n = h * w
        raw = fh.read(3 * 4 * n + n)
    if len(raw) != 3 * 4 * n + n:
        raise DataError(f"{path}: truncated flow file")
    planes = np.frombuffer(raw[: 3 * 4 * n], dtype="<f4").astype(np.float64)
    mu = planes[:n].reshape(h, w)
    nu = planes[n : 2 * n].reshape(h, w)
    om = planes[2 * n :].reshape(h, w)
    validity = np.frombuffer(raw[3 * 4 * n :], dtype=np.uint8).reshape(h, w) > 0
    return SceneFlowField(mu, nu, om, validity)

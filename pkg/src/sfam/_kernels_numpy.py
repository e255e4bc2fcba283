"""Pure NumPy implementations of the hot numeric kernels.

These are the fallback backend used when numba is unavailable or disabled
via ``SFAM_NO_NUMBA=1``. The numba twins in ``_kernels_numba`` implement
the same update sequence; results agree up to floating-point reduction
order.
"""

import numpy as np


def bilinear_sample(img, xs, ys):
    """Sample ``img`` at real-valued coordinates with replicated borders."""
    h, w = img.shape
    x = np.clip(xs, 0.0, w - 1.0)
    y = np.clip(ys, 0.0, h - 1.0)
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = x - x0
    fy = y - y0
    v00 = img[y0, x0]
    v01 = img[y0, x1]
    v10 = img[y1, x0]
    v11 = img[y1, x1]
    return (
        v00 * (1.0 - fx) * (1.0 - fy)
        + v01 * fx * (1.0 - fy)
        + v10 * (1.0 - fx) * fy
        + v11 * fx * fy
    )


def _forward_dx(f):
    g = np.zeros_like(f)
    g[:, :-1] = f[:, 1:] - f[:, :-1]
    return g


def _forward_dy(f):
    g = np.zeros_like(f)
    g[:-1, :] = f[1:, :] - f[:-1, :]
    return g


def _div_transpose(qx, qy):
    # Adjoint of the forward-difference gradient with zero last row/column.
    tx = np.zeros_like(qx)
    tx[:, 0] = -qx[:, 0]
    tx[:, 1:] = qx[:, :-1] - qx[:, 1:]
    ty = np.zeros_like(qy)
    ty[0, :] = -qy[0, :]
    ty[1:, :] = qy[:-1, :] - qy[1:, :]
    return tx + ty


def pd_chunk(
    mu, nu, om, mub, nub, omb,
    p1x, p1y, p2x, p2y, p3x, p3y, a, b,
    ci, gix, giy, cz, gzx, gzy,
    anchor_mu, anchor_nu, anchor_om,
    rx, ry, eps, valid,
    lam_i, lam_d, tau, sigma, prox_q, n_iters,
):
    """Run ``n_iters`` primal-dual iterations in place.

    Duals ascend on the conjugates of the weighted TV terms and of the two
    L1 data residuals (linearized around the current warp point, encoded by
    the constants ``ci``/``cz`` and gradients ``g*``); the primal flow then
    takes a proximal descent step pulled toward the outer anchor with weight
    ``prox_q`` = tau/prox_step (0 disables the pull), followed by
    over-relaxation with theta = 1. ``valid`` is a 0/1 float mask; flow is
    pinned to zero where it is 0.
    """
    inv = 1.0 / (1.0 + prox_q)
    for _ in range(n_iters):
        for f, qx, qy, lam in (
            (mub, p1x, p1y, lam_i),
            (nub, p2x, p2y, lam_i),
            (omb, p3x, p3y, lam_d),
        ):
            qx += sigma * rx * _forward_dx(f)
            qy += sigma * ry * _forward_dy(f)
            nrm = np.sqrt(qx * qx + qy * qy)
            scale = lam / np.maximum(lam, nrm)
            qx *= scale
            qy *= scale

        a += sigma * (ci - gix * mub - giy * nub)
        np.clip(a, -1.0, 1.0, out=a)
        a *= valid
        b += sigma * (cz + omb - gzx * mub - gzy * nub)
        np.clip(b, -eps, eps, out=b)
        b *= valid

        new_mu = mu - tau * (_div_transpose(rx * p1x, ry * p1y) - a * gix - b * gzx)
        new_nu = nu - tau * (_div_transpose(rx * p2x, ry * p2y) - a * giy - b * gzy)
        new_om = om - tau * (_div_transpose(rx * p3x, ry * p3y) + b)
        new_mu = (new_mu + prox_q * anchor_mu) * inv * valid
        new_nu = (new_nu + prox_q * anchor_nu) * inv * valid
        new_om = (new_om + prox_q * anchor_om) * inv * valid

        mub[...] = 2.0 * new_mu - mu
        nub[...] = 2.0 * new_nu - nu
        omb[...] = 2.0 * new_om - om
        mu[...] = new_mu
        nu[...] = new_nu
        om[...] = new_om


def dual_chunk(
    mub, nub, omb,
    p1x, p1y, p2x, p2y, p3x, p3y, a, b,
    ci, gix, giy, cz, gzx, gzy,
    rx, ry, eps, valid,
    lam_i, lam_d, sigma, n_iters,
):
    """Dual-only ascent at a fixed primal point (energy-neutral)."""
    for _ in range(n_iters):
        for f, qx, qy, lam in (
            (mub, p1x, p1y, lam_i),
            (nub, p2x, p2y, lam_i),
            (omb, p3x, p3y, lam_d),
        ):
            qx += sigma * rx * _forward_dx(f)
            qy += sigma * ry * _forward_dy(f)
            nrm = np.sqrt(qx * qx + qy * qy)
            scale = lam / np.maximum(lam, nrm)
            qx *= scale
            qy *= scale
        a += sigma * (ci - gix * mub - giy * nub)
        np.clip(a, -1.0, 1.0, out=a)
        a *= valid
        b += sigma * (cz + omb - gzx * mub - gzy * nub)
        np.clip(b, -eps, eps, out=b)
        b *= valid


def data_energy_kernel(i0, i1, z0, z1, mu, nu, om, eps, valid):
    """L1 data energy over valid pixels, warping with bilinear sampling."""
    h, w = i0.shape
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    xw = xs + mu
    yw = ys + nu
    i1w = bilinear_sample(i1, xw, yw)
    z1w = bilinear_sample(z1, xw, yw)
    rho_i = i0 - i1w
    rho_z = om - z1w + z0
    return float(np.sum(valid * (np.abs(rho_i) + eps * np.abs(rho_z))))


def tv_energy_kernel(mu, nu, om, rx, ry, lam_i, lam_d):
    """Geometry-weighted total variation of the three flow channels."""
    e = 0.0
    for f, lam in ((mu, lam_i), (nu, lam_i), (om, lam_d)):
        gx = rx * _forward_dx(f)
        gy = ry * _forward_dy(f)
        e += lam * float(np.sum(np.sqrt(gx * gx + gy * gy)))
    return e


def pegasos_chunk(w_pairs, lam, d, d_sum, k0, n_steps, radius):
    """Run ``n_steps`` full-batch subgradient steps with step 1/(lam*k).

    ``w_pairs`` holds one ranking-pair feature difference per row. ``d`` and
    ``d_sum`` (running sum of iterates for averaging) are updated in place.
    Returns the new global step count.
    """
    p = w_pairs.shape[0]
    inv_p = 1.0 / p
    k = k0
    for _ in range(n_steps):
        k += 1
        margins = w_pairs @ d
        viol = margins < 1.0
        g = lam * d
        if np.any(viol):
            g = g - inv_p * w_pairs[viol].sum(axis=0)
        d -= (1.0 / (lam * k)) * g
        nrm = float(np.sqrt(d @ d))
        if nrm > radius:
            d *= radius / nrm
        d_sum += d
    return k


def rank_objective(w_pairs, d, lam):
    """Objective value and margin-violation count of the pair-ranking SVM."""
    margins = w_pairs @ d
    hinge = np.maximum(0.0, 1.0 - margins)
    obj = 0.5 * lam * float(d @ d) + float(hinge.mean())
    violations = int(np.count_nonzero(margins < 1.0))
    return obj, violations

"""Numba-jitted twins of the kernels in ``_kernels_numpy``.

Importing this module requires numba; the dispatcher in ``kernels`` falls
back to the NumPy backend when the import fails or ``SFAM_NO_NUMBA=1``.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _sample_one(img, x, y):
    h, w = img.shape
    if x < 0.0:
        x = 0.0
    elif x > w - 1.0:
        x = w - 1.0
    if y < 0.0:
        y = 0.0
    elif y > h - 1.0:
        y = h - 1.0
    x0 = int(np.floor(x))
    y0 = int(np.floor(y))
    x1 = min(x0 + 1, w - 1)
    y1 = min(y0 + 1, h - 1)
    fx = x - x0
    fy = y - y0
    return (
        img[y0, x0] * (1.0 - fx) * (1.0 - fy)
        + img[y0, x1] * fx * (1.0 - fy)
        + img[y1, x0] * (1.0 - fx) * fy
        + img[y1, x1] * fx * fy
    )


@njit(cache=True)
def bilinear_sample(img, xs, ys):
    h, w = xs.shape
    out = np.empty((h, w), dtype=np.float64)
    for i in range(h):
        for j in range(w):
            out[i, j] = _sample_one(img, xs[i, j], ys[i, j])
    return out


@njit(cache=True)
def pd_chunk(
    mu, nu, om, mub, nub, omb,
    p1x, p1y, p2x, p2y, p3x, p3y, a, b,
    ci, gix, giy, cz, gzx, gzy,
    anchor_mu, anchor_nu, anchor_om,
    rx, ry, eps, valid,
    lam_i, lam_d, tau, sigma, prox_q, n_iters,
):
    h, w = mu.shape
    inv = 1.0 / (1.0 + prox_q)
    for _ in range(n_iters):
        # Dual ascent on the TV conjugates (forward differences, Neumann).
        for i in range(h):
            for j in range(w):
                dxm = mub[i, j + 1] - mub[i, j] if j < w - 1 else 0.0
                dym = mub[i + 1, j] - mub[i, j] if i < h - 1 else 0.0
                dxn = nub[i, j + 1] - nub[i, j] if j < w - 1 else 0.0
                dyn = nub[i + 1, j] - nub[i, j] if i < h - 1 else 0.0
                dxo = omb[i, j + 1] - omb[i, j] if j < w - 1 else 0.0
                dyo = omb[i + 1, j] - omb[i, j] if i < h - 1 else 0.0
                rxi = rx[i, j]
                ryi = ry[i, j]

                q1x = p1x[i, j] + sigma * rxi * dxm
                q1y = p1y[i, j] + sigma * ryi * dym
                nrm = np.sqrt(q1x * q1x + q1y * q1y)
                if nrm > lam_i:
                    s = lam_i / nrm
                    q1x *= s
                    q1y *= s
                p1x[i, j] = q1x
                p1y[i, j] = q1y

                q2x = p2x[i, j] + sigma * rxi * dxn
                q2y = p2y[i, j] + sigma * ryi * dyn
                nrm = np.sqrt(q2x * q2x + q2y * q2y)
                if nrm > lam_i:
                    s = lam_i / nrm
                    q2x *= s
                    q2y *= s
                p2x[i, j] = q2x
                p2y[i, j] = q2y

                q3x = p3x[i, j] + sigma * rxi * dxo
                q3y = p3y[i, j] + sigma * ryi * dyo
                nrm = np.sqrt(q3x * q3x + q3y * q3y)
                if nrm > lam_d:
                    s = lam_d / nrm
                    q3x *= s
                    q3y *= s
                p3x[i, j] = q3x
                p3y[i, j] = q3y

                # Dual ascent on the two L1 data conjugates.
                av = a[i, j] + sigma * (ci[i, j] - gix[i, j] * mub[i, j] - giy[i, j] * nub[i, j])
                if av > 1.0:
                    av = 1.0
                elif av < -1.0:
                    av = -1.0
                a[i, j] = av * valid[i, j]

                e = eps[i, j]
                bv = b[i, j] + sigma * (
                    cz[i, j] + omb[i, j] - gzx[i, j] * mub[i, j] - gzy[i, j] * nub[i, j]
                )
                if bv > e:
                    bv = e
                elif bv < -e:
                    bv = -e
                b[i, j] = bv * valid[i, j]

        # Primal descent + over-relaxation (theta = 1).
        for i in range(h):
            for j in range(w):
                t1x = (p1x[i, j - 1] * rx[i, j - 1] if j > 0 else 0.0) - p1x[i, j] * rx[i, j]
                t1y = (p1y[i - 1, j] * ry[i - 1, j] if i > 0 else 0.0) - p1y[i, j] * ry[i, j]
                t2x = (p2x[i, j - 1] * rx[i, j - 1] if j > 0 else 0.0) - p2x[i, j] * rx[i, j]
                t2y = (p2y[i - 1, j] * ry[i - 1, j] if i > 0 else 0.0) - p2y[i, j] * ry[i, j]
                t3x = (p3x[i, j - 1] * rx[i, j - 1] if j > 0 else 0.0) - p3x[i, j] * rx[i, j]
                t3y = (p3y[i - 1, j] * ry[i - 1, j] if i > 0 else 0.0) - p3y[i, j] * ry[i, j]

                v = valid[i, j]
                new_mu = mu[i, j] - tau * (t1x + t1y - a[i, j] * gix[i, j] - b[i, j] * gzx[i, j])
                new_nu = nu[i, j] - tau * (t2x + t2y - a[i, j] * giy[i, j] - b[i, j] * gzy[i, j])
                new_om = om[i, j] - tau * (t3x + t3y + b[i, j])
                new_mu = (new_mu + prox_q * anchor_mu[i, j]) * inv * v
                new_nu = (new_nu + prox_q * anchor_nu[i, j]) * inv * v
                new_om = (new_om + prox_q * anchor_om[i, j]) * inv * v

                mub[i, j] = 2.0 * new_mu - mu[i, j]
                nub[i, j] = 2.0 * new_nu - nu[i, j]
                omb[i, j] = 2.0 * new_om - om[i, j]
                mu[i, j] = new_mu
                nu[i, j] = new_nu
                om[i, j] = new_om


@njit(cache=True)
def dual_chunk(
    mub, nub, omb,
    p1x, p1y, p2x, p2y, p3x, p3y, a, b,
    ci, gix, giy, cz, gzx, gzy,
    rx, ry, eps, valid,
    lam_i, lam_d, sigma, n_iters,
):
    h, w = mub.shape
    for _ in range(n_iters):
        for i in range(h):
            for j in range(w):
                dxm = mub[i, j + 1] - mub[i, j] if j < w - 1 else 0.0
                dym = mub[i + 1, j] - mub[i, j] if i < h - 1 else 0.0
                dxn = nub[i, j + 1] - nub[i, j] if j < w - 1 else 0.0
                dyn = nub[i + 1, j] - nub[i, j] if i < h - 1 else 0.0
                dxo = omb[i, j + 1] - omb[i, j] if j < w - 1 else 0.0
                dyo = omb[i + 1, j] - omb[i, j] if i < h - 1 else 0.0
                rxi = rx[i, j]
                ryi = ry[i, j]

                q1x = p1x[i, j] + sigma * rxi * dxm
                q1y = p1y[i, j] + sigma * ryi * dym
                nrm = np.sqrt(q1x * q1x + q1y * q1y)
                if nrm > lam_i:
                    s = lam_i / nrm
                    q1x *= s
                    q1y *= s
                p1x[i, j] = q1x
                p1y[i, j] = q1y

                q2x = p2x[i, j] + sigma * rxi * dxn
                q2y = p2y[i, j] + sigma * ryi * dyn
                nrm = np.sqrt(q2x * q2x + q2y * q2y)
                if nrm > lam_i:
                    s = lam_i / nrm
                    q2x *= s
                    q2y *= s
                p2x[i, j] = q2x
                p2y[i, j] = q2y

                q3x = p3x[i, j] + sigma * rxi * dxo
                q3y = p3y[i, j] + sigma * ryi * dyo
                nrm = np.sqrt(q3x * q3x + q3y * q3y)
                if nrm > lam_d:
                    s = lam_d / nrm
                    q3x *= s
                    q3y *= s
                p3x[i, j] = q3x
                p3y[i, j] = q3y

                av = a[i, j] + sigma * (ci[i, j] - gix[i, j] * mub[i, j] - giy[i, j] * nub[i, j])
                if av > 1.0:
                    av = 1.0
                elif av < -1.0:
                    av = -1.0
                a[i, j] = av * valid[i, j]

                e = eps[i, j]
                bv = b[i, j] + sigma * (
                    cz[i, j] + omb[i, j] - gzx[i, j] * mub[i, j] - gzy[i, j] * nub[i, j]
                )
                if bv > e:
                    bv = e
                elif bv < -e:
                    bv = -e
                b[i, j] = bv * valid[i, j]


@njit(cache=True)
def data_energy_kernel(i0, i1, z0, z1, mu, nu, om, eps, valid):
    h, w = i0.shape
    total = 0.0
    for i in range(h):
        for j in range(w):
            if valid[i, j] == 0.0:
                continue
            xw = j + mu[i, j]
            yw = i + nu[i, j]
            i1w = _sample_one(i1, xw, yw)
            z1w = _sample_one(z1, xw, yw)
            rho_i = i0[i, j] - i1w
            rho_z = om[i, j] - z1w + z0[i, j]
            total += abs(rho_i) + eps[i, j] * abs(rho_z)
    return total


@njit(cache=True)
def tv_energy_kernel(mu, nu, om, rx, ry, lam_i, lam_d):
    h, w = mu.shape
    e_i = 0.0
    e_d = 0.0
    for i in range(h):
        for j in range(w):
            rxi = rx[i, j]
            ryi = ry[i, j]
            dxm = rxi * (mu[i, j + 1] - mu[i, j]) if j < w - 1 else 0.0
            dym = ryi * (mu[i + 1, j] - mu[i, j]) if i < h - 1 else 0.0
            e_i += np.sqrt(dxm * dxm + dym * dym)
            dxn = rxi * (nu[i, j + 1] - nu[i, j]) if j < w - 1 else 0.0
            dyn = ryi * (nu[i + 1, j] - nu[i, j]) if i < h - 1 else 0.0
            e_i += np.sqrt(dxn * dxn + dyn * dyn)
            dxo = rxi * (om[i, j + 1] - om[i, j]) if j < w - 1 else 0.0
            dyo = ryi * (om[i + 1, j] - om[i, j]) if i < h - 1 else 0.0
            e_d += np.sqrt(dxo * dxo + dyo * dyo)
    return lam_i * e_i + lam_d * e_d


@njit(cache=True)
def pegasos_chunk(w_pairs, lam, d, d_sum, k0, n_steps, radius):
    p, dim = w_pairs.shape
    inv_p = 1.0 / p
    g = np.empty(dim, dtype=np.float64)
    k = k0
    for _ in range(n_steps):
        k += 1
        for c in range(dim):
            g[c] = lam * d[c]
        for r in range(p):
            m = 0.0
            for c in range(dim):
                m += w_pairs[r, c] * d[c]
            if m < 1.0:
                for c in range(dim):
                    g[c] -= inv_p * w_pairs[r, c]
        step = 1.0 / (lam * k)
        nrm = 0.0
        for c in range(dim):
            d[c] -= step * g[c]
            nrm += d[c] * d[c]
        nrm = np.sqrt(nrm)
        if nrm > radius:
            s = radius / nrm
            for c in range(dim):
                d[c] *= s
        for c in range(dim):
            d_sum[c] += d[c]
    return k


@njit(cache=True)
def rank_objective(w_pairs, d, lam):
    p, dim = w_pairs.shape
    reg = 0.0
    for c in range(dim):
        reg += d[c] * d[c]
    loss = 0.0
    violations = 0
    for r in range(p):
        m = 0.0
        for c in range(dim):
            m += w_pairs[r, c] * d[c]
        if m < 1.0:
            violations += 1
            loss += 1.0 - m
    return 0.5 * lam * reg + loss / p, violations

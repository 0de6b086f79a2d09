"""Numerical kernels for density and entropy sums.

Two evaluation routes are provided for sums of the form
``sum_i K(d_g(eta, xi_i)/h) / theta_eta(xi_i)``:

* direct pairwise summation (numba), exact, used for small workloads,
  for compactly supported window sweeps, and as the reference oracle;
* a zonal (Legendre / real spherical harmonic) moment expansion, used
  when both the number of evaluation directions and the number of data
  directions are large.  The expansion order is chosen adaptively so the
  reconstruction of the zonal profile meets a sup-norm tolerance; the
  caller falls back to the direct route when the tolerance cannot be met
  (e.g. for the discontinuous uniform kernel).
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

KERNEL_IDS = {
    "uniform": 0,
    "epanechnikov": 1,
    "biweight": 2,
    "triweight": 3,
    "tricube": 4,
    "triangular": 5,
}


@njit(cache=True, inline="always")
def _shape(t, kid):
    if kid == 0:
        return 1.0
    if kid == 1:
        return 1.0 - t * t
    if kid == 2:
        v = 1.0 - t * t
        return v * v
    if kid == 3:
        v = 1.0 - t * t
        return v * v * v
    if kid == 4:
        v = 1.0 - t * t * t
        return v * v * v
    return 1.0 - t


@njit(cache=True, inline="always")
def _g_of_dot(u, h, kid, c, cos_h):
    """c * K(r/h) * r / sin(r) with r = arccos(u); 0 outside the support."""
    if u <= cos_h:
        return 0.0
    if u >= 1.0:
        return c * _shape(0.0, kid)
    r = math.acos(u)
    if r >= h:
        return 0.0
    w = c * _shape(r / h, kid)
    if r > 1e-9:
        w *= r / math.sin(r)
    return w


@njit(cache=True)
def kernel_sums_direct(evals, data, h, kid, c):
    """sum_i G(<eta_j, xi_i>) for every evaluation direction eta_j."""
    cos_h = math.cos(h) if h < math.pi else -1.0
    m = evals.shape[0]
    n = data.shape[0]
    out = np.zeros(m)
    for j in range(m):
        ex = evals[j, 0]
        ey = evals[j, 1]
        ez = evals[j, 2]
        acc = 0.0
        for i in range(n):
            u = ex * data[i, 0] + ey * data[i, 1] + ez * data[i, 2]
            acc += _g_of_dot(u, h, kid, c, cos_h)
        out[j] = acc
    return out


@njit(cache=True)
def kernel_sums_self(data, h, kid, c):
    """Same as kernel_sums_direct(data, data, ...) using pair symmetry."""
    cos_h = math.cos(h) if h < math.pi else -1.0
    n = data.shape[0]
    out = np.full(n, c * _shape(0.0, kid))
    for j in range(n):
        xj = data[j, 0]
        yj = data[j, 1]
        zj = data[j, 2]
        for i in range(j + 1, n):
            u = xj * data[i, 0] + yj * data[i, 1] + zj * data[i, 2]
            g = _g_of_dot(u, h, kid, c, cos_h)
            if g != 0.0:
                out[j] += g
                out[i] += g
    return out


# ---------------------------------------------------------------------------
# zonal expansion route


def zonal_coefficients(h, kid, c, tol=1e-5, l_max=240, n_quad=480):
    """Legendre coefficients a_l of G(u) on [-1, 1] and the achieved sup error.

    a_l = (2l+1)/2 * int G(u) P_l(u) du, integrated by Gauss-Legendre on the
    support [cos h, 1] where G is smooth.
    """
    cos_h = math.cos(h) if h < math.pi else -1.0
    x, w = np.polynomial.legendre.leggauss(n_quad)
    u = 0.5 * (1 - cos_h) * x + 0.5 * (1 + cos_h)
    wq = 0.5 * (1 - cos_h) * w
    g = _g_profile(u, h, kid, c)
    P = _legendre_table(u, l_max)
    ls = np.arange(l_max + 1)
    a = (2 * ls + 1) / 2.0 * (P * (g * wq)[None, :]).sum(axis=1)
    # measure truncation error on a fine grid (both inside and outside support)
    uf = np.linspace(-1.0, 1.0, 4001)
    gf = _g_profile(uf, h, kid, c)
    Pf = _legendre_table(uf, l_max)
    scale = max(gf.max(), 1e-300)
    cum = np.cumsum(a[:, None] * Pf, axis=0)
    errs = np.max(np.abs(cum - gf[None, :]), axis=1) / scale
    good = np.nonzero(errs <= tol)[0]
    if len(good):
        L = int(good[0])
        return a[: L + 1], float(errs[L])
    L = int(np.argmin(errs))
    return a[: L + 1], float(errs[L])


def _g_profile(u, h, kid, c):
    u = np.clip(np.asarray(u, dtype=float), -1.0, 1.0)
    r = np.arccos(u)
    out = np.zeros_like(u)
    inside = r < h
    t = r[inside] / h
    if kid == 0:
        shape = np.ones_like(t)
    elif kid == 1:
        shape = 1 - t**2
    elif kid == 2:
        shape = (1 - t**2) ** 2
    elif kid == 3:
        shape = (1 - t**2) ** 3
    elif kid == 4:
        shape = (1 - t**3) ** 3
    else:
        shape = 1 - t
    ri = r[inside]
    corr = np.where(ri > 1e-9, ri / np.sin(np.where(ri > 1e-9, ri, 1.0)), 1.0)
    out[inside] = c * shape * corr
    return out


def _legendre_table(u, l_max):
    P = np.empty((l_max + 1, len(u)))
    P[0] = 1.0
    if l_max >= 1:
        P[1] = u
    for l in range(2, l_max + 1):
        P[l] = ((2 * l - 1) * u * P[l - 1] - (l - 1) * P[l - 2]) / l
    return P


def _sh_recurrence_tables(L):
    """Flattened (m outer, l inner) tables for the orthonormal ALF recurrence."""
    nlm = (L + 1) * (L + 2) // 2
    A = np.zeros(nlm)
    B = np.zeros(nlm)
    Ldeg = np.zeros(nlm, dtype=np.int64)
    idx = 0
    for m in range(L + 1):
        for l in range(m, L + 1):
            Ldeg[idx] = l
            if l >= m + 2:
                A[idx] = math.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
                B[idx] = math.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1.0) ** 2 - 1.0))
            idx += 1
    return A, B, Ldeg


@njit(cache=True)
def _sh_accumulate(z, cphi, sphi, L, A, B, coef_c, coef_s, mode, out):
    """Shared recurrence over points.

    mode 0: accumulate moments into coef_c / coef_s (sums of Y_lm).
    mode 1: out[i] = sum_lm coef_c * Y_c + coef_s * Y_s.
    """
    sqrt2 = math.sqrt(2.0)
    y00 = 0.28209479177387814  # sqrt(1/4pi)
    for i in range(z.size):
        zi = z[i]
        s = math.sqrt(max(0.0, 1.0 - zi * zi))
        c1 = cphi[i]
        s1 = sphi[i]
        cm = 1.0
        sm = 0.0
        pmm = y00
        idx = 0
        acc = 0.0
        for m in range(L + 1):
            if m > 0:
                pmm = -math.sqrt((2.0 * m + 1.0) / (2.0 * m)) * s * pmm
                cn = cm * c1 - sm * s1
                sm = sm * c1 + cm * s1
                cm = cn
            fac = sqrt2 if m > 0 else 1.0
            fc = fac * cm
            fs = fac * sm
            p_prev = pmm
            if mode == 0:
                coef_c[idx] += p_prev * fc
                coef_s[idx] += p_prev * fs
            else:
                acc += p_prev * (coef_c[idx] * fc + coef_s[idx] * fs)
            idx += 1
            if m < L:
                p = math.sqrt(2.0 * m + 3.0) * zi * pmm
                if mode == 0:
                    coef_c[idx] += p * fc
                    coef_s[idx] += p * fs
                else:
                    acc += p * (coef_c[idx] * fc + coef_s[idx] * fs)
                idx += 1
                for l in range(m + 2, L + 1):
                    pn = A[idx] * (zi * p - B[idx] * p_prev)
                    p_prev = p
                    p = pn
                    if mode == 0:
                        coef_c[idx] += p * fc
                        coef_s[idx] += p * fs
                    else:
                        acc += p * (coef_c[idx] * fc + coef_s[idx] * fs)
                    idx += 1
        if mode == 1:
            out[i] = acc
    return out


def _to_z_phi(directions):
    d = np.asarray(directions, dtype=float)
    z = np.clip(d[:, 2], -1.0, 1.0)
    nxy = np.hypot(d[:, 0], d[:, 1])
    safe = nxy > 0
    cphi = np.where(safe, d[:, 0] / np.where(safe, nxy, 1.0), 1.0)
    sphi = np.where(safe, d[:, 1] / np.where(safe, nxy, 1.0), 0.0)
    return z, cphi, sphi


def kernel_sums_zonal(evals, data, a_l):
    """Zonal-expansion evaluation of the pairwise kernel sums.

    Exactly reproduces sum_i G_L(<eta_j, xi_i>) where G_L is the Legendre
    truncation of G whose coefficients are ``a_l``.
    """
    L = len(a_l) - 1
    A, B, Ldeg = _sh_recurrence_tables(L)
    nlm = len(A)
    zd, cd, sd = _to_z_phi(data)
    Cc = np.zeros(nlm)
    Cs = np.zeros(nlm)
    _sh_accumulate(zd, cd, sd, L, A, B, Cc, Cs, 0, np.empty(0))
    w = 4 * np.pi / (2 * np.asarray(Ldeg) + 1) * np.asarray(a_l)[Ldeg]
    ze, ce, se = _to_z_phi(evals)
    out = np.empty(len(evals))
    _sh_accumulate(ze, ce, se, L, A, B, Cc * w, Cs * w, 1, out)
    return out


# ---------------------------------------------------------------------------
# uniform-grid spatial binning


class PointGrid:
    """Uniform-grid bin index over 3-d points (CSR layout)."""

    def __init__(self, points, origin, side, cell):
        self.points = np.asarray(points, dtype=float)
        self.origin = np.asarray(origin, dtype=float)
        self.cell = float(cell)
        self.n_axis = max(1, int(math.ceil(side / cell - 1e-12)))
        ids = self._cell_ids(self.points)
        order = np.argsort(ids, kind="stable")
        self.order = order.astype(np.int64)
        counts = np.bincount(ids, minlength=self.n_axis**3)
        self.starts = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)

    def _cell_ids(self, pts):
        idx = np.floor((pts - self.origin) / self.cell).astype(np.int64)
        idx = np.clip(idx, 0, self.n_axis - 1)
        return (idx[:, 0] * self.n_axis + idx[:, 1]) * self.n_axis + idx[:, 2]


@njit(cache=True)
def _gather_box(lo0, lo1, lo2, hi0, hi1, hi2, points, order, starts, grid0, cell, n_axis, buf):
    """Indices of points inside the closed box [lo, hi] into buf; returns count."""
    i0 = int(math.floor((lo0 - grid0[0]) / cell))
    j0 = int(math.floor((lo1 - grid0[1]) / cell))
    k0 = int(math.floor((lo2 - grid0[2]) / cell))
    i1 = int(math.floor((hi0 - grid0[0]) / cell))
    j1 = int(math.floor((hi1 - grid0[1]) / cell))
    k1 = int(math.floor((hi2 - grid0[2]) / cell))
    if i0 < 0:
        i0 = 0
    if j0 < 0:
        j0 = 0
    if k0 < 0:
        k0 = 0
    if i1 > n_axis - 1:
        i1 = n_axis - 1
    if j1 > n_axis - 1:
        j1 = n_axis - 1
    if k1 > n_axis - 1:
        k1 = n_axis - 1
    n = 0
    for ci in range(i0, i1 + 1):
        for cj in range(j0, j1 + 1):
            for ck in range(k0, k1 + 1):
                cid = (ci * n_axis + cj) * n_axis + ck
                for p in range(starts[cid], starts[cid + 1]):
                    q = order[p]
                    x = points[q, 0]
                    y = points[q, 1]
                    z = points[q, 2]
                    if lo0 <= x <= hi0 and lo1 <= y <= hi1 and lo2 <= z <= hi2:
                        buf[n] = q
                        n += 1
    return n


@njit(cache=True)
def scan_entropy_sweep(nodes, b, points, marks, order, starts, grid0, cell, n_axis,
                       h, kid, c, lam, clamp, min_points):
    """Plain entropy estimate of the window [x, x+b]^3 at each lattice node x.

    Local windows use B' = the window itself.  Returns (entropy, point
    count, clamped-log count) per node; nodes with fewer than min_points
    points get NaN.
    """
    cos_h = math.cos(h) if h < math.pi else -1.0
    self_g = c * _shape(0.0, kid)
    n_nodes = nodes.shape[0]
    values = np.full(n_nodes, np.nan)
    counts = np.zeros(n_nodes, dtype=np.int64)
    clamps = np.zeros(n_nodes, dtype=np.int64)
    buf = np.empty(points.shape[0], dtype=np.int64)
    vol = b * b * b
    for k in range(n_nodes):
        x0 = nodes[k, 0]
        y0 = nodes[k, 1]
        z0 = nodes[k, 2]
        n = _gather_box(x0, y0, z0, x0 + b, y0 + b, z0 + b,
                        points, order, starts, grid0, cell, n_axis, buf)
        counts[k] = n
        if n < min_points:
            continue
        f = np.full(n, self_g)
        for a in range(n):
            qa = buf[a]
            ax = marks[qa, 0]
            ay = marks[qa, 1]
            az = marks[qa, 2]
            for bb in range(a + 1, n):
                qb = buf[bb]
                u = ax * marks[qb, 0] + ay * marks[qb, 1] + az * marks[qb, 2]
                g = _g_of_dot(u, h, kid, c, cos_h)
                if g != 0.0:
                    f[a] += g
                    f[bb] += g
        norm = lam * vol * h * h
        ent = 0.0
        ncl = 0
        for a in range(n):
            fa = f[a] / norm
            if fa < clamp:
                fa = clamp
                ncl += 1
            ent -= math.log(fa)
        values[k] = ent / (lam * vol)
        clamps[k] = ncl
    return values, counts, clamps


@njit(cache=True)
def scan_entropy_sweep_modified(nodes, b, points, marks, order, starts,
                                cpoints, cmarks, corder, cstarts,
                                grid0, cell, n_axis,
                                h, kid, c, lam, clamp, min_points):
    """Modified entropy per window: density from the original process's
    points, the sum over the independent copy's points, both restricted to
    the window [x, x+b]^3 at each lattice node x."""
    cos_h = math.cos(h) if h < math.pi else -1.0
    n_nodes = nodes.shape[0]
    values = np.full(n_nodes, np.nan)
    counts = np.zeros(n_nodes, dtype=np.int64)
    clamps = np.zeros(n_nodes, dtype=np.int64)
    buf = np.empty(points.shape[0], dtype=np.int64)
    cbuf = np.empty(cpoints.shape[0], dtype=np.int64)
    vol = b * b * b
    for k in range(n_nodes):
        x0 = nodes[k, 0]
        y0 = nodes[k, 1]
        z0 = nodes[k, 2]
        n = _gather_box(x0, y0, z0, x0 + b, y0 + b, z0 + b,
                        points, order, starts, grid0, cell, n_axis, buf)
        m = _gather_box(x0, y0, z0, x0 + b, y0 + b, z0 + b,
                        cpoints, corder, cstarts, grid0, cell, n_axis, cbuf)
        counts[k] = m
        if n < min_points or m < min_points:
            continue
        norm = lam * vol * h * h
        ent = 0.0
        ncl = 0
        for j in range(m):
            qj = cbuf[j]
            ex = cmarks[qj, 0]
            ey = cmarks[qj, 1]
            ez = cmarks[qj, 2]
            acc = 0.0
            for i in range(n):
                qi = buf[i]
                u = ex * marks[qi, 0] + ey * marks[qi, 1] + ez * marks[qi, 2]
                acc += _g_of_dot(u, h, kid, c, cos_h)
            fj = acc / norm
            if fj < clamp:
                fj = clamp
                ncl += 1
            ent -= math.log(fj)
        values[k] = ent / (lam * vol)
        clamps[k] = ncl
    return values, counts, clamps


@njit(cache=True)
def translate_density_at_marks(eval_pts, eval_marks, side, clip_lo, clip_hi,
                               points, marks, order, starts, grid0, cell, n_axis,
                               h, kid, c, lam):
    """Density estimate in the translated window [Y, Y+side]^3 clipped to a box.

    For every (Y_j, xi_j) in eval_pts/eval_marks, builds the kernel density
    from the binned data points falling in the clipped window and evaluates
    it at xi_j.  Returns (fhat, clipped volume, point count) per row.
    """
    cos_h = math.cos(h) if h < math.pi else -1.0
    m = eval_pts.shape[0]
    fhat = np.zeros(m)
    vols = np.zeros(m)
    counts = np.zeros(m, dtype=np.int64)
    buf = np.empty(points.shape[0], dtype=np.int64)
    for j in range(m):
        lo0 = max(eval_pts[j, 0], clip_lo[0])
        lo1 = max(eval_pts[j, 1], clip_lo[1])
        lo2 = max(eval_pts[j, 2], clip_lo[2])
        hi0 = min(eval_pts[j, 0] + side, clip_hi[0])
        hi1 = min(eval_pts[j, 1] + side, clip_hi[1])
        hi2 = min(eval_pts[j, 2] + side, clip_hi[2])
        if hi0 <= lo0 or hi1 <= lo1 or hi2 <= lo2:
            continue
        vol = (hi0 - lo0) * (hi1 - lo1) * (hi2 - lo2)
        vols[j] = vol
        n = _gather_box(lo0, lo1, lo2, hi0, hi1, hi2,
                        points, order, starts, grid0, cell, n_axis, buf)
        counts[j] = n
        ex = eval_marks[j, 0]
        ey = eval_marks[j, 1]
        ez = eval_marks[j, 2]
        acc = 0.0
        for p in range(n):
            q = buf[p]
            u = ex * marks[q, 0] + ey * marks[q, 1] + ez * marks[q, 2]
            acc += _g_of_dot(u, h, kid, c, cos_h)
        fhat[j] = acc / (lam * vol * h * h)
    return fhat, vols, counts

"""Compiled inner loops for coordinate descent and SPAM backfitting."""
import numpy as np
from numba import njit

# thresholds within this relative margin of lambda count as exactly at it, so
# lambda_max (computed with a different summation order) yields an empty model
EDGE = 1e-12


@njit(cache=True, fastmath=True)
def cd_sweep(Xc, col_sq, beta, r, lam, idx):
    """One cyclic pass of Lasso coordinate descent over ``idx`` (in order).

    ``Xc`` is Fortran-ordered so columns are contiguous; ``beta`` and ``r``
    are updated in place.
    """
    n = Xc.shape[0]
    for t in range(idx.shape[0]):
        j = idx[t]
        cs = col_sq[j]
        if cs == 0.0:
            continue
        old = beta[j]
        z = cs * old
        for i in range(n):
            z += Xc[i, j] * r[i]
        a = abs(z) - lam
        if a > EDGE * lam:
            new = (a if z > 0.0 else -a) / cs
        else:
            new = 0.0
        if new != old:
            d = new - old
            for i in range(n):
                r[i] -= d * Xc[i, j]
            beta[j] = new


@njit(cache=True, fastmath=True)
def _dot_row(M, j, k, v):
    acc = 0.0
    for i in range(v.shape[0]):
        acc += M[j, k, i] * v[i]
    return acc


@njit(cache=True)
def spam_cycle(eig_t, shrink, dims, coords, norms, resid, lam):
    """One full backfitting cycle over every function, in index order.

    Smoother ``j`` is ``U_j diag(shrink_j) U_j'`` with orthonormal ``U_j``
    (stored transposed in ``eig_t[j]``), and ``f_j = U_j coords[j]``. For each
    ``j`` the smoothed partial residual has coordinates
    ``shrink_j * (U_j' resid + coords[j])``; its norm drives the soft
    threshold. ``coords``, ``norms`` and ``resid`` are updated in place.
    """
    p = eig_t.shape[0]
    s = np.empty(eig_t.shape[1])
    for j in range(p):
        K = dims[j]
        active = norms[j] > 0.0
        sq = 0.0
        for k in range(K):
            c = _dot_row(eig_t, j, k, resid)
            if active:
                c += coords[j, k]
            s[k] = shrink[j, k] * c
            sq += s[k] * s[k]
        ns = np.sqrt(sq)
        factor = 1.0 - lam / ns if ns > lam * (1.0 + EDGE) else 0.0
        if active or factor > 0.0:
            for k in range(K):
                d = factor * s[k] - coords[j, k]
                coords[j, k] = factor * s[k]
                if d != 0.0:
                    for i in range(resid.shape[0]):
                        resid[i] -= d * eig_t[j, k, i]
            norms[j] = factor * ns

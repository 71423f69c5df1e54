"""Penalized natural cubic regression splines and a LOESS smoother.

A :class:`SplineSmoother` is the linear operator ``r -> S r - mean(S r)`` with
``S = B (B'B + lam * Omega)^{-1} B'``. ``B`` is a natural cubic spline basis
with knots at the data extremes and interior deciles, ``Omega`` the integrated
squared second-derivative penalty. ``lam`` is calibrated so that ``trace(S)``
hits a requested effective degrees of freedom.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.interpolate import BSpline
from scipy.linalg import solve_triangular

from .errors import InvalidArgument

DECILES = np.arange(10, 100, 10)
LOG10_LAMBDA_RANGE = (-12.0, 12.0)
TRACE_TOL = 1e-6
KNOT_MERGE_TOL = 1e-8  # relative to the data range


def _clamped_knots(xi):
    return np.concatenate([[xi[0]] * 3, xi, [xi[-1]] * 3])


@lru_cache(maxsize=64)
def _natural_map_cached(key):
    return _natural_map(np.frombuffer(key))


def _natural_map(xi):
    """Clamped knot vector ``t`` and coefficients of the curved natural columns.

    The natural subspace of the ``K+2`` clamped cubic B-splines (second
    derivative zero at both boundary knots) has dimension ``K``. The returned
    ``(K+2) x (K-2)`` matrix spans its complement to the constant and linear
    functions, so those two can be carried as exact columns of their own.
    """
    t = _clamped_knots(xi)
    nb = len(t) - 4
    spl = BSpline(t, np.eye(nb), 3)
    K = len(xi)
    P = np.zeros((nb, K))
    # only the three outermost B-splines bend at each boundary knot
    for rows, cols, u in ((slice(0, 3), slice(0, 2), xi[0]), (slice(nb - 3, nb), slice(K - 2, K), xi[-1])):
        c = spl(u, 2)[rows]
        P[rows, cols] = np.linalg.qr(c[:, None], mode="complete")[0][:, 1:]
    P[3:nb - 3, 2:K - 2] = np.eye(nb - 6)
    # B-spline coefficients of 1 and u: ones and the Greville abscissae
    greville = (t[1:nb + 1] + t[2:nb + 2] + t[3:nb + 3]) / 3.0
    lines = np.linalg.lstsq(P, np.column_stack([np.ones(nb), greville]), rcond=None)[0]
    W = np.linalg.qr(lines, mode="complete")[0][:, 2:]
    return t, P @ W


def _natural_columns(u, xi, nu=0):
    """Derivative ``nu`` of the non-constant natural columns at rescaled ``u``.

    Column 0 is ``u`` itself; the curved columns continue linearly beyond the
    boundary knots.
    """
    t, C = _natural_map_cached(np.ascontiguousarray(xi, dtype=float).tobytes())
    spl = BSpline(t, C, 3)
    inside = np.clip(u, xi[0], xi[-1])
    curved = spl(inside, nu)
    if nu == 0:
        curved = curved + (u - inside)[:, None] * spl(inside, 1)
    elif nu == 2:
        curved[(u < xi[0]) | (u > xi[-1])] = 0.0
    line = u if nu == 0 else np.full(len(u), 1.0 if nu == 1 else 0.0)
    return np.column_stack([line, curved])


def _rescale(x, knots):
    lo, span = knots[0], knots[-1] - knots[0]
    return (np.asarray(x, dtype=float) - lo) / span, (np.asarray(knots, dtype=float) - lo) / span


def natural_spline_basis(x, knots):
    """Natural cubic spline basis, shape ``(len(x), len(knots))``, needs 4+ knots.

    Columns are ``1``, ``u`` and locally supported B-spline combinations,
    where ``u`` is ``x`` rescaled so the boundary knots map to 0 and 1.
    Together they span every cubic spline with these knots that is linear
    outside the boundary knots.
    """
    u, xi = _rescale(x, knots)
    return np.hstack([np.ones((len(u), 1)), _natural_columns(u, xi)])


def _basis_second_derivative(u, xi):
    u = np.asarray(u, dtype=float)
    return np.hstack([np.zeros((len(u), 1)), _natural_columns(u, np.asarray(xi, dtype=float), 2)])


def penalty_root(knots):
    """Matrix ``F`` with ``F'F`` the penalty Gram matrix, one row per quadrature node.

    Second derivatives are piecewise linear between knots, so two-point
    Gauss-Legendre quadrature on each interval is exact. Working with ``F``
    rather than its Gram matrix avoids squaring the penalty's condition number.
    """
    knots = np.asarray(knots, dtype=float)
    xi = (knots - knots[0]) / (knots[-1] - knots[0])
    nodes, weights = np.polynomial.legendre.leggauss(2)
    half = 0.5 * np.diff(xi)
    pts = (xi[:-1, None] + half[:, None] * (nodes + 1.0)).ravel()
    w = (half[:, None] * weights).ravel()
    return np.sqrt(w)[:, None] * _basis_second_derivative(pts, xi)


def penalty_matrix(knots):
    """Gram matrix of basis second derivatives over the boundary-knot interval."""
    F = penalty_root(knots)
    return F.T @ F


def decile_knots(x):
    """Data min/max plus interior deciles, with near-duplicates merged."""
    x = np.asarray(x, dtype=float)
    raw = np.concatenate([[x.min()], np.percentile(x, DECILES), [x.max()]])
    raw = np.sort(raw)
    rng = raw[-1] - raw[0]
    if rng <= 0:
        return raw[:1]
    tol = KNOT_MERGE_TOL * rng
    keep = [raw[0]]
    for k in raw[1:-1]:
        if k - keep[-1] > tol and raw[-1] - k > tol:
            keep.append(k)
    keep.append(raw[-1])
    return np.asarray(keep)


def smoother_basis(knots, x, linear_fallback=False):
    """Non-constant smoother columns at ``x``; just the rescaled ``x`` in fallback mode."""
    x = np.asarray(x, dtype=float)
    knots = np.asarray(knots, dtype=float)
    if linear_fallback:
        scale = knots[-1] - knots[0] if len(knots) > 1 and knots[-1] > knots[0] else 1.0
        return ((x - knots[0]) / scale)[:, None]
    return natural_spline_basis(x, knots)[:, 1:]


@dataclass(frozen=True, eq=False)
class SmootherFit:
    """Centered smoother output together with its basis coefficients.

    ``fitted == basis(x) @ coef - offset`` on the training inputs, where the
    basis excludes the constant column.
    """

    fitted: np.ndarray
    coef: np.ndarray
    offset: float
    centered: bool = True


@dataclass(frozen=True, eq=False)
class SplineSmoother:
    """Calibrated centered smoother in Demmler-Reinsch form.

    The centered smoother matrix is ``U diag(shrink) U'`` with ``U`` an
    ``n x (K-1)`` orthonormal basis of the centered, non-constant spline
    columns. ``to_coef`` maps coordinates in ``U`` to basis coefficients.
    """

    knots: np.ndarray
    penalty: float
    basis_dim: int
    target_df: float
    hat_trace: float
    linear_fallback: bool
    x: np.ndarray = field(repr=False)
    eigvecs: np.ndarray = field(repr=False)
    shrink: np.ndarray = field(repr=False)
    to_coef: np.ndarray = field(repr=False)
    col_means: np.ndarray = field(repr=False)

    @property
    def n(self):
        return len(self.x)

    def basis(self, x):
        """Non-constant basis columns evaluated at ``x``."""
        return smoother_basis(self.knots, x, self.linear_fallback)

    def evaluate(self, coef, x, offset=None):
        """``basis(x) @ coef - offset``; offset defaults to the training mean."""
        coef = np.asarray(coef, dtype=float)
        if offset is None:
            offset = float(self.col_means @ coef)
        return self.basis(x) @ coef - offset

    def apply(self, r):
        return apply(self, r)

    def matrix(self):
        """The ``n x n`` centered smoother matrix."""
        return (self.eigvecs * self.shrink) @ self.eigvecs.T


def _decompose(Bc, root):
    """Orthonormal U, eigenvalues d and coordinate map T with ``Bc @ T == U``.

    With ``Bc = QR`` and ``Omega = F'F``, the SVD ``F R^{-1} = W diag(s) V'``
    gives ``U = Bc R^{-1} V``, ``d = s**2`` and the penalized smoother
    ``U diag(1/(1+lam d)) U'``. Column 0 of ``Bc`` is the line, which the
    penalty ignores; it is kept as its own direction with ``d = 0`` so lines
    pass through exactly.
    """
    R = np.linalg.qr(Bc, mode="r")
    diag = np.abs(np.diag(R))
    if diag.min() <= 1e-10 * diag.max():
        raise np.linalg.LinAlgError("spline basis is rank deficient")
    Rinv = solve_triangular(R, np.eye(R.shape[0]))
    _, sv, Vt = np.linalg.svd((root @ Rinv)[:, 1:], full_matrices=False)
    V = np.block([[np.ones((1, 1)), np.zeros((1, len(sv)))], [np.zeros((len(sv), 1)), Vt.T]])
    T = Rinv @ V
    return Bc @ T, np.concatenate([[0.0], sv**2]), T


def _linear_smoother(x, knots, target_df):
    u = smoother_basis(knots, x, True)[:, 0]
    col_means = np.array([u.mean()])
    uc = u - col_means[0]
    norm = np.sqrt(uc @ uc)
    if norm > 0:
        U, shrink, T = (uc / norm)[:, None], np.ones(1), np.array([[1.0 / norm]])
    else:
        U, shrink, T = np.zeros((len(x), 1)), np.zeros(1), np.zeros((1, 1))
    return SplineSmoother(knots=knots, penalty=np.inf, basis_dim=2, target_df=float(target_df),
                          hat_trace=2.0, linear_fallback=True, x=x, eigvecs=U, shrink=shrink,
                          to_coef=T, col_means=col_means)


def hat_trace(B, root, lam):
    """``trace(B (B'B + lam Omega)^{-1} B')`` with ``Omega = root' root``.

    Independent of the eigen form: the smoother is ``Q1 Q1'`` for the top
    block ``Q1`` of the thin QR factor of ``B`` stacked over
    ``sqrt(lam) * root``, which stays accurate when ``B'B`` or ``Omega`` is
    badly conditioned.
    """
    Q = np.linalg.qr(np.vstack([B, np.sqrt(lam) * root]))[0]
    return float(np.sum(Q[: B.shape[0]] ** 2))


def build_smoother(x, target_df=4.0):
    """Calibrate a spline smoother on feature values ``x``.

    Bisects ``log10(lam)`` over [-12, 12] until the trace of the (uncentered)
    smoother matrix is within 1e-6 of ``target_df``. With fewer than four
    distinct knot locations the smoother degrades to centered linear
    regression on ``x``.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or not np.all(np.isfinite(x)):
        raise InvalidArgument("x must be a finite 1D array")
    knots = decile_knots(x)
    if len(knots) < 4:
        return _linear_smoother(x, knots, target_df)
    K = len(knots)
    if not 2 < target_df <= K:
        raise InvalidArgument(f"target_df must lie in (2, {K}], got {target_df}")

    B = natural_spline_basis(x, knots)[:, 1:]
    col_means = B.mean(axis=0)
    # the constant column is unpenalized, so partialling it out leaves the
    # mean plus the smoother of the centered remaining columns
    root = penalty_root(knots)[:, 1:]
    try:
        U, eigs, T = _decompose(B - col_means, root)
    except np.linalg.LinAlgError:
        return _linear_smoother(x, knots, target_df)

    def trace(log_lam):
        return 1.0 + float(np.sum(1.0 / (1.0 + 10.0**log_lam * eigs)))

    lo, hi = LOG10_LAMBDA_RANGE
    log_lam = lo
    if trace(lo) > target_df:
        for _ in range(200):
            log_lam = 0.5 * (lo + hi)
            tr = trace(log_lam)
            if abs(tr - target_df) <= 0.1 * TRACE_TOL:
                break
            if tr > target_df:
                lo = log_lam
            else:
                hi = log_lam
    lam = 10.0**log_lam
    shrink = 1.0 / (1.0 + lam * eigs)
    return SplineSmoother(knots=knots, penalty=lam, basis_dim=K, target_df=float(target_df),
                          hat_trace=1.0 + float(shrink.sum()), linear_fallback=False, x=x,
                          eigvecs=U, shrink=shrink, to_coef=T, col_means=col_means)


def apply(sm, r):
    """Smooth ``r`` and remove the mean of the result."""
    r = np.asarray(r, dtype=float)
    if r.shape != (sm.n,):
        raise InvalidArgument(f"expected a length-{sm.n} vector, got shape {r.shape}")
    a = sm.shrink * (sm.eigvecs.T @ r)
    coef = sm.to_coef @ a
    return SmootherFit(sm.eigvecs @ a, coef, float(sm.col_means @ coef))


def loess(x, y, span=0.75):
    """Local linear regression with tricube weights.

    Each point is fitted from its ``floor(span * n)`` nearest neighbours in
    ``x``; a neighbourhood with no spread in ``x`` falls back to the local mean.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(x)
    if y.shape != x.shape:
        raise InvalidArgument("x and y must have equal length")
    if not 0 < span <= 1:
        raise InvalidArgument(f"span must be in (0, 1], got {span}")
    if n < 2:
        raise InvalidArgument("loess needs at least 2 points")
    q = min(n, max(2, int(np.floor(span * n + 1e-9))))
    dist = np.abs(x[:, None] - x[None, :])
    h = np.partition(dist, q - 1, axis=1)[:, q - 1]
    out = np.empty(n)
    for i in range(n):
        if h[i] > 0:
            w = np.clip(1.0 - (dist[i] / h[i]) ** 3, 0.0, None) ** 3
        else:
            w = (dist[i] == 0).astype(float)
        sw = w.sum()
        xm = w @ x / sw
        ym = w @ y / sw
        sxx = w @ (x - xm) ** 2
        if sxx <= 1e-14 * max(1.0, xm * xm) * sw:
            out[i] = ym
        else:
            slope = w @ ((x - xm) * (y - ym)) / sxx
            out[i] = ym + slope * (x[i] - xm)
    return out

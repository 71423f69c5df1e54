"""Correlation screening, Lasso, SPAM backfitting and BIC path selection."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._kernels import cd_sweep, spam_cycle
from .errors import InvalidArgument

N_LAMBDA = 50
LAMBDA_RATIO = 1e-3


@dataclass(frozen=True, eq=False)
class ScreenResult:
    kept: np.ndarray
    correlations: np.ndarray


def _values(X):
    return np.asarray(getattr(X, "values", X), dtype=float)


def marginal_correlations(X, y):
    """Absolute Pearson correlation of every column with ``y``; 0 for constant columns."""
    X = _values(X)
    y = np.asarray(y, dtype=float)
    yc = y - y.mean()
    ynorm = np.sqrt(yc @ yc)
    if ynorm == 0:
        raise InvalidArgument("response is constant")
    Xc = X - X.mean(axis=0)
    xnorm = np.sqrt(np.einsum("ij,ij->j", Xc, Xc))
    cov = yc @ Xc
    corr = np.zeros(X.shape[1])
    ok = xnorm > 1e-12 * np.maximum(1.0, np.abs(X).max(axis=0)) * np.sqrt(len(y))
    corr[ok] = np.abs(cov[ok]) / (xnorm[ok] * ynorm)
    return np.minimum(corr, 1.0)


def screen_by_correlation(X, y, k=500):
    """Keep the ``k`` columns most correlated with ``y`` (ties to the lower index)."""
    if k < 1:
        raise InvalidArgument(f"k must be >= 1, got {k}")
    corr = marginal_correlations(X, y)
    order = np.argsort(-corr, kind="stable")[:k]
    return ScreenResult(order, corr[order])


def soft_threshold(z, lam):
    return np.sign(z) * np.maximum(np.abs(z) - lam, 0.0)


def group_soft_threshold(s, lam):
    """``s * (1 - lam / ||s||)_+``."""
    s = np.asarray(s, dtype=float)
    norm = np.sqrt(s @ s)
    if norm <= lam or norm == 0:
        return np.zeros_like(s)
    return s * (1.0 - lam / norm)


# --------------------------------------------------------------------- Lasso

@dataclass(frozen=True, eq=False)
class LassoFit:
    intercept: float
    coefficients: np.ndarray
    lam: float
    rss: float
    kkt: float
    sweeps: int

    @property
    def active_count(self):
        return int(np.count_nonzero(self.coefficients))

    @property
    def active_set(self):
        return np.flatnonzero(self.coefficients)

    @property
    def df(self):
        return 1 + self.active_count

    def objective(self):
        return 0.5 * self.rss + self.lam * float(np.abs(self.coefficients).sum())


def lasso_objective(X, y, intercept, beta, lam):
    r = np.asarray(y, float) - intercept - _values(X) @ beta
    return 0.5 * float(r @ r) + lam * float(np.abs(beta).sum())


def kkt_residual(Xc, r, beta, lam):
    """Largest violation of the Lasso optimality conditions."""
    g = Xc.T @ r
    active = beta != 0
    viol = np.where(active, np.abs(g - lam * np.sign(beta)), np.maximum(np.abs(g) - lam, 0.0))
    return float(viol.max()) if len(viol) else 0.0


def lasso_cd(X, y, lam, beta_init=None, tol=1e-7, max_sweeps=100_000):
    """Minimize ``0.5 * ||y - b0 - X beta||^2 + lam * ||beta||_1``.

    Cyclic coordinate descent in column order with an active-set inner loop;
    stops once the KKT residual is at most ``tol``. Columns are centered
    internally and the intercept is recovered from the means.
    """
    X = _values(X)
    y = np.asarray(y, dtype=float)
    if lam < 0:
        raise InvalidArgument("lambda must be >= 0")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise InvalidArgument("non-finite inputs")
    n, p = X.shape
    xm = X.mean(axis=0)
    Xc = np.asfortranarray(X - xm)
    ym = y.mean()
    col_sq = np.einsum("ij,ij->j", Xc, Xc)
    beta = np.zeros(p) if beta_init is None else np.array(beta_init, dtype=float)
    beta[col_sq == 0] = 0.0
    r = (y - ym) - Xc @ beta
    all_idx = np.arange(p)
    sweeps = 0
    kkt = np.inf
    while sweeps < max_sweeps:
        cd_sweep(Xc, col_sq, beta, r, float(lam), all_idx)
        sweeps += 1
        active = np.flatnonzero(beta)
        while sweeps < max_sweeps and len(active):
            cd_sweep(Xc, col_sq, beta, r, float(lam), active)
            sweeps += 1
            new_active = np.flatnonzero(beta)
            if len(new_active) != len(active):
                active = new_active
                continue
            if kkt_residual(Xc[:, active], r, beta[active], lam) <= 0.5 * tol:
                break
        # refresh r to keep round-off from accumulating over long runs
        r = (y - ym) - Xc @ beta
        kkt = kkt_residual(Xc, r, beta, lam)
        if kkt <= tol:
            break
    intercept = float(ym - xm @ beta)
    return LassoFit(intercept, beta, float(lam), float(r @ r), kkt, sweeps)


# ---------------------------------------------------------------------- SPAM

@dataclass(frozen=True, eq=False)
class SpamFit:
    """Backfitted sparse additive model.

    ``coords[j]`` are the coordinates of ``f_j`` in the orthonormal basis of
    smoother ``j``; ``coef[j]`` the matching spline basis coefficients used
    for out-of-sample evaluation. Rows of inactive functions are zero.
    """

    intercept: float
    coef: np.ndarray
    coords: np.ndarray = field(repr=False)
    norms: np.ndarray = field(repr=False)
    lam: float = 0.0
    rss: float = 0.0
    fitted: np.ndarray = field(default=None, repr=False)
    traces: np.ndarray = field(default=None, repr=False)
    cycles: int = 0
    converged: bool = True
    objective_history: tuple = field(default=(), repr=False)

    @property
    def active_set(self):
        return np.flatnonzero(self.norms > 0)

    @property
    def active_count(self):
        return len(self.active_set)

    @property
    def df(self):
        return 1.0 + float(self.traces[self.active_set].sum())

    @property
    def objective(self):
        """``rss + lam * sum_j ||f_j||``."""
        return self.rss + self.lam * float(self.norms.sum())


class SmootherStack:
    """All smoothers of a design packed into padded arrays."""

    def __init__(self, smoothers):
        self.smoothers = list(smoothers)
        if not self.smoothers:
            raise InvalidArgument("no smoothers given")
        n = self.smoothers[0].n
        if any(sm.n != n for sm in self.smoothers):
            raise InvalidArgument("smoothers were built on different sample sizes")
        p = len(self.smoothers)
        self.n, self.p = n, p
        self.dims = np.array([len(sm.shrink) for sm in self.smoothers], dtype=np.int64)
        self.kmax = int(self.dims.max())
        self.eig_t = np.zeros((p, self.kmax, n))
        self.shrink = np.zeros((p, self.kmax))
        for j, sm in enumerate(self.smoothers):
            K = self.dims[j]
            self.eig_t[j, :K] = sm.eigvecs.T
            self.shrink[j, :K] = sm.shrink
        self.traces = np.array([sm.hat_trace for sm in self.smoothers])

    def __len__(self):
        return self.p

    def __getitem__(self, j):
        return self.smoothers[j]

    def smoothed_norms(self, r):
        """``||S_j r||`` for every smoother."""
        C = np.einsum("jki,i->jk", self.eig_t, r) * self.shrink
        return np.sqrt(np.einsum("jk,jk->j", C, C))

    def values(self, j, coords):
        K = self.dims[j]
        return coords[:K] @ self.eig_t[j, :K]


def _stack(smoothers):
    return smoothers if isinstance(smoothers, SmootherStack) else SmootherStack(smoothers)


def spam_backfit(smoothers, y, lam, max_cycles=500, tol=1e-8, init=None):
    """SPAM backfitting with soft-thresholding.

    ``beta0`` is the mean of ``y``. Each cycle visits every function in index
    order: form the partial residual, smooth it (centered) and shrink the
    result by ``(1 - lam/||s||)_+``. Stops when the relative RSS change over
    a full cycle is below ``tol``; hitting ``max_cycles`` returns a fit with
    ``converged=False``. ``init`` warm-starts from an earlier fit.
    """
    st = _stack(smoothers)
    y = np.asarray(y, dtype=float)
    if y.shape != (st.n,):
        raise InvalidArgument(f"response length {y.shape} does not match smoothers (n={st.n})")
    if lam < 0:
        raise InvalidArgument("lambda must be >= 0")
    if not np.all(np.isfinite(y)):
        raise InvalidArgument("non-finite response")
    intercept = float(y.mean())
    coords = np.zeros((st.p, st.kmax))
    norms = np.zeros(st.p)
    resid = y - intercept
    if init is not None:
        coords[:] = init.coords
        norms[:] = init.norms
        for j in np.flatnonzero(norms):
            resid -= st.values(j, coords[j])

    rss = float(resid @ resid)
    history = [rss + lam * norms.sum()]
    converged = False
    cycles = 0
    while cycles < max_cycles:
        rss_prev = rss
        spam_cycle(st.eig_t, st.shrink, st.dims, coords, norms, resid, float(lam))
        cycles += 1
        rss = float(resid @ resid)
        history.append(rss + lam * norms.sum())
        if abs(rss_prev - rss) <= tol * max(rss_prev, np.finfo(float).tiny):
            converged = True
            break
    # rebuild fitted values from the functions so rss carries no drift
    fitted = np.full(st.n, intercept)
    coef = np.zeros_like(coords)
    for j in np.flatnonzero(norms):
        K = st.dims[j]
        fitted += st.values(j, coords[j])
        coef[j, :K] = st.smoothers[j].to_coef @ coords[j, :K]
    resid = y - fitted
    return SpamFit(intercept, coef, coords, norms, float(lam), float(resid @ resid), fitted,
                   st.traces, cycles, converged, tuple(history))


def spam_function_values(fit, smoothers, j):
    """Fitted values ``f_j`` of function ``j`` on the training samples."""
    sm = smoothers[j]
    K = len(sm.shrink)
    return sm.eigvecs @ fit.coords[j, :K]


# ------------------------------------------------------------- lambda grids

def lasso_lambda_max(X, y):
    X = _values(X)
    y = np.asarray(y, dtype=float)
    Xc = X - X.mean(axis=0)
    return float(np.abs(Xc.T @ (y - y.mean())).max())


def spam_lambda_max(smoothers, y):
    st = _stack(smoothers)
    y = np.asarray(y, dtype=float)
    return float(st.smoothed_norms(y - y.mean()).max())


def make_lambda_grid(design, y, n_lambda=N_LAMBDA, ratio=LAMBDA_RATIO):
    """Geometric grid from lambda_max down to ``ratio * lambda_max``.

    ``design`` is a feature array (Lasso) or a sequence of smoothers (SPAM).
    """
    if isinstance(design, SmootherStack) or (
            isinstance(design, (list, tuple)) and design and hasattr(design[0], "eigvecs")):
        lam_max = spam_lambda_max(design, y)
    else:
        lam_max = lasso_lambda_max(design, y)
    if lam_max == 0:
        return np.zeros(1)
    return lam_max * np.geomspace(1.0, ratio, n_lambda)


# ------------------------------------------------------------------- paths

@dataclass(eq=False)
class ModelPath:
    kind: str
    lambdas: np.ndarray
    fits: list
    n: int
    bic: np.ndarray = None
    selected: int = 0

    @property
    def rss(self):
        return np.array([f.rss for f in self.fits])

    @property
    def df(self):
        return np.array([f.df for f in self.fits], dtype=float)

    def rows(self):
        """(lambda, rss, df, bic) tuples for the diagnostic CSV."""
        return [(float(l), float(f.rss), float(f.df), float(b))
                for l, f, b in zip(self.lambdas, self.fits, self.bic)]


def bic_value(rss, df, n):
    if rss <= 0:
        return -np.inf
    return n * np.log(rss / n) + df * np.log(n)


def select_bic(path, n=None):
    """BIC = n log(rss/n) + df log n; returns the minimizing fit.

    df counts the intercept. Ties go to the smaller lambda.
    """
    if not path.fits:
        raise InvalidArgument("empty path")
    n = path.n if n is None else n
    bic = np.array([bic_value(f.rss, f.df, n) for f in path.fits])
    rev = len(bic) - 1 - np.argmin(bic[::-1])
    path.bic = bic
    path.selected = int(rev)
    return path.fits[path.selected]


def _stop_early(fits, n, max_df, patience):
    """Stop once df is too large or BIC has not improved for ``patience`` steps."""
    if max_df is not None and fits[-1].df > max_df:
        return True
    if patience is None or len(fits) <= patience:
        return False
    bic = [bic_value(f.rss, f.df, n) for f in fits]
    return int(np.argmin(bic)) < len(bic) - patience


def lasso_path(X, y, lambdas=None, tol=1e-7, max_df=None, patience=None):
    """Warm-started Lasso fits along a descending grid.

    With ``max_df`` or ``patience`` set, the path is truncated once a fit's
    df exceeds ``max_df`` or BIC has gone ``patience`` grid points without a
    new minimum.
    """
    X = _values(X)
    y = np.asarray(y, dtype=float)
    if lambdas is None:
        lambdas = make_lambda_grid(X, y)
    fits, beta = [], None
    for lam in lambdas:
        fit = lasso_cd(X, y, lam, beta_init=beta, tol=tol)
        fits.append(fit)
        beta = fit.coefficients
        if _stop_early(fits, len(y), max_df, patience):
            break
    path = ModelPath("lasso", np.asarray(lambdas[: len(fits)], float), fits, len(y))
    select_bic(path)
    return path


def spam_path(smoothers, y, lambdas=None, max_cycles=500, tol=1e-8, max_df=None, patience=None):
    """Warm-started SPAM fits along a descending grid (same truncation rules)."""
    st = _stack(smoothers)
    y = np.asarray(y, dtype=float)
    if lambdas is None:
        lambdas = make_lambda_grid(st, y)
    fits, prev = [], None
    for lam in lambdas:
        fit = spam_backfit(st, y, lam, max_cycles=max_cycles, tol=tol, init=prev)
        fits.append(fit)
        prev = fit
        if _stop_early(fits, len(y), max_df, patience):
            break
    path = ModelPath("spam", np.asarray(lambdas[: len(fits)], float), fits, len(y))
    select_bic(path)
    return path

"""Per-voxel encoding models: fitting, prediction, diagnostics and synthetic voxels."""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import sparse_fit
from .errors import InvalidArgument
from .gabor import FeatureMatrix, apply_transform
from .smoothing import build_smoother, loess, smoother_basis

KINDS = ("sqrtX", "log1psqrtX", "vspam")
KIND_TRANSFORM = {"sqrtX": "sqrt", "log1psqrtX": "log1psqrt", "vspam": "log1psqrt"}
FAMILIES = ("linear", "saturating", "bump")
MIN_SAMPLES = 50


@dataclass
class FitConfig:
    """Knobs of the per-voxel pipeline.

    ``patience`` truncates a path once BIC has gone that many grid points
    without a new minimum; ``None`` fits the whole grid.
    """

    k: int = 500
    target_df: float = 4.0
    n_lambda: int = sparse_fit.N_LAMBDA
    lambda_ratio: float = sparse_fit.LAMBDA_RATIO
    max_cycles: int = 500
    spam_tol: float = 1e-8
    lasso_tol: float = 1e-7
    patience: int | None = 10
    max_df: float | None = None

    @classmethod
    def from_dict(cls, d):
        known = cls.__dataclass_fields__
        bad = set(d) - set(known)
        if bad:
            raise InvalidArgument(f"unknown fit options: {sorted(bad)}")
        return cls(**d)


@dataclass(eq=False)
class VoxelModel:
    """A fitted encoding model for one voxel.

    ``terms`` holds the fitted pieces: for the linear kinds a single
    ``{"coefficients": [...]}`` over the screened columns; for vspam one dict
    per active screened column with its knots and spline coefficients.
    """

    kind: str
    transform: str
    bank_hash: str
    screened: np.ndarray
    center: np.ndarray
    scale: np.ndarray
    intercept: float
    terms: dict
    lam: float
    sigma2_hat: float
    train_r2: float
    df: float
    n_train: int
    flags: dict = field(default_factory=dict)
    fitted: np.ndarray | None = field(default=None, repr=False)
    path: sparse_fit.ModelPath | None = field(default=None, repr=False)

    @property
    def active_features(self):
        """Original feature indices with a nonzero term."""
        if self.kind == "vspam":
            return np.array([self.screened[int(j)] for j in self.terms["functions"]], dtype=int)
        coef = np.asarray(self.terms["coefficients"])
        return self.screened[np.flatnonzero(coef)]

    def to_dict(self):
        return {
            "kind": self.kind,
            "transform": self.transform,
            "bank_hash": self.bank_hash,
            "screened": [int(i) for i in self.screened],
            "standardization": {"center": [float(c) for c in self.center],
                                "scale": [float(s) for s in self.scale]},
            "intercept": float(self.intercept),
            "terms": self.terms,
            "lambda": float(self.lam),
            "sigma2_hat": float(self.sigma2_hat),
            "train_r2": float(self.train_r2),
            "df": float(self.df),
            "n_train": int(self.n_train),
            "flags": dict(self.flags),
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        if d.get("kind") not in KINDS:
            raise InvalidArgument(f"unknown model kind {d.get('kind')!r}")
        std = d["standardization"]
        return cls(kind=d["kind"], transform=d["transform"], bank_hash=d["bank_hash"],
                   screened=np.asarray(d["screened"], dtype=int),
                   center=np.asarray(std["center"], dtype=float),
                   scale=np.asarray(std["scale"], dtype=float),
                   intercept=float(d["intercept"]), terms=d["terms"], lam=float(d["lambda"]),
                   sigma2_hat=float(d["sigma2_hat"]), train_r2=float(d["train_r2"]),
                   df=float(d["df"]), n_train=int(d["n_train"]), flags=dict(d.get("flags", {})))

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(fh.read())


def _check_response(y, n):
    y = np.asarray(y, dtype=float)
    if y.shape != (n,):
        raise InvalidArgument(f"response shape {y.shape} does not match {n} feature rows")
    if not np.all(np.isfinite(y)):
        raise InvalidArgument("response has non-finite values")
    if np.ptp(y) == 0:
        raise InvalidArgument("response is constant")
    return y


def _r2_from_rss(rss, y):
    tss = float(np.sum((y - y.mean()) ** 2))
    return float(np.clip(1.0 - rss / tss, 0.0, 1.0))


def _sigma2(rss, n, df):
    return float(rss / max(n - df, 1.0))


def _screen(Z, y, k):
    if Z.shape[1] <= k:
        return np.arange(Z.shape[1])
    return sparse_fit.screen_by_correlation(Z, y, k).kept


def fit_voxel(F_raw, y, kind="vspam", config=None):
    """Transform, screen, fit a regularization path and pick the BIC model.

    Linear kinds standardize the screened columns to mean 0 and unit sample
    sd before the Lasso; vspam builds one spline smoother per screened column
    of ``log(1 + sqrt(X))``.
    """
    if kind not in KINDS:
        raise InvalidArgument(f"unknown model kind {kind!r}")
    if not isinstance(F_raw, FeatureMatrix):
        F_raw = FeatureMatrix(np.asarray(F_raw, dtype=float))
    if F_raw.transform != "raw":
        raise InvalidArgument("fit_voxel expects raw features")
    cfg = config if isinstance(config, FitConfig) else FitConfig.from_dict(config or {})
    n = F_raw.n
    if n < MIN_SAMPLES:
        raise InvalidArgument(f"need at least {MIN_SAMPLES} samples, got {n}")
    y = _check_response(y, n)

    transform = KIND_TRANSFORM[kind]
    Z = apply_transform(F_raw.values, transform)
    kept = _screen(Z, y, cfg.k)
    Zs = Z[:, kept]
    flags = {}

    if kind == "vspam":
        smoothers = [build_smoother(Zs[:, j], cfg.target_df) for j in range(len(kept))]
        stack = sparse_fit.SmootherStack(smoothers)
        lambdas = sparse_fit.make_lambda_grid(stack, y, cfg.n_lambda, cfg.lambda_ratio)
        path = sparse_fit.spam_path(stack, y, lambdas, max_cycles=cfg.max_cycles, tol=cfg.spam_tol,
                                    max_df=cfg.max_df, patience=cfg.patience)
        fit = path.fits[path.selected]
        functions = {}
        for j in fit.active_set:
            sm = smoothers[j]
            K = len(sm.shrink)
            coef = fit.coef[j, :K]
            functions[str(int(j))] = {
                "knots": [float(v) for v in sm.knots],
                "linear_fallback": bool(sm.linear_fallback),
                "penalty": float(sm.penalty),
                "coef": [float(v) for v in coef],
                "offset": float(sm.col_means @ coef),
            }
        terms = {"functions": functions}
        center, scale = np.zeros(len(kept)), np.ones(len(kept))
        intercept = fit.intercept
        fitted = fit.fitted
        flags["converged"] = bool(fit.converged)
        flags["fallback_smoothers"] = int(sum(sm.linear_fallback for sm in smoothers))
    else:
        center = Zs.mean(axis=0)
        scale = Zs.std(axis=0, ddof=1)
        scale[scale <= 1e-12 * np.maximum(1.0, np.abs(center))] = 1.0
        Xs = (Zs - center) / scale
        lambdas = sparse_fit.make_lambda_grid(Xs, y, cfg.n_lambda, cfg.lambda_ratio)
        path = sparse_fit.lasso_path(Xs, y, lambdas, tol=cfg.lasso_tol, max_df=cfg.max_df,
                                     patience=cfg.patience)
        fit = path.fits[path.selected]
        terms = {"coefficients": [float(b) for b in fit.coefficients]}
        intercept = fit.intercept
        fitted = intercept + Xs @ fit.coefficients
        flags["converged"] = True

    flags["path_length"] = len(path.fits)
    flags["empty"] = fit.active_count == 0
    rss = float(np.sum((y - fitted) ** 2))
    return VoxelModel(kind=kind, transform=transform, bank_hash=F_raw.bank_hash, screened=kept,
                      center=center, scale=scale, intercept=float(intercept), terms=terms,
                      lam=float(fit.lam), sigma2_hat=_sigma2(rss, n, fit.df),
                      train_r2=_r2_from_rss(rss, y), df=float(fit.df), n_train=n, flags=flags,
                      fitted=fitted, path=path)


def predict(model, F_raw):
    """Predicted mean response for every row of ``F_raw``."""
    if isinstance(F_raw, FeatureMatrix):
        if F_raw.transform != "raw":
            raise InvalidArgument("predict expects raw features")
        if model.bank_hash and F_raw.bank_hash and F_raw.bank_hash != model.bank_hash:
            raise InvalidArgument(
                f"feature bank {F_raw.bank_hash} does not match model bank {model.bank_hash}")
        values = F_raw.values
    else:
        values = np.atleast_2d(np.asarray(F_raw, dtype=float))
    if len(model.screened) and values.shape[1] <= model.screened.max():
        raise InvalidArgument(f"feature matrix has {values.shape[1]} columns, model needs "
                              f"index {model.screened.max()}")
    out = np.full(values.shape[0], model.intercept)
    if model.kind == "vspam":
        for j, term in model.terms["functions"].items():
            col = model.screened[int(j)]
            x = apply_transform(values[:, col], model.transform)
            B = smoother_basis(term["knots"], x, term["linear_fallback"])
            out += B @ np.asarray(term["coef"]) - term["offset"]
        return out
    coef = np.asarray(model.terms["coefficients"])
    nz = np.flatnonzero(coef)
    if len(nz):
        Z = apply_transform(values[:, model.screened[nz]], model.transform)
        out += ((Z - model.center[nz]) / model.scale[nz]) @ coef[nz]
    return out


def predictive_r2(pred, actual):
    """Squared Pearson correlation; 0 when either vector is constant."""
    pred = np.asarray(pred, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if pred.shape != actual.shape or pred.ndim != 1:
        raise InvalidArgument(f"shape mismatch: {pred.shape} vs {actual.shape}")
    if len(pred) < 3:
        raise InvalidArgument("need at least 3 values")
    pc = pred - pred.mean()
    ac = actual - actual.mean()
    denom = (pc @ pc) * (ac @ ac)
    if denom <= 0:
        return 0.0
    return float(min((pc @ ac) ** 2 / denom, 1.0))


@dataclass(frozen=True, eq=False)
class ResidualDiagnostic:
    fitted: np.ndarray
    residual: np.ndarray
    curve: np.ndarray
    standardized: np.ndarray | None
    standardization_skipped: bool

    @property
    def curve_range(self):
        return float(np.ptp(self.curve))


def residual_diagnostic(model, F_raw, y, span=0.75):
    """Residuals against fitted values with a LOESS trend of the residuals."""
    y = np.asarray(y, dtype=float)
    fitted = predict(model, F_raw)
    if y.shape != fitted.shape:
        raise InvalidArgument("response length does not match features")
    residual = y - fitted
    sd = fitted.std()
    skipped = not sd > 1e-12 * max(1.0, abs(fitted.mean()))
    standardized = None if skipped else (fitted - fitted.mean()) / sd
    curve = loess(fitted, residual, span)
    return ResidualDiagnostic(fitted, residual, curve, standardized, skipped)


# ----------------------------------------------------------- synthetic voxels

@dataclass
class SyntheticVoxelSpec:
    """Ground truth ``y = intercept + sum_j f_j(log(1 + sqrt(X_j))) + noise``.

    ``params[i]`` are the shape parameters of family ``families[i]``:
    ``b`` for saturating ``a tanh(x / b)``, ``(c, w)`` for bump
    ``a exp(-(x - c)^2 / (2 w^2))``, unused for linear ``a x``.
    """

    active: list
    families: list
    amplitudes: list
    noise_sd: float = 0.0
    seed: int = 0
    params: list | None = None
    intercept: float = 0.0

    def __post_init__(self):
        if len(self.active) == 0:
            raise InvalidArgument("active set must be nonempty")
        if not len(self.active) == len(self.families) == len(self.amplitudes):
            raise InvalidArgument("active, families and amplitudes must have equal length")
        if self.noise_sd < 0:
            raise InvalidArgument("noise_sd must be >= 0")
        for fam in self.families:
            if fam not in FAMILIES:
                raise InvalidArgument(f"unknown function family {fam!r}")
        if self.params is None:
            self.params = [() for _ in self.active]

    def to_dict(self):
        d = asdict(self)
        d["active"] = [int(j) for j in self.active]
        d["params"] = [list(map(float, p)) for p in self.params]
        return d


def true_function(family, x, amplitude, params=()):
    x = np.asarray(x, dtype=float)
    if family == "linear":
        return amplitude * x
    if family == "saturating":
        (b,) = params
        return amplitude * np.tanh(x / b)
    if family == "bump":
        c, w = params
        return amplitude * np.exp(-((x - c) ** 2) / (2 * w * w))
    raise InvalidArgument(f"unknown function family {family!r}")


def noiseless_response(spec, F_raw):
    values = getattr(F_raw, "values", F_raw)
    values = np.asarray(values, dtype=float)
    p = values.shape[1]
    out = np.full(values.shape[0], float(spec.intercept))
    for j, fam, a, prm in zip(spec.active, spec.families, spec.amplitudes, spec.params):
        if not 0 <= j < p:
            raise InvalidArgument(f"active index {j} outside 0..{p - 1}")
        out += true_function(fam, apply_transform(values[:, j], "log1psqrt"), a, prm)
    return out


def generate_population(specs, F_raw, stream=0):
    """Response matrix, one column per voxel spec.

    Noise for voxel ``v`` is seeded by ``(specs[v].seed, stream)``; use a
    different ``stream`` for each stimulus set so noise draws never repeat.
    """
    values = np.asarray(getattr(F_raw, "values", F_raw), dtype=float)
    Y = np.empty((values.shape[0], len(specs)))
    for v, spec in enumerate(specs):
        rng = np.random.default_rng([spec.seed, stream])
        Y[:, v] = noiseless_response(spec, values) + spec.noise_sd * rng.standard_normal(values.shape[0])
    return Y


def random_specs(F_raw, n_voxels, n_active=1, family="saturating", target_r2=0.5,
                 candidates=None, seed=0, saturation_quantile=50.0):
    """Random voxel specs with noise set so the true model explains ``target_r2``.

    Saturating curves put ``b`` at the ``saturation_quantile`` percentile of
    the transformed feature; bumps sit at the median with width equal to the
    feature sd. With ``target_r2 = 1`` the voxels are noiseless.
    """
    values = np.asarray(getattr(F_raw, "values", F_raw), dtype=float)
    rng = np.random.default_rng(seed)
    pool = np.arange(values.shape[1]) if candidates is None else np.asarray(candidates)
    specs = []
    for v in range(n_voxels):
        active = rng.choice(pool, size=n_active, replace=False)
        amps = rng.uniform(0.5, 1.5, size=n_active)
        params = []
        for j in active:
            x = apply_transform(values[:, j], "log1psqrt")
            if family == "saturating":
                params.append((float(max(np.percentile(x, saturation_quantile), 1e-12)),))
            elif family == "bump":
                params.append((float(np.median(x)), float(max(x.std(), 1e-12))))
            else:
                params.append(())
        spec = SyntheticVoxelSpec([int(j) for j in active], [family] * n_active,
                                  [float(a) for a in amps], 0.0, seed=int(rng.integers(2**31)),
                                  params=params)
        signal_sd = noiseless_response(spec, values).std()
        if target_r2 < 1:
            spec.noise_sd = float(signal_sd * np.sqrt((1 - target_r2) / target_r2))
        specs.append(spec)
    return specs


# ------------------------------------------------------------------- report

@dataclass(eq=False)
class EncodingReport:
    """Per-voxel train/predictive R^2 by model kind plus pairwise comparisons."""

    kinds: tuple
    train_r2: dict
    pred_r2: dict
    df: dict
    curve_range: dict = field(default_factory=dict)

    @property
    def n_voxels(self):
        return len(next(iter(self.pred_r2.values())))

    def medians(self, threshold=None):
        """Median predictive R^2 per kind, optionally over voxels where all kinds exceed ``threshold``."""
        mask = self._mask(self.kinds, threshold)
        return {k: float(np.median(np.asarray(self.pred_r2[k])[mask])) for k in self.kinds}

    def _mask(self, kinds, threshold):
        mask = np.ones(self.n_voxels, dtype=bool)
        if threshold is not None:
            for k in kinds:
                mask &= np.asarray(self.pred_r2[k]) > threshold
        return mask

    def improvement(self, better, base, threshold=None):
        """Median difference and median ratio of predictive R^2 (``better`` over ``base``)."""
        mask = self._mask((better, base), threshold)
        a = np.asarray(self.pred_r2[better])[mask]
        b = np.asarray(self.pred_r2[base])[mask]
        if len(a) == 0:
            return {"difference": float("nan"), "ratio": float("nan"), "count": 0}
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(b > 0, a / b, np.nan)
        return {"difference": float(np.median(a - b)),
                "ratio": float(np.nanmedian(ratio)) if np.any(b > 0) else float("nan"),
                "count": int(mask.sum())}

    def rows(self):
        header = ["voxel"]
        for k in self.kinds:
            header += [f"train_r2_{k}", f"pred_r2_{k}", f"df_{k}"]
            if k in self.curve_range:
                header.append(f"resid_curve_range_{k}")
        pairs = [(a, b) for i, a in enumerate(self.kinds) for b in self.kinds[i + 1:]]
        for a, b in pairs:
            header += [f"diff_{b}_minus_{a}", f"ratio_{b}_over_{a}"]
        out = [header]
        for v in range(self.n_voxels):
            row = [v]
            for k in self.kinds:
                row += [self.train_r2[k][v], self.pred_r2[k][v], self.df[k][v]]
                if k in self.curve_range:
                    row.append(self.curve_range[k][v])
            for a, b in pairs:
                ra, rb = self.pred_r2[a][v], self.pred_r2[b][v]
                row += [rb - ra, rb / ra if ra > 0 else float("nan")]
            out.append(row)
        return out

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            csv.writer(fh).writerows(self.rows())


def build_report(models, F_valid, Y_valid, F_train=None, Y_train=None, span=0.75):
    """Assemble a report from ``models[kind][v]``; residual curves need training data."""
    kinds = tuple(models)
    train, pred, dfs, curves = {}, {}, {}, {}
    for k in kinds:
        train[k] = [m.train_r2 for m in models[k]]
        dfs[k] = [m.df for m in models[k]]
        pred[k] = [predictive_r2(predict(m, F_valid), Y_valid[:, v]) for v, m in enumerate(models[k])]
        if F_train is not None:
            curves[k] = [residual_diagnostic(m, F_train, Y_train[:, v], span).curve_range
                         for v, m in enumerate(models[k])]
    return EncodingReport(kinds, train, pred, dfs, curves)

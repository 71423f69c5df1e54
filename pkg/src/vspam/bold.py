"""BOLD time series: simulation and per-image amplitude extraction.

The series is ``Z = B + N + eps``: ``B`` convolves the image presentation
train, weighted by per-image amplitudes, with a hemodynamic response ``h``;
``N`` is a low-degree polynomial drift; ``eps`` is AR(1) noise. ``h`` lives
in a Fourier basis over a fixed window after onset. Amplitudes and ``h`` are
estimated jointly by alternating least squares.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import legendre
from scipy.stats import gamma

from .errors import InvalidArgument, SingularDesign

HRF_WINDOW = 16.0
N_FOURIER = 9
POLY_DEGREE = 3


@dataclass(frozen=True)
class EventSchedule:
    """Onset times (seconds) of every image, plus scan length and sampling rate."""

    onsets: tuple
    duration: float
    rate: float = 1.0

    def __post_init__(self):
        onsets = tuple(tuple(float(t) for t in times) for times in self.onsets)
        object.__setattr__(self, "onsets", onsets)
        if self.rate <= 0:
            raise InvalidArgument("sample rate must be > 0")
        if self.duration <= 0:
            raise InvalidArgument("duration must be > 0")
        for times in onsets:
            for t in times:
                if not 0 <= t < self.duration:
                    raise InvalidArgument(f"onset {t} outside [0, {self.duration})")

    @property
    def n_images(self):
        return len(self.onsets)

    @property
    def n_samples(self):
        return int(round(self.duration * self.rate))

    def event_matrix(self):
        """``(n_samples, n_images)`` counts of onsets per sample (onsets snap to the grid)."""
        X = np.zeros((self.n_samples, self.n_images))
        for k, times in enumerate(self.onsets):
            for t in times:
                i = min(int(round(t * self.rate)), self.n_samples - 1)
                X[i, k] += 1.0
        return X

    def to_dict(self):
        return {"n_images": self.n_images, "onsets": [list(t) for t in self.onsets],
                "duration": self.duration, "rate": self.rate}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, d):
        if "n_images" in d and d["n_images"] != len(d["onsets"]):
            raise InvalidArgument("n_images does not match the onset lists")
        return cls(d["onsets"], float(d["duration"]), float(d.get("rate", 1.0)))

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def on_off_schedule(n_images, repeats=2, on=1.0, off=3.0, rate=1.0, lead=4.0, tail=HRF_WINDOW, seed=0):
    """Each image shown ``repeats`` times in shuffled order, one every ``on + off`` seconds."""
    if n_images < 1 or repeats < 1:
        raise InvalidArgument("need at least one image and one repeat")
    rng = np.random.default_rng(seed)
    order = np.concatenate([rng.permutation(n_images) for _ in range(repeats)])
    onsets = [[] for _ in range(n_images)]
    for trial, k in enumerate(order):
        onsets[k].append(lead + trial * (on + off))
    duration = lead + len(order) * (on + off) + tail
    return EventSchedule(onsets, duration, rate)


def fourier_basis(window=HRF_WINDOW, n_fourier=N_FOURIER, rate=1.0):
    """``(L, n_fourier)`` orthonormal columns on the ``L = window * rate`` samples after onset.

    Columns are the constant followed by cosine/sine pairs at periods
    ``window``, ``window / 2``, ...
    """
    L = int(round(window * rate))
    if n_fourier < 1:
        raise InvalidArgument("n_fourier must be >= 1")
    if n_fourier > L:
        raise InvalidArgument(f"n_fourier {n_fourier} exceeds the {L} samples in the window")
    t = np.arange(L) / L
    cols = [np.ones(L)]
    k = 1
    while len(cols) < n_fourier:
        cols.append(np.cos(2 * np.pi * k * t))
        if len(cols) < n_fourier:
            cols.append(np.sin(2 * np.pi * k * t))
        k += 1
    Phi = np.column_stack(cols)
    # the harmonics are orthogonal on the grid; QR fixes norms and any
    # Nyquist-frequency degeneracy
    Q, R = np.linalg.qr(Phi)
    return Q * np.sign(np.diag(R))


@dataclass(frozen=True, eq=False)
class HrfSpec:
    window: float = HRF_WINDOW
    n_fourier: int = N_FOURIER
    coefficients: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.window <= 0:
            raise InvalidArgument("window must be > 0")
        c = np.zeros(self.n_fourier) if self.coefficients is None else np.asarray(self.coefficients, float)
        if c.shape != (self.n_fourier,):
            raise InvalidArgument(f"expected {self.n_fourier} coefficients, got {c.shape}")
        if not np.all(np.isfinite(c)):
            raise InvalidArgument("non-finite HRF coefficients")
        object.__setattr__(self, "coefficients", c)

    def sample(self, rate=1.0):
        return fourier_basis(self.window, self.n_fourier, rate) @ self.coefficients

    def to_dict(self):
        return {"window": self.window, "n_fourier": self.n_fourier,
                "coefficients": [float(c) for c in self.coefficients]}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["window"]), int(d["n_fourier"]), np.asarray(d["coefficients"], float))


def canonical_hrf(window=HRF_WINDOW, n_fourier=N_FOURIER, rate=1.0):
    """Double-gamma response (peak near 5 s, undershoot near 15 s) projected on the basis, unit norm."""
    Phi = fourier_basis(window, n_fourier, rate)
    t = np.arange(Phi.shape[0]) / rate
    shape = gamma.pdf(t, 6.0) - gamma.pdf(t, 16.0) / 6.0
    c = Phi.T @ shape
    return HrfSpec(window, n_fourier, c / np.linalg.norm(c))


def nuisance_basis(n, degree=POLY_DEGREE):
    """Legendre polynomials of degree ``0..degree`` in time rescaled to [-1, 1]."""
    u = np.linspace(-1.0, 1.0, n) if n > 1 else np.zeros(1)
    return legendre.legvander(u, degree)


def _convolve_columns(X, h):
    n = X.shape[0]
    return np.column_stack([np.convolve(X[:, k], h)[:n] for k in range(X.shape[1])])


@dataclass(frozen=True, eq=False)
class BoldSeries:
    samples: np.ndarray
    schedule: EventSchedule
    truth: dict = field(default_factory=dict)


def simulate(schedule, amplitudes, hrf, nuisance=None, rho=0.0, noise_sd=0.0, seed=0):
    """Simulated series on the schedule's sample grid.

    ``noise_sd`` is the stationary sd of the AR(1) noise: innovations have sd
    ``noise_sd * sqrt(1 - rho^2)`` and the first sample is drawn from the
    stationary law.
    """
    if not abs(rho) < 1:
        raise InvalidArgument("|rho| must be < 1")
    if noise_sd < 0:
        raise InvalidArgument("noise_sd must be >= 0")
    amplitudes = np.asarray(amplitudes, dtype=float)
    if amplitudes.shape != (schedule.n_images,):
        raise InvalidArgument(f"expected {schedule.n_images} amplitudes")
    n = schedule.n_samples
    h = hrf.sample(schedule.rate)
    signal = np.convolve(schedule.event_matrix() @ amplitudes, h)[:n]
    nuis = np.zeros(POLY_DEGREE + 1) if nuisance is None else np.asarray(nuisance, dtype=float)
    drift = nuisance_basis(n, len(nuis) - 1) @ nuis
    rng = np.random.default_rng(seed)
    eta = rng.standard_normal(n)
    eps = np.empty(n)
    eps[0] = noise_sd * eta[0]
    innov = noise_sd * np.sqrt(1.0 - rho * rho)
    for t in range(1, n):
        eps[t] = rho * eps[t - 1] + innov * eta[t]
    truth = {"amplitudes": amplitudes, "hrf": hrf, "nuisance": nuis, "rho": rho,
             "noise_sd": noise_sd, "signal": signal, "drift": drift}
    return BoldSeries(signal + drift + eps, schedule, truth)


@dataclass(frozen=True, eq=False)
class AmplitudeFit:
    amplitudes: np.ndarray
    hrf: HrfSpec
    nuisance: np.ndarray
    fitted: np.ndarray
    rss_history: tuple
    converged: bool
    iterations: int
    rho_hat: float | None = None

    @property
    def rss(self):
        return self.rss_history[-1]


@dataclass
class EstimateConfig:
    window: float = HRF_WINDOW
    n_fourier: int = N_FOURIER
    poly_degree: int = POLY_DEGREE
    max_iter: int = 100
    tol: float = 1e-8
    prewhiten: bool = False


def _lstsq(D, z, what):
    coef, _, rank, sv = np.linalg.lstsq(D, z, rcond=None)
    if rank < D.shape[1] or sv[-1] <= 1e-10 * sv[0]:
        raise SingularDesign(f"{what} design is rank deficient ({rank} of {D.shape[1]} columns)")
    return coef


def _normalize(c, A, Phi):
    h = Phi @ c
    norm = np.linalg.norm(c)
    if norm == 0:
        return c, A
    sign = 1.0 if h[np.argmax(np.abs(h))] >= 0 else -1.0
    return c * (sign / norm), A * (sign * norm)


def _als(z, X, Phi, P, c, max_iter, tol, whiten):
    n = len(z)
    K = X.shape[1]
    zw = whiten(z)
    Pw = whiten(P)
    # an exact fit leaves rounding noise that never settles relatively
    floor = 1e-24 * float(zw @ zw)
    history = []
    A = np.zeros(K)
    nuis = np.zeros(P.shape[1])
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        # amplitudes and drift given the response shape
        Cw = whiten(_convolve_columns(X, Phi @ c))
        coef = _lstsq(np.column_stack([Cw, Pw]), zw, "amplitude")
        A = coef[:K]
        if np.linalg.norm(Cw @ A) <= 1e-12 * np.linalg.norm(zw):
            # no image-driven signal left: the response shape is not identifiable
            A = np.zeros(K)
            nuis = _lstsq(Pw, zw, "nuisance")
            r = zw - Pw @ nuis
            history.append(float(r @ r))
            converged = True
            break
        # response shape and drift given the amplitudes
        s = X @ A
        G = np.column_stack([np.convolve(s, Phi[:, m])[:n] for m in range(Phi.shape[1])])
        D = np.column_stack([whiten(G), Pw])
        coef = _lstsq(D, zw, "response")
        r = zw - D @ coef
        rss = float(r @ r)
        c, nuis = coef[:Phi.shape[1]], coef[Phi.shape[1]:]
        c, A = _normalize(c, A, Phi)
        history.append(rss)
        if rss <= floor or (len(history) > 1 and abs(history[-2] - rss) <= tol * history[-2]):
            converged = True
            break
    return A, c, nuis, history, converged, it


def estimate(series, schedule=None, config=None, init_hrf=None):
    """Joint least-squares estimate of per-image amplitudes, response shape and drift.

    Alternates exact least-squares solves for (amplitudes, drift) and
    (response coefficients, drift), renormalizing the response to unit norm
    with a nonnegative peak after each round. With ``config.prewhiten`` the
    converged fit is refined once on Cochrane-Orcutt transformed data using
    the lag-1 autocorrelation of its residuals.
    """
    cfg = config or EstimateConfig()
    if isinstance(series, BoldSeries):
        schedule = schedule or series.schedule
        z = series.samples
    else:
        z = np.asarray(series, dtype=float)
    if schedule is None:
        raise InvalidArgument("a schedule is required")
    n = schedule.n_samples
    if z.shape != (n,):
        raise InvalidArgument(f"series length {z.shape} does not match schedule ({n} samples)")
    if n <= schedule.n_images + cfg.n_fourier + 4:
        raise InvalidArgument("too few samples for the number of parameters")
    X = schedule.event_matrix()
    Phi = fourier_basis(cfg.window, cfg.n_fourier, schedule.rate)
    P = nuisance_basis(n, cfg.poly_degree)
    init = init_hrf or canonical_hrf(cfg.window, cfg.n_fourier, schedule.rate)
    c0 = np.asarray(init.coefficients, dtype=float)

    def identity(v):
        return v

    A, c, nuis, hist, conv, it = _als(z, X, Phi, P, c0, cfg.max_iter, cfg.tol, identity)
    rho_hat = None
    if cfg.prewhiten:
        fitted = _convolve_columns(X, Phi @ c) @ A + P @ nuis
        r = z - fitted
        rho_hat = float(np.clip((r[1:] @ r[:-1]) / (r @ r), -0.99, 0.99))

        def whiten(v):
            return v[1:] - rho_hat * v[:-1]

        A, c, nuis, hist2, conv, it2 = _als(z, X, Phi, P, c, cfg.max_iter, cfg.tol, whiten)
        hist, it = hist + hist2, it + it2
    fitted = _convolve_columns(X, Phi @ c) @ A + P @ nuis
    hrf = HrfSpec(cfg.window, cfg.n_fourier, c)
    return AmplitudeFit(A, hrf, nuis, fitted, tuple(hist), conv, it, rho_hat)

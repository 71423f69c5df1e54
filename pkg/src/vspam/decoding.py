"""Image identification from voxel responses.

The decoder picks the candidate image whose predicted responses are closest
to the observed ones in precision-weighted squared error. The average error
over random candidate sets of size ``b`` drawn from a database of ``N``
images has a closed form: if the true image strictly beats ``M`` database
images, a random ``b``-subset contains only beaten images with probability
``C(M, b) / C(N, b)``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.special import gammaln

from .encoding import predict
from .gabor import FeatureMatrix
from .errors import InvalidArgument, InvalidConfig


def select_voxels(models, threshold=None, top_k=None):
    """Indices of voxels with training R^2 above ``threshold``, or the ``top_k`` best.

    Top-k ranks by training R^2 (descending) with ties going to the lower
    voxel index. The result is sorted ascending.
    """
    if (threshold is None) == (top_k is None):
        raise InvalidConfig("give exactly one of threshold and top_k")
    r2 = np.array([m.train_r2 for m in models], dtype=float)
    if top_k is not None:
        if top_k < 1:
            raise InvalidConfig("top_k must be >= 1")
        keep = np.sort(np.argsort(-r2, kind="stable")[: min(top_k, len(r2))])
    else:
        keep = np.flatnonzero(r2 > threshold)
    if len(keep) == 0:
        raise InvalidConfig("voxel selection is empty")
    return keep


@dataclass(eq=False)
class Decoder:
    """Selected voxel models with precision weights ``1 / sigma2_hat``."""

    models: list
    selected: np.ndarray
    weights: np.ndarray = field(init=False)

    def __post_init__(self):
        self.selected = np.asarray(self.selected, dtype=int)
        if len(self.selected) == 0:
            raise InvalidConfig("decoder needs at least one voxel")
        if self.selected.min() < 0 or self.selected.max() >= len(self.models):
            raise InvalidArgument("selected voxel index out of range")
        sigma2 = np.array([self.models[v].sigma2_hat for v in self.selected], dtype=float)
        if not np.all(np.isfinite(sigma2) & (sigma2 > 0)):
            raise InvalidArgument("every selected voxel needs a positive finite sigma2_hat")
        self.weights = 1.0 / sigma2

    def predictions(self, F):
        """``(rows, |selected|)`` matrix of predicted responses."""
        return np.column_stack([predict(self.models[v], F) for v in self.selected])

    def _responses(self, responses):
        r = np.asarray(responses, dtype=float)
        if r.ndim == 1:
            r = r[None, :]
        if r.shape[1] <= self.selected.max():
            raise InvalidArgument(f"responses cover {r.shape[1]} voxels, selection needs "
                                  f"index {self.selected.max()}")
        r = r[:, self.selected]
        if not np.all(np.isfinite(r)):
            raise InvalidArgument("missing response for a selected voxel")
        return r


def _weighted_scores(w, y, mu):
    """Score of one response vector against every row of ``mu``."""
    d = mu - y
    return (d * d) @ w


def score(decoder, responses, s_features):
    """Weighted squared prediction error of one candidate image (lower is better).

    ``responses`` is indexed by voxel over the whole population.
    """
    y = decoder._responses(responses)[0]
    if not isinstance(s_features, FeatureMatrix):
        s_features = np.atleast_2d(np.asarray(s_features, dtype=float))
    mu = decoder.predictions(s_features)
    return float(_weighted_scores(decoder.weights, y, mu)[0])


def decode(decoder, responses, candidates):
    """Index of the best-scoring candidate; the lowest index wins ties."""
    mu = decoder.predictions(candidates)
    if mu.shape[0] == 0:
        raise InvalidArgument("no candidates")
    y = decoder._responses(responses)[0]
    return int(np.argmin(_weighted_scores(decoder.weights, y, mu)))


@dataclass(frozen=True, eq=False)
class IdentificationResult:
    """Beat counts per validation pair and the average error per ``b``."""

    beats: np.ndarray
    N: int
    b_grid: np.ndarray
    error: np.ndarray

    def curve_rows(self):
        return [("b", "average_error")] + [(int(b), float(e)) for b, e in zip(self.b_grid, self.error)]

    def pair_rows(self):
        return [("pair_id", "M", "N")] + [(i, int(m), self.N) for i, m in enumerate(self.beats)]

    def write_csv(self, curve_path, pairs_path=None):
        with open(curve_path, "w", newline="") as fh:
            csv.writer(fh).writerows(self.curve_rows())
        if pairs_path is not None:
            with open(pairs_path, "w", newline="") as fh:
                csv.writer(fh).writerows(self.pair_rows())


def pair_scores(decoder, responses, true_features, database):
    """True-image scores ``(P,)`` and database scores ``(P, N)`` for each pair."""
    Y = decoder._responses(responses)
    mu_true = decoder.predictions(true_features)
    mu_db = decoder.predictions(database)
    if mu_true.shape[0] != Y.shape[0]:
        raise InvalidArgument("need one true feature row per validation response")
    w = decoder.weights
    true = np.array([_weighted_scores(w, Y[i], mu_true[i:i + 1])[0] for i in range(len(Y))])
    db = np.stack([_weighted_scores(w, Y[i], mu_db) for i in range(len(Y))])
    return true, db


def beat_counts(true_scores, db_scores):
    """``M_i = #{s in D : true_i < score_i(s)}``; ties do not count."""
    return np.sum(db_scores > true_scores[:, None], axis=1)


def prob_correct(M, N, b):
    """``C(M, b) / C(N, b)`` elementwise over ``M``, evaluated with log-gamma."""
    M = np.asarray(M, dtype=float)
    out = np.zeros(M.shape)
    ok = M >= b
    lg = (gammaln(M[ok] + 1) - gammaln(M[ok] - b + 1)
          - gammaln(N + 1) + gammaln(N - b + 1))
    out[ok] = np.exp(lg)
    return out


def error_from_beats(M, N, b_grid):
    b_grid = np.asarray(b_grid, dtype=int)
    if np.any(b_grid < 0) or np.any(b_grid > N):
        raise InvalidArgument(f"every b must lie in [0, {N}]")
    return np.array([1.0 - prob_correct(M, N, b).mean() for b in b_grid])


def exact_id_error(decoder, responses, true_features, database, b_grid):
    """Exact average identification error over all candidate subsets of each size ``b``.

    Each validation pair is scored against the whole database once; every
    ``b`` then follows from the beat counts.
    """
    N = len(getattr(database, "values", database))
    b_grid = np.asarray(b_grid, dtype=int)
    if np.any(b_grid > N) or np.any(b_grid < 0):
        raise InvalidArgument(f"every b must lie in [0, {N}]")
    true, db = pair_scores(decoder, responses, true_features, database)
    M = beat_counts(true, db)
    return IdentificationResult(M, N, b_grid, error_from_beats(M, N, b_grid))


@njit(cache=True)
def _mc_errors(true_scores, db_scores, b, draws, seed):
    """Per-pair error frequency over ``draws`` random ``b``-subsets.

    A draw fails when some sampled database image scores no worse than the
    true image (the true image sits last among the candidates, so ties go
    against it). Subsets come from a partial Fisher-Yates shuffle of a
    persistent index array, which stays uniform from any starting
    permutation. A draw stops at its first failing image; for ``b > N / 2``
    the excluded complement is sampled instead and the draw fails unless it
    holds every image that is not beaten.
    """
    np.random.seed(seed)
    P, N = db_scores.shape
    out = np.zeros(P)
    perm = np.arange(N)
    complement = 2 * b > N
    m = N - b if complement else b
    for p in range(P):
        t = true_scores[p]
        unbeaten = 0
        for i in range(N):
            if db_scores[p, i] <= t:
                unbeaten += 1
        fails = 0
        for _ in range(draws):
            if unbeaten == 0:
                continue
            if complement:
                held = 0
                for i in range(m):
                    j = np.random.randint(i, N)
                    perm[i], perm[j] = perm[j], perm[i]
                    if db_scores[p, perm[i]] <= t:
                        held += 1
                if held < unbeaten:
                    fails += 1
            else:
                for i in range(m):
                    j = np.random.randint(i, N)
                    perm[i], perm[j] = perm[j], perm[i]
                    if db_scores[p, perm[i]] <= t:
                        fails += 1
                        break
        out[p] = fails / draws
    return out


def mc_id_error(decoder, responses, true_features, database, b, draws, seed=0):
    """Monte Carlo identification error at one ``b``: (estimate, standard error).

    The standard error treats pairs as fixed and draws as independent
    Bernoulli trials within each pair.
    """
    if draws < 1:
        raise InvalidArgument("draws must be >= 1")
    true, db = pair_scores(decoder, responses, true_features, database)
    return mc_from_scores(true, db, b, draws, seed)


def mc_from_scores(true_scores, db_scores, b, draws, seed=0):
    N = db_scores.shape[1]
    if not 0 <= b <= N:
        raise InvalidArgument(f"b must lie in [0, {N}]")
    if b == 0:
        return 0.0, 0.0
    per_pair = _mc_errors(np.ascontiguousarray(true_scores, dtype=float),
                          np.ascontiguousarray(db_scores, dtype=float), int(b), int(draws),
                          int(seed) % 2**32)
    P = len(per_pair)
    se = np.sqrt(np.sum(per_pair * (1 - per_pair) / draws)) / P
    return float(per_pair.mean()), float(se)


def threshold_sweep(models, responses, true_features, database, b, thresholds=None, top_ks=None):
    """Exact error at one ``b`` for a range of voxel-selection rules.

    Returns rows ``(rule, value, n_voxels, error)``; rules with an empty
    selection are skipped.
    """
    rows = []
    rules = [("threshold", a) for a in (thresholds or [])] + [("top_k", k) for k in (top_ks or [])]
    for rule, value in rules:
        try:
            sel = select_voxels(models, **{rule: value})
        except InvalidConfig:
            continue
        res = exact_id_error(Decoder(models, sel), responses, true_features, database, [b])
        rows.append((rule, value, len(sel), float(res.error[0])))
    return rows

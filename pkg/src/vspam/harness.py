"""End-to-end synthetic workflows shared by the command line and the demos."""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import bold, decoding, encoding, gabor, stimuli, tuning
from .config import RunConfig


def build_bank(cfg: RunConfig):
    return gabor.build_bank(cfg.image_size, cfg.levels, cfg.orientations)


def build_stimuli(cfg: RunConfig):
    """Training, validation and database stimulus sets, each with its own seed stream."""
    sizes = {"train": cfg.n_train, "valid": cfg.n_valid, "database": cfg.n_database}
    return {name: stimuli.sample_stimulus_set(cfg.image_size, n, cfg.stream(name), aperture=cfg.aperture)
            for name, n in sizes.items()}


def featurize(bank, sets):
    return {name: gabor.featurize_set(bank, s) for name, s in sets.items()}


def candidate_features(bank, cfg: RunConfig):
    sl = bank.level_slices()
    return np.concatenate([np.arange(bank.p)[sl[lev]] for lev in cfg.candidate_levels])


def build_population(cfg: RunConfig, bank, F_train):
    return encoding.random_specs(F_train, cfg.n_voxels, cfg.n_active, cfg.family, cfg.target_r2,
                                 candidates=candidate_features(bank, cfg), seed=cfg.stream("population"),
                                 saturation_quantile=cfg.saturation_quantile)


def population_responses(specs, F_train, F_valid):
    """Training and validation responses with independent noise streams."""
    return encoding.generate_population(specs, F_train, 0), encoding.generate_population(specs, F_valid, 1)


_WORKER = {}


def _init_worker(values, bank_hash):
    _WORKER["F"] = gabor.FeatureMatrix(values, "raw", bank_hash)


def _fit_one(args):
    y, kind, options = args
    try:
        return encoding.fit_voxel(_WORKER["F"], y, kind, options), None
    except Exception as exc:  # reported per voxel, never fatal for the batch
        return None, f"{type(exc).__name__}: {exc}"


def fit_population(F_train, Y, kind, options=None, jobs=1):
    """Fit every column of ``Y``; returns ``(models, errors)`` in voxel order.

    With ``jobs > 1`` voxels are spread over worker processes; results are
    identical to the sequential run.
    """
    tasks = [(Y[:, v], kind, options) for v in range(Y.shape[1])]
    if jobs <= 1:
        _init_worker(F_train.values, F_train.bank_hash)
        results = [_fit_one(t) for t in tasks]
    else:
        with ProcessPoolExecutor(jobs, initializer=_init_worker,
                                 initargs=(F_train.values, F_train.bank_hash)) as pool:
            results = list(pool.map(_fit_one, tasks))
    _WORKER.clear()
    return [r[0] for r in results], [r[1] for r in results]


def select(models, cfg: RunConfig):
    if cfg.selection == "top_k":
        return decoding.select_voxels(models, top_k=cfg.top_k)
    return decoding.select_voxels(models, threshold=cfg.threshold)


def identification(models, Y_valid, F_valid, F_db, cfg: RunConfig, mc=True):
    """Exact error curve plus Monte Carlo checks at ``cfg.mc_b``.

    Returns ``(result, mc_rows)`` with rows ``(b, exact, mc, se)``.
    """
    dec = decoding.Decoder(models, select(models, cfg))
    b_grid = sorted(set(cfg.b_grid) | {F_db.n})
    true, db = decoding.pair_scores(dec, Y_valid, F_valid, F_db)
    M = decoding.beat_counts(true, db)
    result = decoding.IdentificationResult(M, F_db.n, np.asarray(b_grid),
                                           decoding.error_from_beats(M, F_db.n, b_grid))
    rows = []
    if mc:
        for i, b in enumerate(sorted(set(cfg.mc_b) | {F_db.n})):
            est, se = decoding.mc_from_scores(true, db, b, cfg.mc_draws, seed=cfg.seed + i)
            exact = decoding.error_from_beats(M, F_db.n, [b])[0]
            rows.append((b, float(exact), est, se))
    return result, rows


def tuning_probes(model, bank, cfg: RunConfig, train_images=None):
    oris = np.arange(cfg.probe_orientations) * np.pi / cfg.probe_orientations
    return {
        "rf": tuning.spatial_rf(model, bank, cfg.rf_grid),
        "orifreq": tuning.ori_freq_tuning(model, bank, cfg.probe_frequencies, oris),
        "contrast": tuning.contrast_tuning(model, bank, cfg.contrast_values,
                                           seed=cfg.stream("probe"), n_noise=cfg.n_noise,
                                           train_images=train_images),
    }


def bold_experiment(cfg: RunConfig):
    """Simulated series with known amplitudes and response shape."""
    seed = cfg.stream("bold")
    rng = np.random.default_rng(seed)
    schedule = bold.on_off_schedule(cfg.bold_images, cfg.bold_repeats, seed=seed)
    amplitudes = rng.normal(1.0, 0.5, cfg.bold_images)
    hrf = bold.canonical_hrf(rate=schedule.rate)
    nuisance = rng.normal(0.0, 0.5, bold.POLY_DEGREE + 1)
    noise_sd = amplitudes.std() / cfg.bold_snr if cfg.bold_snr > 0 else 0.0
    return bold.simulate(schedule, amplitudes, hrf, nuisance, cfg.bold_rho, noise_sd, seed=seed)


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path

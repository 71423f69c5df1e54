"""Fit the three encoding models on a small synthetic population and decode.

A reduced run (32 px images, 600 training images, 16 voxels) so it finishes
in about a minute. Each voxel responds to one Gabor channel through a
saturating nonlinearity, which the linear-in-sqrt model can only approximate.

    python demos/encoding_and_decoding.py
"""
import numpy as np

from vspam import encoding, harness
from vspam.config import RunConfig

cfg = RunConfig(image_size=32, levels=5, n_train=600, n_valid=60, n_database=400, n_voxels=16,
                screen_k=200, top_k=12, b_grid=[1, 10, 100, 400], mc_draws=2000, seed=3)

bank = harness.build_bank(cfg)
feats = harness.featurize(bank, harness.build_stimuli(cfg))
specs = harness.build_population(cfg, bank, feats["train"])
Y_train, Y_valid = harness.population_responses(specs, feats["train"], feats["valid"])
print(f"{bank.p} features, {cfg.n_voxels} voxels, {cfg.n_train} training images")

models = {}
for kind in cfg.kinds:
    models[kind], errors = harness.fit_population(feats["train"], Y_train, kind, cfg.fit_options())
    assert not any(errors)

report = encoding.build_report(models, feats["valid"], Y_valid, feats["train"], Y_train)
print("\nmedian predictive R2 on held-out images")
for kind, r2 in report.medians().items():
    print(f"  {kind:11s} {r2:.3f}")
# residual curvature left over by each model, on the training data
for kind in cfg.kinds:
    print(f"  median LOESS residual range, {kind:11s} {np.median(report.curve_range[kind]):.3f}")

print("\nidentification error (exact, with Monte Carlo checks)")
for kind in ("sqrtX", "vspam"):
    result, rows = harness.identification(models[kind], Y_valid, feats["valid"], feats["database"], cfg)
    curve = ", ".join(f"b={b}: {e:.3f}" for b, e in zip(result.b_grid, result.error))
    print(f"  {kind:6s} {curve}")
    for b, exact, mc, se in rows:
        print(f"         b={b}: exact {exact:.4f}, Monte Carlo {mc:.4f} +- {se:.4f}")

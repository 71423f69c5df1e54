"""Probe a fitted model with synthetic stimuli.

Fits one V-SPAM voxel, then maps its spatial receptive field, its
orientation and frequency preference, and its response to noise images of
increasing RMS contrast. Saturation in the ground truth shows up as a
contrast curve that bends over.

    python demos/tuning_probes.py
"""
import numpy as np

from vspam import harness
from vspam.config import RunConfig
from vspam.encoding import fit_voxel

cfg = RunConfig(image_size=32, levels=5, n_train=600, n_voxels=1, screen_k=200, rf_grid=8,
                probe_frequencies=[1, 2, 4, 8], seed=7)
bank = harness.build_bank(cfg)
sets = harness.build_stimuli(cfg)
feats = harness.featurize(bank, sets)
spec = harness.build_population(cfg, bank, feats["train"])[0]
Y_train, _ = harness.population_responses([spec], feats["train"], feats["valid"])

model = fit_voxel(feats["train"], Y_train[:, 0], "vspam", cfg.fit_options())
print(f"true channel(s) {list(spec.active)}, fitted active features {model.active_features.tolist()}")

probes = harness.tuning_probes(model, bank, cfg, train_images=sets["train"])
print("receptive field peak (row, col):", probes["rf"].peak)

curve = probes["orifreq"]
best = curve.axis[np.argmax(curve.values)]
print(f"preferred frequency {best[0]:g} cycles/image, orientation {np.degrees(best[1]):.1f} deg")

print("contrast response")
for (t,), v in zip(probes["contrast"].axis, probes["contrast"].values):
    print(f"  t={t:4.2f}  {v: .4f}")

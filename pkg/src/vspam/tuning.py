"""Tuning functions of fitted voxel models, read off by probing with synthetic images.

Every probe is featurized through the wavelet bank and passed to
:func:`vspam.encoding.predict`; no training data is involved.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .encoding import predict
from .errors import InvalidArgument
from .gabor import apply_transform, featurize_images
from .stimuli import generate_grating, generate_pink_noise, point_stimulus, rms, scale_contrast

DEFAULT_NOISE_PROBES = 8


@dataclass(frozen=True, eq=False)
class ReceptiveFieldMap:
    """Predicted response to a point stimulus at each of ``G x G`` locations."""

    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray
    kind: str
    metadata: dict = field(default_factory=dict)

    @property
    def peak(self):
        """Pixel location ``(a, b)`` of the largest predicted response."""
        i, j = np.unravel_index(np.argmax(self.values), self.values.shape)
        return int(self.rows[i]), int(self.cols[j])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["a", "b", "value"])
            for i, a in enumerate(self.rows):
                for j, b in enumerate(self.cols):
                    w.writerow([int(a), int(b), float(self.values[i, j])])


@dataclass(frozen=True, eq=False)
class TuningCurve:
    """Predicted responses along a probe axis.

    ``axis`` has one row per probe (one column per probe parameter, named in
    ``names``).
    """

    names: tuple
    axis: np.ndarray
    values: np.ndarray
    kind: str
    metadata: dict = field(default_factory=dict)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            for key in sorted(self.metadata):
                w.writerow([f"# {key}={self.metadata[key]}"])
            w.writerow(list(self.names) + ["value"])
            for params, v in zip(self.axis, self.values):
                w.writerow([float(x) for x in params] + [float(v)])


def extrapolated_fraction(model, F):
    """Share of probe inputs to active spline terms that fall outside the boundary knots."""
    if model.kind != "vspam" or not model.terms["functions"]:
        return 0.0
    values = getattr(F, "values", F)
    outside = total = 0
    for j, term in model.terms["functions"].items():
        x = apply_transform(values[:, model.screened[int(j)]], model.transform)
        lo, hi = term["knots"][0], term["knots"][-1]
        outside += int(np.sum((x < lo) | (x > hi)))
        total += len(x)
    return outside / total


def _probe(model, bank, images):
    F = featurize_images(bank, np.asarray(images))
    return predict(model, F), F


def probe_locations(size, grid_size):
    """Pixel index of each of ``grid_size`` evenly spaced cell centers along one side."""
    return np.floor((np.arange(grid_size) + 0.5) * size / grid_size).astype(int)


def spatial_rf(model, bank, grid_size=16, amplitude=1.0):
    """Map of predicted responses to single-pixel stimuli on a ``G x G`` grid."""
    if grid_size < 2:
        raise InvalidArgument("grid_size must be >= 2")
    size = bank.image_size
    locs = probe_locations(size, grid_size)
    images = [point_stimulus(size, a, b, amplitude) for a in locs for b in locs]
    values, F = _probe(model, bank, images)
    meta = {"amplitude": amplitude, "extrapolated_fraction": extrapolated_fraction(model, F)}
    return ReceptiveFieldMap(locs, locs.copy(), values.reshape(grid_size, grid_size), model.kind, meta)


def ori_freq_tuning(model, bank, frequencies, orientations, phase=0.0):
    """Predicted responses to full-field gratings over a frequency x orientation grid."""
    size = bank.image_size
    freqs = np.asarray(frequencies, dtype=float)
    oris = np.asarray(orientations, dtype=float)
    axis = np.array([(f, o) for f in freqs for o in oris])
    images = [generate_grating(size, f, o, phase) for f, o in axis]
    values, F = _probe(model, bank, images)
    meta = {"phase": phase, "extrapolated_fraction": extrapolated_fraction(model, F)}
    return TuningCurve(("frequency", "orientation"), axis, values, model.kind, meta)


def ori_freq_surface(curve):
    """Reshape an orientation/frequency curve to ``(n_freq, n_ori)``."""
    freqs = np.unique(curve.axis[:, 0])
    return curve.values.reshape(len(freqs), -1)


def contrast_tuning(model, bank, t_values, seed=0, n_noise=DEFAULT_NOISE_PROBES, train_images=None):
    """Mean predicted response to pink noise at each RMS contrast ``t``.

    The same ``n_noise`` noise images (seeded ``(seed, i)``) are used at every
    contrast. If ``train_images`` is given, the deciles of their RMS contrast
    are stored in the metadata for axis annotation.
    """
    t_values = np.asarray(t_values, dtype=float)
    if np.any(t_values < 0):
        raise InvalidArgument("contrast values must be >= 0")
    if n_noise < 1:
        raise InvalidArgument("n_noise must be >= 1")
    size = bank.image_size
    noise = [generate_pink_noise(size, (seed, i)) for i in range(n_noise)]
    images = [scale_contrast(w, t) for t in t_values for w in noise]
    values, F = _probe(model, bank, images)
    meta = {"seed": seed, "n_noise": n_noise, "extrapolated_fraction": extrapolated_fraction(model, F)}
    if train_images is not None:
        contrasts = np.array([rms(im) for im in train_images])
        meta["train_contrast_deciles"] = [float(v) for v in np.percentile(contrasts, np.arange(10, 100, 10))]
    per_probe = values.reshape(len(t_values), n_noise)
    # average as offsets from the first probe so identical predictions stay bit-exact
    curve = per_probe[:, 0] + (per_probe - per_probe[:, :1]).mean(axis=1)
    return TuningCurve(("contrast",), t_values[:, None], curve, model.kind, meta)

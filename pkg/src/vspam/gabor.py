"""Multi-scale Gabor wavelet bank and local contrast-energy features."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidArgument, InvalidState

BASE_FREQUENCY = 1.0  # cycles per image at the coarsest level
SIGMA_DIVISOR = 2.5  # envelope sigma = tile width / SIGMA_DIVISOR
TRANSFORMS = ("raw", "sqrt", "log1psqrt")


@dataclass(frozen=True)
class GaborParams:
    level: int
    orientation: float
    center: tuple
    frequency: float
    sigma_parallel: float
    sigma_orthogonal: float


@dataclass(frozen=True, eq=False)
class GaborBank:
    """Precomputed wavelet grids.

    ``real`` and ``imag`` have shape ``(p, size * size)``; row ``j`` holds the
    flattened, mean-subtracted grid of wavelet ``j``. The complex pair of every
    wavelet has unit L2 norm.
    """

    image_size: int
    levels: int
    orientations: int
    wavelets: tuple
    real: np.ndarray = field(repr=False)
    imag: np.ndarray = field(repr=False)

    @property
    def p(self):
        return len(self.wavelets)

    @property
    def hash(self):
        key = (f"gabor-bank:v1:{self.image_size}:{self.levels}:{self.orientations}:"
               f"{BASE_FREQUENCY!r}:{SIGMA_DIVISOR!r}")
        return hashlib.sha256(key.encode()).hexdigest()[:16]

    def level_slices(self):
        """Map level -> slice of wavelet indices."""
        out, start = {}, 0
        for lev in range(self.levels):
            count = self.orientations * 4**lev
            out[lev] = slice(start, start + count)
            start += count
        return out


def bank_size(levels, orientations):
    return orientations * sum(4**lev for lev in range(levels))


def gabor_grid(size, center, frequency, orientation, sigma_parallel, sigma_orthogonal):
    """Complex Gabor on a ``size`` x ``size`` pixel grid (not normalized)."""
    a = np.arange(size, dtype=float)[:, None] - center[0]
    b = np.arange(size, dtype=float)[None, :] - center[1]
    c, s = np.cos(orientation), np.sin(orientation)
    along = a * c + b * s
    across = -a * s + b * c
    envelope = np.exp(-along**2 / (2 * sigma_parallel**2) - across**2 / (2 * sigma_orthogonal**2))
    return envelope * np.exp(2j * np.pi * frequency * along / size)


def build_bank(image_size, levels=6, orientations=8):
    """Build the wavelet bank.

    Level ``l`` tiles the image with a ``2**l`` x ``2**l`` grid of centers at
    ``(i + 1/2) * size / 2**l``, uses ``2**l`` cycles per image and an isotropic
    envelope with sigma ``size / 2**l / 2.5`` pixels. Orientations are
    ``k * pi / orientations``.
    """
    if levels < 1 or orientations < 1:
        raise InvalidArgument("levels and orientations must be >= 1")
    if image_size < 2 ** (levels - 1):
        raise InvalidArgument(
            f"image size {image_size} too small for a {2 ** (levels - 1)}-wide grid")
    size = int(image_size)
    p = bank_size(levels, orientations)
    real = np.empty((p, size * size))
    imag = np.empty((p, size * size))
    wavelets = []
    j = 0
    for lev in range(levels):
        n_grid = 2**lev
        tile = size / n_grid
        freq = BASE_FREQUENCY * n_grid
        sigma = tile / SIGMA_DIVISOR
        for k in range(orientations):
            theta = k * np.pi / orientations
            for ia in range(n_grid):
                for ib in range(n_grid):
                    center = ((ia + 0.5) * tile, (ib + 0.5) * tile)
                    g = gabor_grid(size, center, freq, theta, sigma, sigma).ravel()
                    re = g.real - g.real.mean()
                    im = g.imag - g.imag.mean()
                    norm = np.sqrt(re @ re + im @ im)
                    real[j] = re / norm
                    imag[j] = im / norm
                    wavelets.append(GaborParams(lev, theta, center, freq, sigma, sigma))
                    j += 1
    real.setflags(write=False)
    imag.setflags(write=False)
    return GaborBank(size, levels, orientations, tuple(wavelets), real, imag)


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """``n`` stimuli by ``p`` features, tagged with transform and bank checksum."""

    values: np.ndarray
    transform: str = "raw"
    bank_hash: str = ""

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise InvalidArgument(f"feature matrix must be 2D, got shape {values.shape}")
        if self.transform not in TRANSFORMS:
            raise InvalidArgument(f"unknown transform {self.transform!r}")
        if not np.all(np.isfinite(values)):
            raise InvalidArgument("feature matrix contains non-finite values")
        object.__setattr__(self, "values", values)

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def p(self):
        return self.values.shape[1]

    def rows(self, idx):
        return replace(self, values=self.values[idx])


def _projections(bank, flat):
    return (flat @ bank.real.T) ** 2 + (flat @ bank.imag.T) ** 2


def contrast_energy(bank, s):
    """Squared real projection plus squared imaginary projection, per wavelet."""
    s = np.asarray(s, dtype=float)
    if s.shape != (bank.image_size, bank.image_size):
        raise InvalidArgument(
            f"image shape {s.shape} does not match bank size {bank.image_size}")
    return _projections(bank, s.ravel())


def featurize_images(bank, images, chunk=512):
    """Raw features of an ``(n, size, size)`` stack."""
    images = np.asarray(images, dtype=float)
    if images.ndim != 3 or images.shape[1:] != (bank.image_size, bank.image_size):
        raise InvalidArgument(
            f"image stack shape {images.shape} does not match bank size {bank.image_size}")
    flat = images.reshape(images.shape[0], -1)
    out = np.empty((flat.shape[0], bank.p))
    for start in range(0, flat.shape[0], chunk):
        out[start:start + chunk] = _projections(bank, flat[start:start + chunk])
    return FeatureMatrix(out, "raw", bank.hash)


def featurize_set(bank, stimuli):
    """Row ``i`` is the contrast energy of image ``i`` of a :class:`StimulusSet`."""
    return featurize_images(bank, stimuli.images)


def apply_transform(values, kind):
    """Elementwise feature transform on a raw array."""
    values = np.asarray(values, dtype=float)
    if kind == "raw":
        return values
    if kind == "sqrt":
        return np.sqrt(values)
    if kind == "log1psqrt":
        return np.log1p(np.sqrt(values))
    raise InvalidArgument(f"unknown transform {kind!r}")


def transform_features(F, kind):
    """Apply ``sqrt`` or ``log1psqrt`` to a raw :class:`FeatureMatrix`."""
    if F.transform != "raw":
        raise InvalidState(f"features already transformed ({F.transform})")
    if kind not in ("sqrt", "log1psqrt"):
        raise InvalidArgument(f"unknown transform {kind!r}")
    return FeatureMatrix(apply_transform(F.values, kind), kind, F.bank_hash)

"""Grayscale image stimuli: pink noise, gratings, point probes and apertures.

Images are square 2D float arrays indexed ``img[a, b]`` (row ``a``, column
``b``). Pixel coordinates are measured in pixels with the image midpoint at
``(size / 2, size / 2)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument

APERTURE_RAMP = 0.1  # fraction of the aperture radius used for the cosine ramp


def _check_image(w):
    w = np.asarray(w, dtype=float)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise InvalidArgument(f"image must be a square 2D array, got shape {w.shape}")
    if not np.all(np.isfinite(w)):
        raise InvalidArgument("image contains non-finite pixels")
    return w


def rms(w):
    """Root-mean-square intensity of an image."""
    w = np.asarray(w, dtype=float)
    return float(np.sqrt(np.mean(w * w)))


def standardize(w):
    """Shift to mean 0 and scale to RMS 1."""
    w = np.asarray(w, dtype=float)
    w = w - w.mean()
    r = rms(w)
    if r == 0:
        raise InvalidArgument("cannot standardize a constant image")
    w = w / r
    # a second pass removes the O(eps) residue left by the first
    w = w - w.mean()
    return w / rms(w)


def generate_pink_noise(size, seed):
    """Standardized 2D noise with amplitude spectrum proportional to 1/|omega|.

    Phases are uniform and Hermitian-symmetric (taken from the FFT of white
    noise), the DC term is zeroed, and the result is standardized to mean 0
    and RMS 1.

    Parameters
    ----------
    size : int
        Pixels per side, at least 2.
    seed : int or sequence of int
        Anything accepted by :func:`numpy.random.default_rng`.
    """
    if int(size) != size or size < 2:
        raise InvalidArgument(f"size must be an integer >= 2, got {size}")
    size = int(size)
    rng = np.random.default_rng(seed)
    white = np.fft.fft2(rng.standard_normal((size, size)))
    mag = np.abs(white)
    phase = np.where(mag > 0, white / np.where(mag > 0, mag, 1.0), 1.0)

    fa = np.fft.fftfreq(size)[:, None]
    fb = np.fft.fftfreq(size)[None, :]
    radius = np.hypot(fa, fb)
    amp = np.zeros_like(radius)
    np.divide(1.0, radius, out=amp, where=radius > 0)

    img = np.fft.ifft2(amp * phase).real
    return standardize(img)


def scale_contrast(w, t):
    """Scale a standardized image to RMS contrast ``t``."""
    if t < 0:
        raise InvalidArgument(f"contrast must be >= 0, got {t}")
    return float(t) * _check_image(w)


def _centered_coords(size):
    idx = np.arange(size, dtype=float) - size / 2.0
    return idx[:, None], idx[None, :]


def generate_grating(size, frequency, orientation, phase=0.0):
    """Full-field 2D cosine, ``frequency`` cycles per image along ``orientation``.

    Pixel ``(a, b)`` is ``cos(2*pi*f*(a*cos(theta) + b*sin(theta))/size + phase)``
    with ``(a, b)`` measured from the image midpoint.
    """
    if frequency < 0:
        raise InvalidArgument(f"frequency must be >= 0, got {frequency}")
    a, b = _centered_coords(int(size))
    proj = a * np.cos(orientation) + b * np.sin(orientation)
    return np.cos(2.0 * np.pi * frequency * proj / size + phase)


def point_stimulus(size, a0, b0, amplitude=1.0):
    """Blank image with a single pixel at ``(a0, b0)`` set to ``amplitude``."""
    if not (0 <= a0 < size and 0 <= b0 < size):
        raise InvalidArgument(f"point ({a0}, {b0}) outside a {size}x{size} image")
    img = np.zeros((int(size), int(size)))
    img[int(a0), int(b0)] = amplitude
    return img


def aperture_mask(size, radius_fraction):
    """Attenuation factors of the circular aperture, one per pixel."""
    if not 0 < radius_fraction <= 1:
        raise InvalidArgument(f"radius_fraction must be in (0, 1], got {radius_fraction}")
    a, b = _centered_coords(int(size))
    dist = np.hypot(a, b)
    radius = radius_fraction * size / 2.0
    inner = (1.0 - APERTURE_RAMP) * radius
    ramp = 0.5 * (1.0 + np.cos(np.pi * (dist - inner) / (radius - inner)))
    return np.where(dist <= inner, 1.0, np.where(dist >= radius, 0.0, ramp))


def apply_aperture(w, radius_fraction=1.0):
    """Crop to a circular aperture blended into a zero background."""
    w = _check_image(w)
    return w * aperture_mask(w.shape[0], radius_fraction)


@dataclass(frozen=True)
class StimulusSet:
    """An ordered stack of same-size images.

    ``images`` has shape ``(n, size, size)``. ``seed`` is 0 for externally
    loaded sets.
    """

    images: np.ndarray
    seed: int = 0

    def __post_init__(self):
        images = np.asarray(self.images, dtype=float)
        if images.ndim != 3 or images.shape[0] < 1 or images.shape[1] != images.shape[2]:
            raise InvalidArgument(f"expected a nonempty (n, size, size) stack, got {images.shape}")
        if not np.all(np.isfinite(images)):
            raise InvalidArgument("stimulus set contains non-finite pixels")
        images.setflags(write=False)
        object.__setattr__(self, "images", images)

    @property
    def size(self):
        return self.images.shape[1]

    def __len__(self):
        return self.images.shape[0]

    def __getitem__(self, i):
        return self.images[i]

    def rms_contrast(self):
        """Per-image RMS contrast around each image's own mean."""
        flat = self.images.reshape(len(self), -1)
        return flat.std(axis=1)


def sample_stimulus_set(size, n, seed, aperture=False, radius_fraction=1.0):
    """``n`` independent standardized pink-noise images.

    Image ``i`` is seeded with ``(seed, i)`` so sets of different lengths
    share their common prefix.
    """
    if n < 1:
        raise InvalidArgument(f"n must be >= 1, got {n}")
    images = np.empty((n, size, size))
    for i in range(n):
        img = generate_pink_noise(size, (seed, i))
        if aperture:
            img = apply_aperture(img, radius_fraction)
        images[i] = img
    return StimulusSet(images, seed)

import csv

import numpy as np
import pytest

from vspam import gabor, tuning
from vspam.encoding import VoxelModel, predict
from vspam.errors import InvalidArgument
from vspam.stimuli import sample_stimulus_set


@pytest.fixture(scope="module")
def bank():
    return gabor.build_bank(32, levels=3, orientations=4)


def single_feature_model(bank, j, weight=1.0, intercept=0.0):
    coef = np.zeros(bank.p)
    coef[j] = weight
    return VoxelModel(kind="sqrtX", transform="sqrt", bank_hash=bank.hash, screened=np.arange(bank.p),
                      center=np.zeros(bank.p), scale=np.ones(bank.p), intercept=intercept,
                      terms={"coefficients": list(coef)}, lam=0.0, sigma2_hat=1.0, train_r2=0.5,
                      df=2.0, n_train=100)


def intercept_only(bank, value=2.5):
    return single_feature_model(bank, 0, weight=0.0, intercept=value)


ORIS = np.arange(4) * np.pi / 4
FREQS = [1, 2, 4, 8]


def test_intercept_only_is_flat(bank):
    m = intercept_only(bank)
    assert np.all(tuning.spatial_rf(m, bank, 4).values == 2.5)
    assert np.all(tuning.ori_freq_tuning(m, bank, FREQS, ORIS).values == 2.5)
    assert np.all(tuning.contrast_tuning(m, bank, [0, 1, 2], n_noise=2).values == 2.5)


@pytest.mark.parametrize("j", [4 + 0, 4 + 9, 20 + 5, 20 + 16 * 2 + 10])
def test_rf_peak_at_wavelet_center(bank, j):
    w = bank.wavelets[j]
    G = 16
    rf = tuning.spatial_rf(single_feature_model(bank, j), bank, G)
    cell = bank.image_size / G
    a, b = rf.peak
    assert abs(a - w.center[0]) <= cell and abs(b - w.center[1]) <= cell
    doubled = tuning.spatial_rf(single_feature_model(bank, j), bank, G, amplitude=2.0)
    assert doubled.peak == rf.peak
    np.testing.assert_allclose(doubled.values, 2 * rf.values, rtol=1e-12)


@pytest.mark.parametrize("j", [2, 4 + 4 * 1, 20 + 16 * 3 + 5])
def test_orifreq_peak_at_wavelet_tuning(bank, j):
    w = bank.wavelets[j]
    curve = tuning.ori_freq_tuning(single_feature_model(bank, j), bank, FREQS, ORIS)
    f, o = curve.axis[np.argmax(curve.values)]
    assert f == w.frequency
    assert o == pytest.approx(w.orientation)
    assert tuning.ori_freq_surface(curve).shape == (4, 4)


def test_orifreq_pi_periodic(bank):
    m = single_feature_model(bank, 30, intercept=0.3)
    a = tuning.ori_freq_tuning(m, bank, FREQS, ORIS)
    b = tuning.ori_freq_tuning(m, bank, FREQS, ORIS + np.pi)
    np.testing.assert_allclose(a.values, b.values, rtol=1e-9, atol=1e-12)


def test_contrast_zero_is_blank(bank):
    m = single_feature_model(bank, 30, intercept=0.7)
    curve = tuning.contrast_tuning(m, bank, [0.0, 1.0], seed=4, n_noise=3)
    blank = predict(m, gabor.featurize_images(bank, np.zeros((1, 32, 32))))[0]
    assert curve.values[0] == blank
    assert tuning.spatial_rf(m, bank, 3, amplitude=0.0).values[1, 2] == blank
    with pytest.raises(InvalidArgument):
        tuning.contrast_tuning(m, bank, [-1.0])


def test_contrast_curve_linear_for_sqrt_model(bank):
    m = single_feature_model(bank, 30, weight=1.7, intercept=0.2)
    t = np.linspace(0, 3, 7)
    curve = tuning.contrast_tuning(m, bank, t, seed=1, n_noise=4)
    slope, icpt = np.polyfit(t, curve.values, 1)
    np.testing.assert_allclose(curve.values, icpt + slope * t, atol=1e-10)
    assert icpt == pytest.approx(0.2)


def test_determinism_and_metadata(bank, tmp_path):
    m = single_feature_model(bank, 10)
    train = sample_stimulus_set(32, 20, 0).images
    a = tuning.contrast_tuning(m, bank, [0.5, 1.0], seed=3, n_noise=2, train_images=train)
    b = tuning.contrast_tuning(m, bank, [0.5, 1.0], seed=3, n_noise=2, train_images=train)
    np.testing.assert_array_equal(a.values, b.values)
    assert len(a.metadata["train_contrast_deciles"]) == 9
    a.to_csv(tmp_path / "c.csv")
    lines = list(csv.reader(open(tmp_path / "c.csv")))
    assert lines[-3] == ["contrast", "value"] and len(lines) == len(a.metadata) + 3
    rf = tuning.spatial_rf(m, bank, 5)
    rf.to_csv(tmp_path / "rf.csv")
    assert len(list(csv.reader(open(tmp_path / "rf.csv")))) == 26
    assert rf.metadata["extrapolated_fraction"] == 0.0
    with pytest.raises(InvalidArgument):
        tuning.spatial_rf(m, bank, 1)

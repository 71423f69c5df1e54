import csv
from math import comb

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vspam import decoding
from vspam.encoding import VoxelModel
from vspam.errors import InvalidArgument, InvalidConfig
from vspam.gabor import FeatureMatrix


def linear_model(coef, intercept=0.0, sigma2=1.0, train_r2=0.5):
    """sqrtX model over all columns: prediction = intercept + sqrt(X) @ coef."""
    coef = np.asarray(coef, dtype=float)
    p = len(coef)
    return VoxelModel(kind="sqrtX", transform="sqrt", bank_hash="", screened=np.arange(p),
                      center=np.zeros(p), scale=np.ones(p), intercept=intercept,
                      terms={"coefficients": list(coef)}, lam=0.0, sigma2_hat=sigma2,
                      train_r2=train_r2, df=1 + np.count_nonzero(coef), n_train=100)


def features_for(mu):
    """Feature rows whose square roots are ``mu`` (so unit-coefficient models predict ``mu``)."""
    return FeatureMatrix(np.asarray(mu, dtype=float) ** 2)


def toy_population(n_vox, p, seed):
    rng = np.random.default_rng(seed)
    models = [linear_model(rng.normal(size=p), rng.normal(), rng.uniform(0.2, 2.0), rng.uniform())
              for _ in range(n_vox)]
    return models, rng


def test_select_voxels_rules():
    models = [linear_model([1.0], train_r2=r) for r in (0.3, 0.1, 0.3, 0.9, 0.0)]
    np.testing.assert_array_equal(decoding.select_voxels(models, threshold=-1), np.arange(5))
    np.testing.assert_array_equal(decoding.select_voxels(models, top_k=5), np.arange(5))
    np.testing.assert_array_equal(decoding.select_voxels(models, top_k=2), [0, 3])
    np.testing.assert_array_equal(decoding.select_voxels(models, threshold=0.2), [0, 2, 3])
    with pytest.raises(InvalidConfig):
        decoding.select_voxels(models, threshold=0.95)
    with pytest.raises(InvalidConfig):
        decoding.select_voxels(models)
    with pytest.raises(InvalidConfig):
        decoding.select_voxels(models, threshold=0.1, top_k=2)


def test_top_400_of_1331():
    rng = np.random.default_rng(0)
    r2 = np.round(rng.uniform(size=1331), 2)  # plenty of ties
    models = [linear_model([1.0], train_r2=r) for r in r2]
    assert len(decoding.select_voxels(models, top_k=400)) == 400


def test_decoder_rejects_bad_weights():
    with pytest.raises(InvalidArgument):
        decoding.Decoder([linear_model([1.0], sigma2=0.0)], [0])
    with pytest.raises(InvalidConfig):
        decoding.Decoder([linear_model([1.0])], [])


def test_score_matches_loop():
    models, rng = toy_population(6, 4, 1)
    dec = decoding.Decoder(models, [0, 2, 3, 5])
    X = rng.uniform(0, 3, size=(1, 4))
    y = rng.normal(size=6)
    expected = 0.0
    for v in (0, 2, 3, 5):
        m = models[v]
        mu = m.intercept + np.sqrt(X[0]) @ np.asarray(m.terms["coefficients"])
        expected += (y[v] - mu) ** 2 / m.sigma2_hat
    assert decoding.score(dec, y, X) == pytest.approx(expected, rel=1e-12)
    mu_all = np.array([decoding.Decoder(models, [v]).predictions(X)[0, 0] for v in range(6)])
    assert decoding.score(dec, mu_all, X) == 0.0
    with pytest.raises(InvalidArgument):
        decoding.score(dec, y[:4], X)
    y_missing = y.copy()
    y_missing[2] = np.nan
    with pytest.raises(InvalidArgument):
        decoding.score(dec, y_missing, X)


def test_decode_vs_bruteforce():
    models, rng = toy_population(8, 5, 2)
    dec = decoding.Decoder(models, np.arange(8))
    for _ in range(100):
        cand = rng.uniform(0, 2, size=(rng.integers(1, 15), 5))
        y = rng.normal(size=8)
        scores = [decoding.score(dec, y, c) for c in cand]
        assert decoding.decode(dec, y, cand) == int(np.argmin(scores))


def test_decode_special_cases():
    models, rng = toy_population(5, 3, 3)
    dec = decoding.Decoder(models, np.arange(5))
    cand = rng.uniform(0, 2, size=(7, 3))
    assert decoding.decode(dec, rng.normal(size=5), cand[:1]) == 0
    mu = dec.predictions(cand)
    assert decoding.decode(dec, mu[4], cand) == 4
    twice = np.vstack([cand[4], cand[4]])
    assert decoding.decode(dec, mu[4], twice) == 0


def test_weight_scaling_preserves_argmin():
    models, rng = toy_population(5, 3, 4)
    scaled = [linear_model(m.terms["coefficients"], m.intercept, 7.5 * m.sigma2_hat) for m in models]
    d1, d2 = decoding.Decoder(models, np.arange(5)), decoding.Decoder(scaled, np.arange(5))
    cand = rng.uniform(0, 2, size=(20, 3))
    y = rng.normal(size=5)
    s1 = [decoding.score(d1, y, c) for c in cand]
    s2 = [decoding.score(d2, y, c) for c in cand]
    np.testing.assert_allclose(s2, np.array(s1) / 7.5, rtol=1e-12)
    assert decoding.decode(d1, y, cand) == decoding.decode(d2, y, cand)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 40), st.integers(1, 40), st.data())
def test_prob_correct_matches_integer_binomials(M, N, data):
    M = min(M, N)
    b = data.draw(st.integers(0, N))
    assert decoding.prob_correct([M], N, b)[0] == pytest.approx(comb(M, b) / comb(N, b), rel=1e-10)


def test_error_closed_forms():
    N = 50
    M = np.array([50, 50, 50])
    np.testing.assert_array_equal(decoding.error_from_beats(M, N, [0, 1, 10, 50]), 0.0)
    M = np.array([0, 10, 25, 49, 50])
    assert decoding.error_from_beats(M, N, [1])[0] == pytest.approx(1 - np.mean(M / N))
    assert decoding.error_from_beats(M, N, [N])[0] == pytest.approx(0.8)
    err = decoding.error_from_beats(M, N, np.arange(N + 1))
    assert np.all(np.diff(err) >= 0) and err[0] == 0
    with pytest.raises(InvalidArgument):
        decoding.error_from_beats(M, N, [N + 1])


@pytest.fixture(scope="module")
def setup():
    models, rng = toy_population(10, 6, 5)
    dec = decoding.Decoder(models, np.arange(10))
    db = FeatureMatrix(rng.uniform(0, 2, size=(200, 6)))
    truth = FeatureMatrix(rng.uniform(0, 2, size=(15, 6)))
    Y = dec.predictions(truth) + rng.normal(0, 1.0, size=(15, 10))
    return dec, Y, truth, db


def test_exact_error_monotone_and_plugin(setup):
    dec, Y, truth, db = setup
    res = decoding.exact_id_error(dec, Y, truth, db, np.arange(0, 201, 5))
    assert np.all(np.diff(res.error) >= 0) and res.error[0] == 0
    assert np.all((res.beats >= 0) & (res.beats <= 200))
    plugin = np.mean([decoding.decode(dec, Y[i], np.vstack([db.values, truth.values[i]])) != 200
                      for i in range(15)])
    assert res.error[-1] == pytest.approx(plugin)
    with pytest.raises(InvalidArgument):
        decoding.exact_id_error(dec, Y, truth, db, [201])


def test_exact_ties_count_as_failures():
    models = [linear_model([1.0, 0.0]), linear_model([0.0, 1.0])]
    dec = decoding.Decoder(models, [0, 1])
    truth = features_for([[1.0, 2.0]])
    db = features_for([[1.0, 2.0], [3.0, 3.0], [0.0, 0.0]])  # first entry ties exactly
    y = np.array([[1.0, 2.0]])
    res = decoding.exact_id_error(dec, y, truth, db, [1, 3])
    assert res.beats[0] == 2
    np.testing.assert_allclose(res.error, [1 / 3, 1.0])
    assert decoding.mc_from_scores(*decoding.pair_scores(dec, y, truth, db), 3, 50)[0] == 1.0


def test_monte_carlo_agrees_and_is_deterministic(setup):
    dec, Y, truth, db = setup
    exact = decoding.exact_id_error(dec, Y, truth, db, [10, 200])
    for b, e in zip((10, 200), exact.error):
        est, se = decoding.mc_id_error(dec, Y, truth, db, b, 20000, seed=3)
        assert abs(est - e) <= 3 * se + 1e-12
    assert decoding.mc_id_error(dec, Y, truth, db, 10, 500, 9) == decoding.mc_id_error(dec, Y, truth, db, 10, 500, 9)
    assert decoding.mc_id_error(dec, Y, truth, db, 0, 10) == (0.0, 0.0)
    with pytest.raises(InvalidArgument):
        decoding.mc_id_error(dec, Y, truth, db, 5, 0)


def test_threshold_sweep_and_csv(setup, tmp_path):
    dec, Y, truth, db = setup
    rows = decoding.threshold_sweep(dec.models, Y, truth, db, 50, thresholds=[-1, 0.5, 2.0], top_ks=[3])
    assert [r[:3] for r in rows][0] == ("threshold", -1, 10)
    assert all(r[1] != 2.0 for r in rows)
    assert rows[-1][:3] == ("top_k", 3, 3)
    res = decoding.exact_id_error(dec, Y, truth, db, [1, 10])
    res.write_csv(tmp_path / "c.csv", tmp_path / "p.csv")
    curve = list(csv.reader(open(tmp_path / "c.csv")))
    pairs = list(csv.reader(open(tmp_path / "p.csv")))
    assert curve[0] == ["b", "average_error"] and len(curve) == 3
    assert pairs[0] == ["pair_id", "M", "N"] and len(pairs) == 16

import math

import numpy as np
import pytest
from scipy.stats import ks_2samp

from fedlsgan import baselines, data
from fedlsgan.baselines import CopulaModel, fit_copula, repair_correlation, sample_copula
from helpers import TINY, random_client


@pytest.fixture(scope="module")
def wind_profiles():
    ts = data.synth_wind(11, 3000, data.SiteParams("w", mix=0.5))
    days = len(ts) // 288
    return baselines.daily_profiles(ts.values[: days * 288].reshape(days, 288), 24)


def test_daily_profiles_shape():
    x = np.arange(576.0 * 3).reshape(3, 576)
    prof = baselines.daily_profiles(x, 24)
    assert prof.shape == (6, 24)
    assert prof[0, 0] == pytest.approx(np.mean(np.arange(12)))


def test_copula_independent_columns():
    x = np.random.default_rng(0).random((5000, 2))
    model = fit_copula(x)
    assert abs(model.corr[0, 1]) < 0.05
    assert np.all(np.diag(model.corr) == 1.0)


def test_copula_comonotone_columns():
    col = np.random.default_rng(1).random(500)
    model = fit_copula(np.c_[col, col])
    assert model.corr[0, 1] > 0.99


def test_copula_fit_deterministic_and_save_load(tmp_path):
    x = np.random.default_rng(2).random((40, 5))
    a, b = fit_copula(x), fit_copula(x)
    for field in ("tables", "positions", "corr", "degenerate"):
        assert np.array_equal(getattr(a, field), getattr(b, field))
    a.save(tmp_path / "c.flgc")
    back = CopulaModel.load(tmp_path / "c.flgc")
    assert np.array_equal(back.corr, a.corr) and np.array_equal(back.tables, a.tables)
    assert np.array_equal(sample_copula(a, 50, 3), sample_copula(back, 50, 3))


def test_copula_needs_ten_rows():
    with pytest.raises(ValueError):
        fit_copula(np.random.default_rng(0).random((9, 3)))


def test_copula_degenerate_dimension():
    x = np.random.default_rng(3).random((30, 3))
    x[:, 1] = 0.7
    model = fit_copula(x)
    assert model.degenerate.tolist() == [False, True, False]
    s = sample_copula(model, 200, 0)
    assert np.all(s[:, 1] == 0.7)


def test_copula_marginals_ks(wind_profiles):
    model = fit_copula(wind_profiles)
    s = sample_copula(model, 5000, 0)
    ks = [ks_2samp(s[:, j], wind_profiles[:, j]).statistic for j in range(24)]
    assert max(ks) < 0.05


def test_copula_pearson(wind_profiles):
    s = sample_copula(fit_copula(wind_profiles), 5000, 1)
    diff = np.abs(np.corrcoef(s, rowvar=False) - np.corrcoef(wind_profiles, rowvar=False))
    assert diff.max() < 0.1


def test_copula_sampling_stays_in_range_and_is_seeded():
    x = np.random.default_rng(4).standard_normal((50, 6)) ** 3
    model = fit_copula(x)
    s = sample_copula(model, 4000, 9)
    assert np.all(s >= x.min(0)) and np.all(s <= x.max(0))
    assert np.array_equal(s, sample_copula(model, 4000, 9))
    assert not np.array_equal(s, sample_copula(model, 4000, 10))


def test_repair_leaves_psd_matrix_alone():
    a = np.random.default_rng(5).standard_normal((200, 8))
    corr = np.corrcoef(a, rowvar=False)
    assert np.linalg.norm(repair_correlation(corr) - corr) < 1e-6


def test_repair_fixes_indefinite_matrix():
    bad = np.array([[1.0, 0.9, -0.9], [0.9, 1.0, 0.9], [-0.9, 0.9, 1.0]])
    assert np.linalg.eigvalsh(bad).min() < 0
    fixed = repair_correlation(bad)
    assert np.linalg.eigvalsh(fixed).min() > -1e-12
    np.testing.assert_allclose(np.diag(fixed), 1.0)
    np.testing.assert_allclose(fixed, fixed.T)


def test_centralized_deterministic():
    client = random_client(n_windows=40)
    a = baselines.train_centralized(client, TINY, "lsgan", epochs=2, seed=1)
    b = baselines.train_centralized(client, TINY, "lsgan", epochs=2, seed=1)
    assert a[0].equals(b[0]) and a[1].equals(b[1])
    c = baselines.train_centralized(client, TINY, "lsgan", epochs=2, seed=2)
    assert not a[0].equals(c[0])


def test_centralized_accepts_raw_windows():
    client = random_client(n_windows=40)
    a = baselines.train_centralized(client.train_array, TINY, epochs=1, seed=0)
    b = baselines.train_centralized(client, TINY, epochs=1, seed=0)
    assert a[0].equals(b[0])


def test_gan_loss_stable_for_200_epochs():
    hist = []
    G, D = baselines.train_centralized(random_client(n_windows=40), TINY, "gan",
                                       epochs=200, seed=0, history=hist)
    assert len(hist) == 200
    assert all(math.isfinite(ld) and math.isfinite(lg) for _, ld, lg in hist)
    assert G.is_finite() and D.is_finite()

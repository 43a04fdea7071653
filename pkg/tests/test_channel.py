import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from macap.channel import (ChannelSample, FadingEnsemble, RicianSpec, SystemParams, db_to_linear,
                           expect, export_csv, rician_pdf, sample_ensemble)
from macap.errors import InvalidArgument, NumericError
from oracles import rician_moments_scipy

RAYLEIGH = RicianSpec(-math.inf)


def test_system_params():
    p = SystemParams.from_db(0.0)
    assert p.pbar == 1.0 and p.tb == 100.0 and p.noise_variance == 1.0
    for bad in (0.0, -1.0, math.inf):
        with pytest.raises(InvalidArgument):
            SystemParams(bad)


def test_rician_spec_validation():
    with pytest.raises(InvalidArgument):
        RicianSpec(0.0, mean_power=0.0)
    with pytest.raises(InvalidArgument):
        RicianSpec(math.nan)
    assert RAYLEIGH.k_linear == 0.0


def test_rayleigh_mean():
    e = sample_ensemble(RAYLEIGH, RAYLEIGH, 100_000, 3)
    assert abs(e.z1.mean() - 1) < 0.02
    assert abs(expect(e, e.z1) - 1) < 0.02


@pytest.mark.parametrize("n,tol", [(1_000, 0.15), (10_000, 0.05), (100_000, 0.02)])
def test_mean_converges(n, tol):
    spec = RicianSpec(4.97, mean_power=2.0)
    e = sample_ensemble(spec, spec, n, 5)
    assert abs(e.z1.mean() / 2.0 - 1) < tol
    assert abs(e.z2.mean() / 2.0 - 1) < tol


def test_determinism():
    a = sample_ensemble(RicianSpec(-6.88), RicianSpec(8.61), 500, 42)
    b = sample_ensemble(RicianSpec(-6.88), RicianSpec(8.61), 500, 42)
    c = sample_ensemble(RicianSpec(-6.88), RicianSpec(8.61), 500, 43)
    assert a.identical_to(b)
    assert a.samples == b.samples
    assert not a.identical_to(c)


def test_strong_los():
    # K = +40 dB: scatter power 1e-4, so |h|^2 = (1 + O(1e-2) noise)^2;
    # on 100 samples every z stays within 5% of the mean
    e = sample_ensemble(RicianSpec(40.0), RicianSpec(40.0), 100, 1)
    assert np.all(np.abs(e.z1 - 1) < 0.05)


def test_zero_samples_rejected():
    with pytest.raises(InvalidArgument):
        sample_ensemble(RAYLEIGH, RAYLEIGH, 0, 1)


def test_sample_fields():
    e = sample_ensemble(RicianSpec(0.0), RicianSpec(0.0), 50, 9)
    s = e[7]
    assert isinstance(s, ChannelSample)
    assert abs(s.z1 - abs(s.h1) ** 2) < 1e-12
    assert abs(s.phase - e.phase[7]) < 1e-12
    assert abs(e.weights.sum() - 1) < 1e-9


def test_ensemble_read_only():
    e = sample_ensemble(RAYLEIGH, RAYLEIGH, 10, 1)
    with pytest.raises(ValueError):
        e.z1[0] = 5.0


def test_ensemble_weight_check():
    with pytest.raises(InvalidArgument):
        FadingEnsemble(np.ones(2), np.ones(2), np.array([0.5, 0.6]), 0, RAYLEIGH, RAYLEIGH)


def test_rayleigh_pdf_is_exponential():
    z = np.linspace(0, 8, 50)
    assert np.allclose(rician_pdf(z, RAYLEIGH), np.exp(-z), atol=1e-14)


@pytest.mark.parametrize("k_db", [-6.88, 4.97, 8.61])
def test_pdf_normalization_and_mean(k_db):
    spec = RicianSpec(k_db)
    # the density concentrates near z = 1 for large K: split the range there
    pts = [0.0, 0.5, 1.0, 2.0, 5.0]
    mass = sum(integrate.quad(rician_pdf, a, b, args=(spec,), epsabs=1e-13, limit=200)[0]
               for a, b in zip(pts, pts[1:] + [np.inf]))
    mean = sum(integrate.quad(lambda z: z * rician_pdf(z, spec), a, b, epsabs=1e-13, limit=200)[0]
               for a, b in zip(pts, pts[1:] + [np.inf]))
    assert abs(mass - 1) < 1e-8
    assert abs(mean - 1) < 1e-6


@pytest.mark.parametrize("k_db", [-6.88, 4.97, 8.61])
def test_pdf_matches_scipy_noncentral_chi2(k_db):
    spec = RicianSpec(k_db, mean_power=1.5)
    ref = rician_moments_scipy(spec.k_linear, 1.5)
    z = np.linspace(0.01, 6, 40)
    assert np.allclose(rician_pdf(z, spec), ref.pdf(z), rtol=1e-9)


def test_pdf_negative_rejected():
    with pytest.raises(InvalidArgument):
        rician_pdf(-1.0, RAYLEIGH)


def test_samples_match_distribution():
    spec = RicianSpec(4.97)
    e = sample_ensemble(spec, spec, 20_000, 8)
    ref = rician_moments_scipy(spec.k_linear, 1.0)
    from scipy.stats import kstest
    assert kstest(e.z1, ref.cdf).pvalue > 1e-3


def test_expect():
    e = sample_ensemble(RAYLEIGH, RAYLEIGH, 100_000, 4)
    assert abs(expect(e, lambda s: 3.5) - 3.5) < 1e-12
    assert abs(expect(e, (e.z1 > e.z2).astype(float)) - 0.5) < 0.02
    bad = np.zeros(len(e))
    bad[17] = np.nan
    with pytest.raises(NumericError, match="17"):
        expect(e, bad)


def test_relative_phase_uniform():
    e = sample_ensemble(RicianSpec(8.61), RicianSpec(8.61), 20_000, 2)
    hist, _ = np.histogram(e.phase, bins=8, range=(-np.pi, np.pi))
    assert hist.min() > 0.9 * hist.mean()


def test_export_csv(tmp_path):
    e = sample_ensemble(RAYLEIGH, RAYLEIGH, 5, 1)
    p = tmp_path / "ens.csv"
    export_csv(e, p, "# test\n")
    lines = p.read_text().splitlines()
    assert lines[0] == "# test"
    assert lines[1] == "index,re_h1,im_h1,re_h2,im_h2,weight"
    row = lines[3].split(",")
    assert complex(float(row[1]), float(row[2])) == e.h1[1]


@given(st.integers(0, 2**32 - 1), st.integers(1, 50), st.floats(-10, 20))
def test_determinism_property(seed, n, k_db):
    spec = RicianSpec(k_db)
    a = sample_ensemble(spec, spec, n, seed)
    b = sample_ensemble(spec, spec, n, seed)
    assert a.identical_to(b)
    assert np.all(a.z1 >= 0) and np.allclose(a.z1, np.abs(a.h1) ** 2, atol=1e-12)


def test_independence_proxy():
    for n in (1_000, 10_000):
        e = sample_ensemble(RicianSpec(-6.88), RicianSpec(-6.88), n, 21)
        assert abs(np.corrcoef(e.z1, e.z2)[0, 1]) < 3 / math.sqrt(n)


def test_db_conversion():
    assert db_to_linear(10) == 10.0 and db_to_linear(-5) == pytest.approx(0.316227766)

from __future__ import annotations

import math
import warnings

import numpy as np
import pytest

import sievar
from sievar.diagnostics import check_contractivity, estimate_delta_r, find_h_star
from sievar.model import InnovationLaw, LagPolynomial, ModelSpec, StabilityWarning


def ar_spec(*coeffs, bound=3.0):
    p = len(coeffs)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", StabilityWarning)
        return ModelSpec(
            d_y=0, p=p, mu=np.zeros(1),
            lags=LagPolynomial(np.array([[[c]] for c in coeffs])),
            impact=(), b0_21=np.zeros(0),
            innovation=InnovationLaw(sigma=(1.0,), bound=bound),
        )


def test_iid_component_has_zero_dependence():
    # DGP 1's X is the innovation itself: shared futures collapse the gap
    profile = estimate_delta_r(sievar.builtin_dgp(1), h_max=6, replications=500, seed=1, components=(0,))
    np.testing.assert_array_equal(profile.delta_hat, 0.0)
    assert profile.a1 == 0.0
    assert profile.a2 == math.inf


def test_ar1_coupling_ratio_and_decay_fit():
    profile = estimate_delta_r(ar_spec(0.5), h_max=7, replications=10_000, seed=3)
    ratios = profile.delta_hat[1:] / profile.delta_hat[:-1]
    assert np.all((ratios > 0.4) & (ratios < 0.6))
    assert abs(profile.a2 - math.log(2.0)) < 0.15
    assert np.all(np.diff(profile.delta_hat) <= 1e-12)  # monotone decay


def test_replication_floor():
    with pytest.raises(ValueError, match="100"):
        estimate_delta_r(ar_spec(0.5), replications=50)


def test_contractivity_ar1():
    report = check_contractivity(ar_spec(0.5), samples=40, seed=2)
    assert report.contractive
    assert report.c_z == pytest.approx(0.5, abs=1e-3)
    assert report.c_eps == pytest.approx(1.0, abs=1e-3)
    assert report.h_star == 1


def test_contractivity_always_violated_for_ar2():
    gen = np.random.default_rng(7)
    for _ in range(20):
        b1, b2 = gen.uniform(-0.8, 0.8, size=2)
        report = check_contractivity(ar_spec(b1, b2), samples=10, seed=1)
        assert not report.contractive
        assert report.c_z >= 1.0 - 1e-6


def test_contractivity_dgp2_finite():
    report = check_contractivity(sievar.builtin_dgp(2), samples=50, seed=4)
    assert np.isfinite(report.c_z) and np.isfinite(report.c_eps)
    assert report.c_z >= 1.0 - 1e-3  # companion with a unit sub-diagonal row


def test_h_star_ar2_small_coefficients():
    spec = ar_spec(0.1, 0.1)
    report = find_h_star(spec, h_cap=6, samples=30, seed=5)
    assert report.h_star == 2
    comp = spec.lags.companion()
    assert np.linalg.norm(comp, 2) >= 1.0
    assert np.linalg.norm(comp @ comp, 2) < 1.0
    assert report.decay[0] == pytest.approx(np.linalg.norm(comp, 2), abs=1e-3)
    assert report.decay[1] == pytest.approx(np.linalg.norm(comp @ comp, 2), abs=1e-3)


def test_h_star_contractive_ar1_is_one():
    assert find_h_star(ar_spec(0.5), h_cap=4, samples=20, seed=6).h_star == 1


def test_h_star_explosive_none_and_increasing():
    report = find_h_star(ar_spec(1.1, bound=3.0), h_cap=20, samples=10, seed=7)
    assert report.h_star is None
    decay = np.asarray(report.decay)
    assert np.all(np.diff(decay) > 0)


def test_gmc_rate_matches_contractivity_link():
    # fitted decay rate approximately -log(C_Z) for the stable linear map
    spec = ar_spec(0.5)
    profile = estimate_delta_r(spec, h_max=8, replications=5000, seed=8)
    report = check_contractivity(spec, samples=30, seed=8)
    assert abs(profile.a2 - (-math.log(report.c_z))) / (-math.log(report.c_z)) < 0.25


def test_nested_sampling_monotone():
    spec = sievar.builtin_dgp(2)
    small = check_contractivity(spec, samples=20, seed=9)
    large = check_contractivity(spec, samples=60, seed=9)
    assert large.c_z >= small.c_z


def test_explosive_sampling_divergence_raises():
    spec = ar_spec(1.5)
    with pytest.raises(sievar.PathDivergedError):
        estimate_delta_r(spec, h_max=4, replications=200, seed=1, burn_in=2500)

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, stats

from polykin.kernels import (AngularModel, MixtureSpec, frozen_kernel, kernel_eval, majorant_rate,
                             orthonormal_frame, pair_rate, poly_kernel, rR_measure_mass, rR_measure_nodes,
                             sample_rR, sample_sigma, sandwich)
from polykin.kinematics import total_energy

FORWARD = AngularModel.tabulated([-1.0, 0.0, 0.0, 1.0], [0.2, 0.2, 1.0, 3.0], l1_norm=2.0)


def test_sphere_integral_matches_norm():
    assert AngularModel.isotropic(3.0).sphere_integral() == pytest.approx(3.0, rel=1e-14)
    assert FORWARD.sphere_integral() == pytest.approx(2.0, rel=1e-12)


def test_sphere_integral_against_adaptive_quadrature():
    val, _ = integrate.quad(lambda mu: 2 * math.pi * float(FORWARD(mu)), -1, 1, points=[0.0], limit=200)
    assert val == pytest.approx(2.0, rel=1e-8)


def test_angular_table_validation():
    with pytest.raises(ValueError):
        AngularModel.tabulated([-1.0, 0.5], [1.0, 1.0])
    with pytest.raises(ValueError):
        AngularModel.tabulated([-1.0, 1.0], [1.0, -1.0])
    with pytest.raises(ValueError):
        AngularModel("weird")
    with pytest.raises(ValueError):
        AngularModel.isotropic(0.0)


def test_sample_mu_chi_square():
    rng = np.random.default_rng(11)
    n = 200_000
    mu = FORWARD.sample_mu(rng, n)
    edges = np.linspace(-1, 1, 21)
    counts, _ = np.histogram(mu, edges)
    probs = np.array([integrate.quad(lambda x: float(FORWARD(x)), a, b)[0] for a, b in zip(edges[:-1], edges[1:])])
    probs /= probs.sum()
    chi2 = np.sum((counts - n * probs) ** 2 / (n * probs))
    assert stats.chi2.sf(chi2, len(probs) - 1) > 1e-3


def test_sample_sigma_is_unit_and_follows_angle():
    rng = np.random.default_rng(3)
    u = rng.normal(size=(50_000, 3))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    s = sample_sigma(FORWARD, u, rng)
    np.testing.assert_allclose(np.linalg.norm(s, axis=1), 1.0, atol=1e-12)
    mu = np.einsum("ij,ij->i", s, u)
    ref = FORWARD.sample_mu(np.random.default_rng(4), 50_000)
    assert stats.ks_2samp(mu, ref).pvalue > 1e-3
    iso = sample_sigma(AngularModel.isotropic(), u, rng)
    assert abs(np.mean(iso[:, 2])) < 0.02


def test_orthonormal_frame():
    u = np.array([[1.0, 0, 0], [0, 1.0, 0], [0.6, 0.8, 0]])
    e1, e2 = orthonormal_frame(u)
    for a, b in ((u, e1), (u, e2), (e1, e2)):
        np.testing.assert_allclose(np.einsum("ij,ij->i", a, b), 0.0, atol=1e-14)


@pytest.mark.parametrize("alpha", [0.0, 0.5, 2.0, -0.5])
def test_rR_measure_mass_and_nodes(alpha):
    def dens(R, r):
        return r ** alpha * (1 - r) ** alpha * (1 - R) ** (2 * alpha + 1) * math.sqrt(R)

    ref, _ = integrate.dblquad(dens, 0, 1, 0, 1, epsabs=1e-11)
    assert rR_measure_mass(alpha) == pytest.approx(ref, rel=1e-6)
    r, R, w = rR_measure_nodes(alpha)
    assert w.sum() == pytest.approx(rR_measure_mass(alpha), rel=1e-12)
    # exact for polynomials in (r, R)
    m = np.sum(w * r * r * R)
    ref2, _ = integrate.dblquad(lambda R, r: r * r * R * dens(R, r), 0, 1, 0, 1, epsabs=1e-11)
    assert m == pytest.approx(ref2, rel=1e-6)


def test_sample_rR_moments():
    spec = poly_kernel(alpha=1.0)
    r, R = sample_rR(spec, np.random.default_rng(5), 200_000)
    nodes_r, nodes_R, w = rR_measure_nodes(1.0)
    assert r.mean() == pytest.approx(np.sum(w * nodes_r) / w.sum(), abs=3e-3)
    assert R.mean() == pytest.approx(np.sum(w * nodes_R) / w.sum(), abs=3e-3)


def test_sample_rR_thinned_density():
    spec = poly_kernel(alpha=0.0, rR_upper=lambda r, R: 1.0 + r, rR_upper_max=2.0)
    r, R = sample_rR(spec, np.random.default_rng(6), 100_000)
    # marginal in r is proportional to 1 + r on [0, 1]
    assert r.mean() == pytest.approx((1 / 2 + 1 / 3) / 1.5, abs=4e-3)


def test_frozen_kernel_sandwich():
    spec = frozen_kernel(zeta=1.5, c_lower=0.5, c_upper=2.0)
    rng = np.random.default_rng(7)
    v, vs = rng.normal(size=(2, 1000, 3))
    I, Is = rng.exponential(size=(2, 1000))
    B = kernel_eval(spec, v, vs, I, Is)
    lo, hi = sandwich(spec, total_energy(v, vs, I, Is))
    assert np.all(lo <= B * (1 + 1e-12)) and np.all(B <= hi * (1 + 1e-12))
    same = kernel_eval(spec, v, vs, I, I)
    np.testing.assert_allclose(same, sandwich(spec, total_energy(v, vs, I, I))[1], rtol=1e-14)


def test_kernel_validation():
    with pytest.raises(ValueError):
        poly_kernel(zeta=0.0)
    frozen_kernel(zeta=0.0)
    with pytest.raises(ValueError):
        frozen_kernel(zeta=2.5)
    with pytest.raises(ValueError):
        frozen_kernel(c_lower=2.0, c_upper=1.0)
    with pytest.raises(ValueError):
        poly_kernel(lb_factor=0.0)
    with pytest.raises(ValueError):
        MixtureSpec(1.5, frozen_kernel(), poly_kernel())
    with pytest.raises(ValueError):
        kernel_eval(poly_kernel(), np.zeros(3), np.ones(3), 0.0, 1.0)


@given(st.floats(0.01, 50), st.floats(0, 1), st.floats(0.1, 2))
def test_majorant_dominates_pair_rate(E_max, frac, zeta):
    fr = frozen_kernel(zeta=zeta)
    po = poly_kernel(zeta=zeta, alpha=0.5)
    E = frac * E_max
    # a pair with all of its energy in relative motion
    u = math.sqrt(4 * E)
    v, vs = np.array([[u, 0, 0]]), np.zeros((1, 3))
    for spec in (fr, po):
        assert pair_rate(spec, v, vs, np.zeros(1), np.zeros(1))[0] <= majorant_rate(spec, E_max) * (1 + 1e-12)


def test_pair_rate_with_custom_kernel_uses_quadrature():
    po = poly_kernel(rR_upper=lambda r, R: 1.0 + r, rR_upper_max=2.0)
    v, vs = np.array([[2.0, 0, 0]]), np.zeros((1, 3))
    r, R, w = rR_measure_nodes(0.0)
    expected = np.sum(w * (1 + r)) * 1.0  # E = 1, (E/m)^(1/2) = 1
    assert pair_rate(po, v, vs, np.zeros(1), np.zeros(1))[0] == pytest.approx(expected, rel=1e-12)

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from polykin.kinematics import (CollisionParamsFrozen, CollisionParamsPoly, Ensemble, Particle, bracket_I,
                                bracket_power, bracket_v, bracket_vI, frozen_transform, moment,
                                poly_transform, total_energy)

finite = st.floats(-50, 50, allow_nan=False)
vec3 = arrays(float, 3, elements=finite)
energy = st.floats(0, 100, allow_nan=False)
unit = st.floats(0, 1)


def unit_vector(x):
    x = np.asarray(x, dtype=float)
    n = np.linalg.norm(x)
    return x / n if n > 1e-9 else np.array([0.0, 0.0, 1.0])


def test_bracket_values():
    assert bracket_v([0, 0, 0]) == 1.0
    assert bracket_v([2.0, 0, 0]) == pytest.approx(np.sqrt(3.0))
    assert bracket_I(2.0, m=2.0) == pytest.approx(np.sqrt(2.0))
    assert bracket_vI([2.0, 0, 0], 2.0, m=1.0) == pytest.approx(np.sqrt(5.0))


def test_negative_energy_rejected():
    with pytest.raises(ValueError):
        bracket_I(-1.0)
    with pytest.raises(ValueError):
        bracket_vI([0, 0, 0], -0.1)
    with pytest.raises(ValueError):
        Particle([0, 0, 0], I=-1.0)


@given(vec3, energy, st.floats(0.1, 10))
def test_brackets_at_least_one_and_ordered(v, I, m):
    bv, bi, bt = bracket_v(v), bracket_I(I, m), bracket_vI(v, I, m)
    assert bv >= 1 and bi >= 1 and bt >= 1
    assert bt ** 2 == pytest.approx(bv ** 2 + bi ** 2 - 1.0, rel=1e-12)


def test_moment_of_ensemble():
    ens = Ensemble(np.array([[0.0, 0, 0], [2.0, 0, 0]]), np.array([0.0, 2.0]), np.array([1.0, 3.0]))
    assert moment(ens, "v", 2) == pytest.approx(1.0 + 3.0 * 3.0)
    assert moment(ens, "I", 2) == pytest.approx(1.0 + 3.0 * 3.0)
    assert moment(ens, "total", 0) == pytest.approx(4.0)
    with pytest.raises(ValueError):
        moment(ens, "speed", 2)


def test_empty_ensemble_moment_rejected():
    ens = Ensemble(np.zeros((0, 3)), np.zeros(0), np.zeros(0))
    with pytest.raises(ValueError):
        moment(ens, "v", 2)


def test_param_validation():
    with pytest.raises(ValueError):
        CollisionParamsFrozen(np.array([1.0, 1.0, 0.0]))
    with pytest.raises(ValueError):
        CollisionParamsPoly(np.array([1.0, 0, 0]), r=1.5, R=0.5)
    with pytest.raises(ValueError):
        CollisionParamsPoly(np.array([1.0, 0, 0]), r=0.5, R=-0.1)


@given(vec3, vec3, vec3)
def test_frozen_conserves_momentum_and_energy(v, vs, s):
    sigma = unit_vector(s)
    vp, vsp = frozen_transform(v, vs, CollisionParamsFrozen(sigma))
    scale = 1.0 + np.abs(v).sum() + np.abs(vs).sum()
    np.testing.assert_allclose(vp + vsp, v + vs, atol=1e-12 * scale)
    e0 = v @ v + vs @ vs
    assert vp @ vp + vsp @ vsp == pytest.approx(e0, rel=1e-12, abs=1e-12)


@given(vec3, vec3, energy, energy, vec3, unit, unit)
def test_poly_conserves_momentum_and_total_energy(v, vs, I, Is, s, r, R):
    sigma = unit_vector(s)
    m = 1.7
    vp, vsp, Ip, Isp = poly_transform(v, vs, I, Is, m, CollisionParamsPoly(sigma, r, R))
    assert Ip >= 0 and Isp >= 0
    scale = 1.0 + np.abs(v).sum() + np.abs(vs).sum()
    np.testing.assert_allclose(vp + vsp, v + vs, atol=1e-12 * scale)
    e0 = 0.5 * m * (v @ v + vs @ vs) + I + Is
    e1 = 0.5 * m * (vp @ vp + vsp @ vsp) + Ip + Isp
    assert e1 == pytest.approx(e0, rel=1e-12, abs=1e-12)
    # the centre-of-mass pair energy is redistributed as R E / (1 - R) E
    E = total_energy(v, vs, I, Is, m)
    assert total_energy(vp, vsp, Ip, Isp, m) == pytest.approx(E, rel=1e-12, abs=1e-12)


def test_poly_zero_energy_pair_is_unchanged():
    v = np.array([1.0, 2.0, 3.0])
    vp, vsp, Ip, Isp = poly_transform(v, v, 0.0, 0.0, sigma=np.array([0, 0, 1.0]), r=0.3, R=0.6)
    np.testing.assert_array_equal(vp, v)
    np.testing.assert_array_equal(vsp, v)
    assert Ip == 0.0 and Isp == 0.0


def test_bracket_power_fractional():
    v = np.array([[1.0, 1.0, 0.0]])
    assert bracket_power(v, np.array([0.5]), "total", 3.0)[0] == pytest.approx(2.5 ** 1.5)


def test_ensemble_totals():
    rng = np.random.default_rng(1)
    parts = [Particle(rng.normal(size=3), float(rng.random()), 0.5) for _ in range(4)]
    ens = Ensemble.from_particles(parts, mass=2.0)
    assert len(ens) == 4
    kin = sum(0.5 * 2.0 * 0.5 * p.v @ p.v for p in parts)
    assert ens.kinetic_energy() == pytest.approx(kin)
    assert ens.total_energy() == pytest.approx(kin + sum(0.5 * p.I for p in parts))
    c = ens.copy()
    c.v[0, 0] += 1.0
    assert ens.v[0, 0] != c.v[0, 0]

"""Closed-form test densities (Gaussian in v times Gamma in I) and their moments."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, special, stats

from .kinematics import FAMILIES, Ensemble


@lru_cache(maxsize=None)
def _gen_laguerre(n: int, a: float):
    return special.roots_genlaguerre(n, a)


def _gamma_expect(func, shape: float, scale: float, n: int = 96) -> float:
    """``E[func(Y)]`` for ``Y ~ Gamma(shape, scale)`` by generalised Gauss-Laguerre."""
    x, w = _gen_laguerre(n, shape - 1.0)
    return float(np.sum(w * func(scale * x)) / math.gamma(shape))


@dataclass(frozen=True)
class TestDensity:
    """``rho * N(v; V, T) * Gamma(I; alpha_I + 1, theta)``.

    ``T`` is the per-component velocity variance; pass a 3-sequence for an
    anisotropic (diagonal) Gaussian.  ``m`` is the molecular mass used by
    the brackets.
    """

    __test__ = False  # not a pytest class

    rho: float = 1.0
    V: tuple = (0.0, 0.0, 0.0)
    T: float | tuple = 1.0
    theta: float = 1.0
    alpha_I: float = 0.0
    m: float = 1.0

    def __post_init__(self):
        V = tuple(float(x) for x in np.asarray(self.V, dtype=float).reshape(3))
        object.__setattr__(self, "V", V)
        T = np.asarray(self.T, dtype=float)
        if T.ndim == 0:
            object.__setattr__(self, "T", float(T))
        else:
            object.__setattr__(self, "T", tuple(float(x) for x in T.reshape(3)))
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if np.any(np.asarray(self.T) <= 0):
            raise ValueError("T must be positive")
        if not self.theta > 0:
            raise ValueError("theta must be positive")
        if not self.alpha_I > -1:
            raise ValueError("alpha_I must exceed -1")
        if not self.m > 0:
            raise ValueError("m must be positive")

    @property
    def T_vec(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.T, dtype=float), (3,)).copy()

    @property
    def isotropic(self) -> bool:
        return np.ndim(self.T) == 0

    @property
    def components(self):
        return ((1.0, self),)

    def sample(self, rng: np.random.Generator, n: int):
        """``n`` exact draws of ``(v, I)`` from ``f / rho``."""
        v = np.asarray(self.V) + rng.normal(size=(n, 3)) * np.sqrt(self.T_vec)
        I = rng.gamma(self.alpha_I + 1.0, self.theta, n)
        return v, I

    def mean_kinetic(self) -> float:
        """``E |v|^2 / 2``."""
        return 0.5 * (float(np.sum(self.T_vec)) + float(np.dot(self.V, self.V)))

    def mean_internal(self) -> float:
        return (self.alpha_I + 1.0) * self.theta

    def moment(self, family: str, k: float) -> float:
        """``int f <.>^k`` for any real ``k >= 0``."""
        if family not in FAMILIES:
            raise ValueError(f"unknown family {family!r}")
        if k < 0:
            raise ValueError("moment order must be non-negative")
        if k == 0:
            return self.rho
        if k == 2:
            kin = self.mean_kinetic()
            intl = self.mean_internal() / self.m
            extra = {"v": kin, "I": intl, "total": kin + intl}[family]
            return self.rho * (1.0 + extra)
        return self.rho * _fractional_moment(self, family, float(k))


def _fractional_moment(d: TestDensity, family: str, k: float) -> float:
    p = 0.5 * k
    a_I = d.alpha_I + 1.0
    s_I = d.theta / d.m
    if family == "I":
        return _gamma_expect(lambda y: (1.0 + y) ** p, a_I, s_I)

    if family == "v":
        def inner(x):
            return (1.0 + x) ** p
    else:
        def inner(x):
            x = np.atleast_1d(x)
            return np.array([_gamma_expect(lambda y, xx=xx: (1.0 + xx + y) ** p, a_I, s_I) for xx in x])

    if d.isotropic:
        T = d.T
        V2 = float(np.dot(d.V, d.V))
        if V2 == 0.0:
            # |v|^2 / 2 ~ Gamma(3/2, T)
            if family == "v":
                return _gamma_expect(inner, 1.5, T)
            x, wx = _gen_laguerre(96, 0.5)
            y, wy = _gen_laguerre(96, a_I - 1.0)
            vals = (1.0 + T * x[:, None] + s_I * y[None, :]) ** p
            return float(wx @ vals @ wy / (math.gamma(1.5) * math.gamma(a_I)))
        else:
            # |v|^2 / T ~ noncentral chi^2(3, |V|^2 / T), so x = |v|^2 / 2 has this pdf
            nc = stats.ncx2(3, V2 / T, scale=0.5 * T)
            pdf = nc.pdf
        val, _ = integrate.quad(lambda x: float(pdf(x) * np.squeeze(inner(x))), 0.0, np.inf,
                                epsabs=0.0, epsrel=1e-10, limit=400)
        return val

    # anisotropic Gaussian: tensor Gauss-Hermite
    xh, wh = np.polynomial.hermite_e.hermegauss(48)
    wh = wh / math.sqrt(2.0 * math.pi)
    sd = np.sqrt(d.T_vec)
    g0 = d.V[0] + sd[0] * xh
    g1 = d.V[1] + sd[1] * xh
    g2 = d.V[2] + sd[2] * xh
    X = 0.5 * (g0[:, None, None] ** 2 + g1[None, :, None] ** 2 + g2[None, None, :] ** 2)
    W = wh[:, None, None] * wh[None, :, None] * wh[None, None, :]
    if family == "v":
        return float(np.sum(W * (1.0 + X) ** p))
    y, wy = _gen_laguerre(64, a_I - 1.0)
    wy = wy / math.gamma(a_I)
    vals = (1.0 + X[..., None] + s_I * y) ** p
    return float(np.sum(W[..., None] * wy * vals))


@dataclass(frozen=True)
class MixtureDensity:
    """Finite sum of :class:`TestDensity` components (e.g. a bimodal start)."""

    parts: tuple = field(default_factory=tuple)

    def __post_init__(self):
        parts = tuple(self.parts)
        if not parts:
            raise ValueError("mixture needs at least one component")
        masses = {p.m for p in parts}
        if len(masses) != 1:
            raise ValueError("mixture components must share the molecular mass")
        object.__setattr__(self, "parts", parts)

    @property
    def rho(self) -> float:
        return sum(p.rho for p in self.parts)

    @property
    def m(self) -> float:
        return self.parts[0].m

    @property
    def components(self):
        rho = self.rho
        return tuple((p.rho / rho, p) for p in self.parts)

    def sample(self, rng: np.random.Generator, n: int):
        probs = np.array([p.rho for p in self.parts]) / self.rho
        counts = rng.multinomial(n, probs)
        vs, Is = [], []
        for c, p in zip(counts, self.parts):
            v, I = p.sample(rng, int(c))
            vs.append(v)
            Is.append(I)
        v = np.concatenate(vs)
        I = np.concatenate(Is)
        order = rng.permutation(n)
        return v[order], I[order]

    def moment(self, family: str, k: float) -> float:
        return sum(p.moment(family, k) for p in self.parts)


def bimodal(rho: float = 1.0, drift: float = 1.5, T: float = 0.5, theta: float = 1.0,
            alpha_I: float = 0.0, m: float = 1.0) -> MixtureDensity:
    """Two equal-mass Gaussians drifting at ``+/- drift`` along x."""
    half = 0.5 * rho
    return MixtureDensity((
        TestDensity(half, (drift, 0.0, 0.0), T, theta, alpha_I, m),
        TestDensity(half, (-drift, 0.0, 0.0), T, theta, alpha_I, m),
    ))


def energy_family(rho: float, m2: float, alpha_I: float = 0.0, m: float = 1.0,
                  fractions=(0.15, 0.25, 0.35, 0.45, 0.55, 0.65, 0.75, 0.85)):
    """Centred densities sharing mass ``rho`` and total 2-moment ``m2``.

    The member with kinetic fraction ``s`` puts ``s`` of the specific energy
    ``m2 / rho - 1`` into translation and the rest into internal energy.
    """
    e = m2 / rho - 1.0
    if not e > 0:
        raise ValueError("m2 must exceed rho")
    out = []
    for s in fractions:
        if not 0.0 < s < 1.0:
            raise ValueError("kinetic fractions must lie in (0, 1)")
        T = s * e / 1.5
        theta = (1.0 - s) * e * m / (alpha_I + 1.0)
        out.append(TestDensity(rho, (0.0, 0.0, 0.0), T, theta, alpha_I, m))
    return out


def sample_ensemble(density, n: int, rng: np.random.Generator, time: float = 0.0) -> Ensemble:
    """Equal-weight ensemble with total weight ``rho``."""
    v, I = density.sample(rng, n)
    w = np.full(n, density.rho / n)
    return Ensemble(v, I, w, density.m, time)

"""Brackets, moments and the two binary collision maps.

Everything here is vectorised over a leading particle/pair axis: velocities
are ``(..., 3)`` arrays, energies and weights are ``(...)`` arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

FAMILIES = ("v", "I", "total")


def _check_energy(I) -> np.ndarray:
    I = np.asarray(I, dtype=float)
    if np.any(I < 0):
        raise ValueError("internal energy must be non-negative")
    return I


def _check_mass(m: float) -> float:
    if not m > 0:
        raise ValueError(f"mass must be positive, got {m!r}")
    return float(m)


def bracket_v(v) -> np.ndarray:
    """``sqrt(1 + |v|^2 / 2)``."""
    v = np.asarray(v, dtype=float)
    return np.sqrt(1.0 + 0.5 * np.einsum("...i,...i->...", v, v))


def bracket_I(I, m: float = 1.0) -> np.ndarray:
    """``sqrt(1 + I / m)``."""
    I = _check_energy(I)
    return np.sqrt(1.0 + I / _check_mass(m))


def bracket_vI(v, I, m: float = 1.0) -> np.ndarray:
    """``sqrt(1 + |v|^2 / 2 + I / m)``."""
    v = np.asarray(v, dtype=float)
    I = _check_energy(I)
    return np.sqrt(1.0 + 0.5 * np.einsum("...i,...i->...", v, v) + I / _check_mass(m))


def bracket_sq(v, I, family: str, m: float = 1.0) -> np.ndarray:
    """Squared bracket of the requested family (avoids a sqrt for even powers)."""
    if family == "v":
        v = np.asarray(v, dtype=float)
        return 1.0 + 0.5 * np.einsum("...i,...i->...", v, v)
    if family == "I":
        return 1.0 + _check_energy(I) / _check_mass(m)
    if family == "total":
        v = np.asarray(v, dtype=float)
        return 1.0 + 0.5 * np.einsum("...i,...i->...", v, v) + _check_energy(I) / _check_mass(m)
    raise ValueError(f"unknown moment family {family!r}; expected one of {FAMILIES}")


def bracket_power(v, I, family: str, k: float, m: float = 1.0) -> np.ndarray:
    """``<.>^k`` for ``family`` in {"v", "I", "total"}; ``k`` may be fractional."""
    return bracket_sq(v, I, family, m) ** (0.5 * k)


@dataclass
class Particle:
    v: np.ndarray
    I: float = 0.0
    w: float = 1.0

    def __post_init__(self):
        self.v = np.asarray(self.v, dtype=float).reshape(3)
        if self.I < 0:
            raise ValueError("internal energy must be non-negative")
        if not self.w > 0:
            raise ValueError("statistical weight must be positive")


@dataclass
class Ensemble:
    """Structure-of-arrays particle ensemble.

    ``v`` has shape (N, 3), ``I`` and ``w`` shape (N,).  ``mass`` is the
    molecular mass shared by every particle.
    """

    v: np.ndarray
    I: np.ndarray
    w: np.ndarray
    mass: float = 1.0
    time: float = 0.0

    def __post_init__(self):
        self.v = np.ascontiguousarray(self.v, dtype=float).reshape(-1, 3)
        self.I = np.ascontiguousarray(self.I, dtype=float).reshape(-1)
        self.w = np.ascontiguousarray(self.w, dtype=float).reshape(-1)
        n = self.v.shape[0]
        if self.I.shape[0] != n or self.w.shape[0] != n:
            raise ValueError("v, I and w must describe the same number of particles")
        if np.any(self.I < 0):
            raise ValueError("internal energy must be non-negative")
        if np.any(self.w <= 0):
            raise ValueError("statistical weights must be positive")
        _check_mass(self.mass)
        if self.time < 0:
            raise ValueError("time must be non-negative")

    @classmethod
    def from_particles(cls, particles, mass: float = 1.0, time: float = 0.0) -> "Ensemble":
        particles = list(particles)
        return cls(
            v=np.array([p.v for p in particles]).reshape(-1, 3),
            I=np.array([p.I for p in particles], dtype=float),
            w=np.array([p.w for p in particles], dtype=float),
            mass=mass,
            time=time,
        )

    def __len__(self) -> int:
        return self.v.shape[0]

    def particle(self, i: int) -> Particle:
        return Particle(self.v[i].copy(), float(self.I[i]), float(self.w[i]))

    def copy(self) -> "Ensemble":
        return Ensemble(self.v.copy(), self.I.copy(), self.w.copy(), self.mass, self.time)

    def momentum(self) -> np.ndarray:
        return self.w @ self.v

    def kinetic_energy(self) -> float:
        return float(0.5 * self.mass * (self.w @ np.einsum("ij,ij->i", self.v, self.v)))

    def total_energy(self) -> float:
        return self.kinetic_energy() + float(self.w @ self.I)


def moment(ensemble: Ensemble, family: str, k: float) -> float:
    """Weighted sum of ``<.>^k`` over the ensemble."""
    if len(ensemble) == 0:
        raise ValueError("moment of an empty ensemble")
    if k < 0:
        raise ValueError("moment order must be non-negative")
    b = bracket_power(ensemble.v, ensemble.I, family, k, ensemble.mass)
    return float(ensemble.w @ b)


@dataclass(frozen=True)
class CollisionParamsFrozen:
    sigma: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))

    def __post_init__(self):
        s = np.asarray(self.sigma, dtype=float).reshape(3)
        if abs(np.linalg.norm(s) - 1.0) > 1e-12:
            raise ValueError("sigma must be a unit vector")
        object.__setattr__(self, "sigma", s)


@dataclass(frozen=True)
class CollisionParamsPoly:
    sigma: np.ndarray
    r: float
    R: float

    def __post_init__(self):
        s = np.asarray(self.sigma, dtype=float).reshape(3)
        if abs(np.linalg.norm(s) - 1.0) > 1e-12:
            raise ValueError("sigma must be a unit vector")
        if not (0.0 <= self.r <= 1.0 and 0.0 <= self.R <= 1.0):
            raise ValueError("r and R must lie in [0, 1]")
        object.__setattr__(self, "sigma", s)


def _sigma_of(params):
    return params.sigma if hasattr(params, "sigma") else np.asarray(params, dtype=float)


def frozen_transform(v, v_star, params):
    """Post-collision velocities of an elastic (frozen) collision.

    ``params`` is a :class:`CollisionParamsFrozen` or a raw ``(..., 3)``
    array of unit vectors.  Internal energies are not involved at all.
    """
    v = np.asarray(v, dtype=float)
    v_star = np.asarray(v_star, dtype=float)
    sigma = _sigma_of(params)
    center = 0.5 * (v + v_star)
    u = v - v_star
    half = 0.5 * np.sqrt(np.einsum("...i,...i->...", u, u))[..., None]
    return center + half * sigma, center - half * sigma


def total_energy(v, v_star, I, I_star, m: float = 1.0) -> np.ndarray:
    """Pair energy in the centre-of-mass frame, ``m |u|^2 / 4 + I + I*``."""
    u = np.asarray(v, dtype=float) - np.asarray(v_star, dtype=float)
    return 0.25 * m * np.einsum("...i,...i->...", u, u) + np.asarray(I) + np.asarray(I_star)


def poly_transform(v, v_star, I, I_star, m: float = 1.0, params=None, *, sigma=None, r=None, R=None):
    """Post-collision state of an energy-exchanging (pure polyatomic) collision.

    Either pass a :class:`CollisionParamsPoly` as ``params`` or the raw
    arrays ``sigma``, ``r`` and ``R`` for a batch of pairs.  Pairs with zero
    pair energy come back unchanged.
    """
    if params is not None:
        sigma, r, R = params.sigma, params.r, params.R
    v = np.asarray(v, dtype=float)
    v_star = np.asarray(v_star, dtype=float)
    I = np.asarray(I, dtype=float)
    I_star = np.asarray(I_star, dtype=float)
    r = np.asarray(r, dtype=float)
    R = np.asarray(R, dtype=float)
    E = total_energy(v, v_star, I, I_star, m)
    center = 0.5 * (v + v_star)
    g = np.sqrt(R * E / m)[..., None]
    vp = center + g * sigma
    vsp = center - g * sigma
    Ip = r * (1.0 - R) * E
    Isp = (1.0 - r) * (1.0 - R) * E
    dead = E <= 0
    if np.any(dead):
        vp = np.where(dead[..., None], v, vp)
        vsp = np.where(dead[..., None], v_star, vsp)
        Ip = np.where(dead, I, Ip)
        Isp = np.where(dead, I_star, Isp)
    return vp, vsp, Ip, Isp

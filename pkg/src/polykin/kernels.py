"""Collision kernels, their sandwich bounds and the samplers DSMC needs."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np
from scipy import special

from .kinematics import total_energy

FOUR_PI = 4.0 * math.pi


@dataclass(frozen=True)
class AngularModel:
    """Angular factor ``b(u_hat . sigma)`` of a factorised kernel.

    ``table`` is ``(mu_nodes, values)`` of a piecewise-linear shape on
    ``mu = cos(theta)`` in [-1, 1]; repeated nodes encode jumps.  The shape
    is rescaled so that the integral over the sphere equals ``l1_norm``.
    """

    kind: str = "isotropic"
    l1_norm: float = 1.0
    table: Optional[tuple] = None

    def __post_init__(self):
        if self.kind not in ("isotropic", "tabulated"):
            raise ValueError(f"unknown angular model kind {self.kind!r}")
        if not self.l1_norm > 0:
            raise ValueError("angular L1 norm must be positive")
        if self.kind == "tabulated":
            if self.table is None:
                raise ValueError("tabulated angular model needs a table")
            mu, vals = (np.asarray(a, dtype=float) for a in self.table)
            if mu.ndim != 1 or mu.shape != vals.shape or mu.size < 2:
                raise ValueError("angular table must be two 1-D arrays of equal length >= 2")
            if mu[0] != -1.0 or mu[-1] != 1.0 or np.any(np.diff(mu) < 0):
                raise ValueError("angular table nodes must increase from -1 to 1")
            if np.any(vals < 0):
                raise ValueError("angular table values must be non-negative")
            mass = np.sum(0.5 * (vals[1:] + vals[:-1]) * np.diff(mu))
            if not mass > 0:
                raise ValueError("angular table has zero mass")
            object.__setattr__(self, "table", (tuple(mu), tuple(vals)))

    @classmethod
    def isotropic(cls, l1_norm: float = 1.0) -> "AngularModel":
        return cls("isotropic", l1_norm)

    @classmethod
    def tabulated(cls, mu, values, l1_norm: float = 1.0) -> "AngularModel":
        return cls("tabulated", l1_norm, (tuple(mu), tuple(values)))

    @cached_property
    def _shape(self):
        mu, vals = (np.asarray(a) for a in self.table)
        seg = 0.5 * (vals[1:] + vals[:-1]) * np.diff(mu)
        mass = seg.sum()
        cdf = np.concatenate([[0.0], np.cumsum(seg)]) / mass
        return mu, vals / mass, cdf

    def __call__(self, mu) -> np.ndarray:
        """Pointwise value ``b(mu)``."""
        mu = np.asarray(mu, dtype=float)
        if self.kind == "isotropic":
            return np.full(mu.shape, self.l1_norm / FOUR_PI)
        nodes, dens, _ = self._shape
        # dens integrates to 1 over mu, and the azimuth contributes 2 pi
        return self.l1_norm * np.interp(mu, nodes, dens) / (2.0 * math.pi)

    def sample_mu(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Draw ``mu = u_hat . sigma`` with density proportional to ``b(mu)``."""
        if self.kind == "isotropic":
            return rng.uniform(-1.0, 1.0, n)
        nodes, dens, cdf = self._shape
        u = rng.random(n)
        j = np.clip(np.searchsorted(cdf, u, side="right") - 1, 0, len(nodes) - 2)
        # invert the quadratic cdf inside each linear segment
        x0, x1 = nodes[j], nodes[j + 1]
        p0, p1 = dens[j], dens[j + 1]
        h = x1 - x0
        slope = np.where(h > 0, (p1 - p0) / np.where(h > 0, h, 1.0), 0.0)
        need = u - cdf[j]
        lin = np.abs(slope) < 1e-14
        safe_slope = np.where(lin, 1.0, slope)
        disc = np.maximum(p0 * p0 + 2.0 * safe_slope * need, 0.0)
        dx_quad = 2.0 * need / (p0 + np.sqrt(disc) + (p0 + np.sqrt(disc) == 0))
        dx_lin = need / np.where(p0 > 0, p0, 1.0)
        dx = np.where(lin, dx_lin, dx_quad)
        return np.clip(x0 + dx, x0, x1)

    def sphere_integral(self, n_nodes: int = 64) -> float:
        """``int_{S^2} b(u.sigma) dsigma`` by Gauss-Legendre in ``mu``."""
        x, wts = np.polynomial.legendre.leggauss(n_nodes)
        if self.kind == "isotropic":
            return float(2.0 * math.pi * np.sum(wts * self(x)))
        # integrate segment by segment so kinks and jumps cost nothing
        nodes = np.asarray(self.table[0])
        total = 0.0
        for a, b in zip(nodes[:-1], nodes[1:]):
            if b <= a:
                continue
            mid, half = 0.5 * (a + b), 0.5 * (b - a)
            # midpoint of the open segment avoids the ambiguous value at a jump
            xs = np.clip(mid + half * x, np.nextafter(a, b), np.nextafter(b, a))
            total += half * np.sum(wts * self(xs))
        return 2.0 * math.pi * total


def orthonormal_frame(u_hat: np.ndarray):
    """Two unit vectors completing ``u_hat`` (N, 3) to an orthonormal basis."""
    u_hat = np.asarray(u_hat, dtype=float).reshape(-1, 3)
    pick = np.where(np.abs(u_hat[:, 0:1]) < 0.9, np.array([[1.0, 0.0, 0.0]]), np.array([[0.0, 1.0, 0.0]]))
    e1 = np.cross(u_hat, pick)
    e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
    e2 = np.cross(u_hat, e1)
    return e1, e2


def sample_sigma(angular: AngularModel, u_hat, rng: np.random.Generator) -> np.ndarray:
    """Unit vectors distributed as ``b(u_hat . sigma) / ||b||`` around each ``u_hat``."""
    u_hat = np.asarray(u_hat, dtype=float)
    single = u_hat.ndim == 1
    u_hat = u_hat.reshape(-1, 3)
    n = u_hat.shape[0]
    if angular.kind == "isotropic":
        out = rng.normal(size=(n, 3))
        out /= np.linalg.norm(out, axis=1, keepdims=True)
        return out[0] if single else out
    mu = angular.sample_mu(rng, n)
    phi = rng.uniform(0.0, 2.0 * math.pi, n)
    e1, e2 = orthonormal_frame(u_hat)
    s = np.sqrt(np.maximum(1.0 - mu * mu, 0.0))
    out = mu[:, None] * u_hat + (s * np.cos(phi))[:, None] * e1 + (s * np.sin(phi))[:, None] * e2
    out /= np.linalg.norm(out, axis=1, keepdims=True)
    return out[0] if single else out


def _one(r, R):
    return np.ones(np.broadcast(np.asarray(r), np.asarray(R)).shape)


def rR_measure_nodes(alpha: float, n: int = 32):
    """Gauss-Jacobi rule for ``r^a (1-r)^a (1-R)^(2a+1) sqrt(R) dr dR`` on [0,1]^2.

    Returns flattened ``(r, R, weights)`` of length ``n * n``.
    """
    # Jacobi weight (1-x)^p (1+x)^q on [-1, 1]; map x -> (1+x)/2
    xr, wr = special.roots_jacobi(n, alpha, alpha)
    r = 0.5 * (1.0 + xr)
    wr = wr * 0.5 ** (2 * alpha + 1)
    xR, wR = special.roots_jacobi(n, 2 * alpha + 1, 0.5)
    R = 0.5 * (1.0 + xR)
    wR = wR * 0.5 ** (2 * alpha + 2.5)
    rr, RR = np.meshgrid(r, R, indexing="ij")
    ww = np.outer(wr, wR)
    return rr.ravel(), RR.ravel(), ww.ravel()


def rR_measure_mass(alpha: float) -> float:
    """Total mass of the (r, R) measure: ``B(a+1, a+1) B(3/2, 2a+2)``."""
    return float(special.beta(alpha + 1, alpha + 1) * special.beta(1.5, 2 * alpha + 2))


@dataclass(frozen=True)
class KernelSpec:
    """One collision channel.

    ``tilde_B`` evaluates the kinetic part of the kernel on batches of pairs:
    ``tilde_B(v, v_star, I, I_star)`` for the frozen channel and
    ``tilde_B(v, v_star, I, I_star, r, R)`` for the polyatomic one.  If left
    as ``None`` the saturating default ``(E/m)^(zeta/2)`` (times ``rR_upper``
    for the polyatomic channel) is used.
    """

    channel: str
    zeta: float
    c_lower: float = 1.0
    c_upper: float = 1.0
    angular: AngularModel = field(default_factory=AngularModel.isotropic)
    alpha: float = 0.0
    rR_lower: Callable = _one
    rR_upper: Callable = _one
    rR_upper_max: float = 1.0
    mass: float = 1.0
    tilde_B: Optional[Callable] = None

    def __post_init__(self):
        if self.channel not in ("frozen", "polyatomic"):
            raise ValueError(f"unknown channel {self.channel!r}")
        if self.channel == "frozen":
            if not 0.0 <= self.zeta <= 2.0:
                raise ValueError(f"frozen channel needs zeta in [0, 2], got {self.zeta}")
        elif not 0.0 < self.zeta <= 2.0:
            raise ValueError(f"polyatomic channel needs zeta in (0, 2], got {self.zeta}")
        if not 0.0 < self.c_lower <= self.c_upper:
            raise ValueError("need 0 < c_lower <= c_upper")
        if not self.alpha > -1.0:
            raise ValueError("alpha must exceed -1")
        if not self.mass > 0:
            raise ValueError("mass must be positive")
        if not self.rR_upper_max > 0:
            raise ValueError("rR_upper_max must be positive")

    @property
    def is_poly(self) -> bool:
        return self.channel == "polyatomic"

    @cached_property
    def _nodes(self):
        return rR_measure_nodes(self.alpha)

    @cached_property
    def rR_upper_norm(self) -> float:
        """Weighted L1 norm of ``rR_upper`` against the (r, R) measure."""
        r, R, w = self._nodes
        return float(np.sum(w * self.rR_upper(r, R)))

    @cached_property
    def rR_lower_norm(self) -> float:
        r, R, w = self._nodes
        return float(np.sum(w * self.rR_lower(r, R)))

    def energy_factor(self, E) -> np.ndarray:
        """``(E/m)^(zeta/2)`` with the convention ``0^0 = 1``."""
        return np.power(np.asarray(E, dtype=float) / self.mass, 0.5 * self.zeta)


def frozen_kernel(zeta: float = 1.0, c_lower: float = 1.0, c_upper: float = 1.0,
                  angular: AngularModel | None = None, mass: float = 1.0) -> KernelSpec:
    """Frozen channel with ``B~ = (E/m)^(zeta/2) * s``, ``s`` between the sandwich constants.

    When ``c_lower < c_upper`` the factor is ``c + (C - c) * 4 I I* / (I + I*)^2``,
    which is symmetric in the pair and untouched by frozen collisions.
    """
    angular = angular or AngularModel.isotropic()
    if c_lower == c_upper:
        tb = None
    else:
        def tb(v, v_star, I, I_star, _c=c_lower, _C=c_upper, _z=zeta, _m=mass):
            E = total_energy(v, v_star, I, I_star, _m)
            s = I + I_star
            mix = np.where(s > 0, 4.0 * I * I_star / np.where(s > 0, s * s, 1.0), 0.0)
            return (_c + (_C - _c) * mix) * np.power(E / _m, 0.5 * _z)
    return KernelSpec("frozen", zeta, c_lower, c_upper, angular, mass=mass, tilde_B=tb)


def poly_kernel(zeta: float = 1.0, alpha: float = 0.0, angular: AngularModel | None = None,
                mass: float = 1.0, lb_factor: float = 1.0, rR_upper: Callable = _one,
                rR_upper_max: float = 1.0) -> KernelSpec:
    """Polyatomic channel ``B~ = rR_upper(r, R) (E/m)^(zeta/2)``.

    ``lb_factor`` declares ``rR_lower = lb_factor * rR_upper`` without changing
    the kernel itself; it only widens the declared sandwich.
    """
    if not 0.0 < lb_factor <= 1.0:
        raise ValueError("lb_factor must lie in (0, 1]")
    angular = angular or AngularModel.isotropic()
    if lb_factor == 1.0:
        lower = rR_upper
    else:
        def lower(r, R, _f=lb_factor, _u=rR_upper):
            return _f * _u(r, R)
    return KernelSpec("polyatomic", zeta, 1.0, 1.0, angular, alpha, lower, rR_upper,
                      rR_upper_max, mass)


def kernel_eval(spec: KernelSpec, v, v_star, I, I_star, r=None, R=None) -> np.ndarray:
    """Kinetic factor ``B~`` on a batch of pairs."""
    if spec.is_poly:
        if r is None or R is None:
            raise ValueError("polyatomic kernel needs (r, R)")
        if spec.tilde_B is not None:
            return np.asarray(spec.tilde_B(v, v_star, I, I_star, r, R), dtype=float)
        E = total_energy(v, v_star, I, I_star, spec.mass)
        return spec.rR_upper(r, R) * spec.energy_factor(E)
    if spec.tilde_B is not None:
        return np.asarray(spec.tilde_B(v, v_star, I, I_star), dtype=float)
    E = total_energy(v, v_star, I, I_star, spec.mass)
    return spec.c_upper * spec.energy_factor(E)


def sandwich(spec: KernelSpec, E, r=None, R=None):
    """Lower and upper envelopes of ``B~`` at pair energy ``E``."""
    e = spec.energy_factor(E)
    if spec.is_poly:
        return spec.rR_lower(r, R) * e, spec.rR_upper(r, R) * e
    return spec.c_lower * e, spec.c_upper * e


def sample_rR(spec: KernelSpec, rng: np.random.Generator, n: int):
    """Draw ``(r, R)`` with density proportional to ``rR_upper * measure``.

    Beta proposals ``r ~ Beta(a+1, a+1)``, ``R ~ Beta(3/2, 2a+2)`` are exact for
    constant ``rR_upper``; otherwise they are thinned by ``rR_upper / rR_upper_max``.
    """
    if not spec.is_poly:
        raise ValueError("sample_rR needs a polyatomic kernel")
    a = spec.alpha
    if spec.rR_upper is _one:
        return rng.beta(a + 1, a + 1, n), rng.beta(1.5, 2 * a + 2, n)
    r_out = np.empty(n)
    R_out = np.empty(n)
    filled = 0
    while filled < n:
        m = max(2 * (n - filled), 64)
        r = rng.beta(a + 1, a + 1, m)
        R = rng.beta(1.5, 2 * a + 2, m)
        keep = rng.random(m) * spec.rR_upper_max < spec.rR_upper(r, R)
        take = min(int(keep.sum()), n - filled)
        r_out[filled:filled + take] = r[keep][:take]
        R_out[filled:filled + take] = R[keep][:take]
        filled += take
    return r_out, R_out


def majorant_rate(spec: KernelSpec, E_max: float) -> float:
    """Upper bound on the parameter-integrated kernel for pairs with ``E <= E_max``."""
    if E_max < 0:
        raise ValueError("E_max must be non-negative")
    e = float(spec.energy_factor(E_max))
    if spec.is_poly:
        return spec.angular.l1_norm * spec.rR_upper_norm * e
    return spec.angular.l1_norm * spec.c_upper * e


def pair_rate(spec: KernelSpec, v, v_star, I, I_star) -> np.ndarray:
    """Exact parameter-integrated kernel ``int B dsigma (dr dR)`` per pair."""
    if not spec.is_poly:
        return spec.angular.l1_norm * kernel_eval(spec, v, v_star, I, I_star)
    if spec.tilde_B is None:
        E = total_energy(v, v_star, I, I_star, spec.mass)
        return spec.angular.l1_norm * spec.rR_upper_norm * spec.energy_factor(E)
    r, R, w = spec._nodes
    v = np.asarray(v, dtype=float).reshape(-1, 3)
    v_star = np.asarray(v_star, dtype=float).reshape(-1, 3)
    I = np.asarray(I, dtype=float).reshape(-1)
    I_star = np.asarray(I_star, dtype=float).reshape(-1)
    out = np.empty(v.shape[0])
    for i in range(v.shape[0]):
        vals = spec.tilde_B(v[i], v_star[i], I[i], I_star[i], r, R)
        out[i] = np.sum(w * vals)
    return spec.angular.l1_norm * out


@dataclass(frozen=True)
class MixtureSpec:
    """``omega * polyatomic + (1 - omega) * frozen``."""

    omega: float
    frozen: KernelSpec
    poly: KernelSpec

    def __post_init__(self):
        if not 0.0 <= self.omega <= 1.0:
            raise ValueError(f"omega must lie in [0, 1], got {self.omega}")
        if self.frozen.channel != "frozen" or self.poly.channel != "polyatomic":
            raise ValueError("MixtureSpec needs one frozen and one polyatomic kernel")
        if self.frozen.mass != self.poly.mass:
            raise ValueError("both channels must share the molecular mass")

    @property
    def mass(self) -> float:
        return self.frozen.mass

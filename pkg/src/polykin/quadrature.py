"""Monte Carlo weak forms of the collision operators and inequality verdicts.

Pairs are drawn exactly from ``f (x) g``; collision parameters are drawn from
the angular model and the (r, R) measure, so each sample carries only the
kinetic factor ``B~`` as its weight.  Standard errors come from batch means.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from . import rng as rngmod
from .kernels import KernelSpec, kernel_eval, rR_measure_mass, sample_sigma
from .kinematics import bracket_power, frozen_transform, poly_transform

N_BATCHES = 32
PASS, FAIL, INCONCLUSIVE = "pass", "fail", "inconclusive"


@dataclass(frozen=True)
class WeakFormEstimate:
    value: float
    std_error: float
    n_samples: int
    k: float | None
    family: str | None
    channel: str
    flagged: bool = False  # relative standard error above one: integrand too heavy-tailed

    def as_dict(self) -> dict:
        return asdict(self)


# ----------------------------------------------------------------- test functions

@dataclass(frozen=True)
class TestFunction:
    """``chi(v, I)`` evaluated on batches; ``family``/``k`` label bracket powers."""

    __test__ = False

    func: Callable
    family: str | None = None
    k: float | None = None

    def __call__(self, v, I):
        return self.func(v, I)


def bracket_test(family: str, k: float, m: float = 1.0) -> TestFunction:
    return TestFunction(lambda v, I: bracket_power(v, I, family, k, m), family, k)


def internal_test(func: Callable) -> TestFunction:
    """A function of the internal energy alone."""
    return TestFunction(lambda v, I: func(I))


def velocity_component(i: int) -> TestFunction:
    return TestFunction(lambda v, I: v[:, i])


def kinetic_test(m: float = 1.0) -> TestFunction:
    return TestFunction(lambda v, I: 0.5 * m * np.einsum("ij,ij->i", v, v))


def energy_test(m: float = 1.0) -> TestFunction:
    return TestFunction(lambda v, I: 0.5 * m * np.einsum("ij,ij->i", v, v) + I)


def constant_test() -> TestFunction:
    return TestFunction(lambda v, I: np.ones(len(I)))


def _as_test(test_fn, k, family, m):
    if isinstance(test_fn, TestFunction):
        return test_fn
    if isinstance(test_fn, str):
        return bracket_test(test_fn, k, m)
    return TestFunction(test_fn, family, k)


# ----------------------------------------------------------------- sampling core

def _seed_of(rng) -> int:
    if isinstance(rng, np.random.Generator):
        return int(rng.integers(0, 2**63 - 1))
    return 0 if rng is None else int(rng)


def _batch_sizes(n: int, n_batches: int):
    if n < n_batches:
        raise ValueError(f"need at least {n_batches} samples")
    base, extra = divmod(n, n_batches)
    return [base + (1 if b < extra else 0) for b in range(n_batches)]


def _frozen_samples(f, g, chi, spec, gen, n):
    v, I = f.sample(gen, n)
    vs, Is = g.sample(gen, n)
    u = v - vs
    norm = np.linalg.norm(u, axis=1, keepdims=True)
    u_hat = np.where(norm > 0, u / np.where(norm > 0, norm, 1.0), np.array([[1.0, 0.0, 0.0]]))
    sigma = sample_sigma(spec.angular, u_hat, gen)
    vp, vsp = frozen_transform(v, vs, sigma)
    delta = (chi(vp, I) - chi(v, I)) + (chi(vsp, Is) - chi(vs, Is))
    return spec.angular.l1_norm * kernel_eval(spec, v, vs, I, Is) * delta


def _poly_samples(f, g, chi, spec, gen, n):
    v, I = f.sample(gen, n)
    vs, Is = g.sample(gen, n)
    a = spec.alpha
    r = gen.beta(a + 1.0, a + 1.0, n)
    R = gen.beta(1.5, 2.0 * a + 2.0, n)
    sigma = gen.normal(size=(n, 3))
    sigma /= np.linalg.norm(sigma, axis=1, keepdims=True)
    if spec.angular.kind != "isotropic":
        u = v - vs
        norm = np.linalg.norm(u, axis=1, keepdims=True)
        u_hat = np.where(norm > 0, u / np.where(norm > 0, norm, 1.0), np.array([[1.0, 0.0, 0.0]]))
        sigma = sample_sigma(spec.angular, u_hat, gen)
    vp, vsp, Ip, Isp = poly_transform(v, vs, I, Is, spec.mass, sigma=sigma, r=r, R=R)
    delta = (chi(vp, Ip) - chi(v, I)) + (chi(vsp, Isp) - chi(vs, Is))
    weight = spec.angular.l1_norm * rR_measure_mass(a) * kernel_eval(spec, v, vs, I, Is, r, R)
    return weight * delta


def _estimate(sampler, f, g, chi, spec, n, rng, channel, n_batches=N_BATCHES) -> WeakFormEstimate:
    seed = _seed_of(rng)
    tag = rngmod.QUAD
    means = np.empty(n_batches)
    abs_sum = 0.0
    for b, nb in enumerate(_batch_sizes(n, n_batches)):
        gen = rngmod.stream(seed, tag, b)
        x = sampler(f, g, chi, spec, gen, nb)
        if not np.all(np.isfinite(x)):
            raise FloatingPointError("non-finite weak-form sample; the test function is not integrable here")
        means[b] = x.mean()
        abs_sum += np.abs(x).sum()
    sizes = np.asarray(_batch_sizes(n, n_batches), dtype=float)
    value = float(np.sum(means * sizes) / n)
    se = float(np.std(means, ddof=1) / math.sqrt(n_batches))
    scale = abs_sum / n
    flagged = bool(scale > 0 and se > scale)
    return WeakFormEstimate(value * f.rho * g.rho, se * f.rho * g.rho, n, chi.k, chi.family, channel, flagged)


def weak_form_frozen(f, g, test_fn, k: float | None, spec: KernelSpec, n: int, rng=None,
                     family: str | None = None) -> WeakFormEstimate:
    """``int f g B^f [chi' + chi*' - chi - chi*]`` over pairs and ``sigma``.

    ``test_fn`` is a :class:`TestFunction`, a bracket family name (with ``k``)
    or a plain callable ``chi(v, I)``.
    """
    if spec.channel != "frozen":
        raise ValueError("weak_form_frozen needs a frozen kernel")
    chi = _as_test(test_fn, k, family, spec.mass)
    return _estimate(_frozen_samples, f, g, chi, spec, n, rng, "frozen")


def weak_form_poly(f, g, test_fn, k: float | None, spec: KernelSpec, n: int, rng=None,
                   family: str | None = None) -> WeakFormEstimate:
    """``int f g B [chi' + chi*' - chi - chi*]`` over pairs, ``sigma`` and ``(r, R)``."""
    if spec.channel != "polyatomic":
        raise ValueError("weak_form_poly needs a polyatomic kernel")
    chi = _as_test(test_fn, k, family, spec.mass)
    return _estimate(_poly_samples, f, g, chi, spec, n, rng, "polyatomic")


def combine_mixed(poly: WeakFormEstimate | None, frozen: WeakFormEstimate | None,
                  omega: float) -> WeakFormEstimate:
    """``int Q_omega(f, f) chi`` from the two symmetrised forms of ``(f, f)``."""
    val = var = 0.0
    flagged = False
    ref = poly or frozen
    for est, wt in ((poly, omega), (frozen, 1.0 - omega)):
        if wt <= 0:
            continue
        if est is None:
            raise ValueError("missing channel estimate for a positive weight")
        val += 0.5 * wt * est.value
        var += (0.5 * wt * est.std_error) ** 2
        flagged |= est.flagged
    return WeakFormEstimate(val, math.sqrt(var), ref.n_samples, ref.k, ref.family, "mixed", flagged)


def weak_form_mixed(f, test_fn, k: float | None, mixture, n: int, rng=None,
                    family: str | None = None) -> WeakFormEstimate:
    """``int Q_omega(f, f) chi``: half of the symmetrised forms, mixed with weight ``omega``."""
    seed = _seed_of(rng)
    om = mixture.omega
    chi = _as_test(test_fn, k, family, mixture.mass)
    p = q = None
    if om > 0:
        p = weak_form_poly(f, f, chi, k, mixture.poly, n, rngmod.stream(seed, 1).integers(2**62))
    if om < 1:
        q = weak_form_frozen(f, f, chi, k, mixture.frozen, n, rngmod.stream(seed, 2).integers(2**62))
    return combine_mixed(p, q, om)


def verify_inequality(estimate: WeakFormEstimate, rhs: float, n_sigma: float = 3.0) -> str:
    """``pass`` if the estimate sits below ``rhs`` by ``n_sigma`` errors, ``fail`` if above."""
    if not math.isfinite(rhs):
        raise ValueError("right-hand side must be finite")
    if estimate.value + n_sigma * estimate.std_error <= rhs:
        return PASS
    if estimate.value - n_sigma * estimate.std_error > rhs:
        return FAIL
    return INCONCLUSIVE


# ----------------------------------------------------------------- fitted externals

@dataclass(frozen=True)
class FittedExternals:
    """Surrogates for the pure polyatomic drift constants, fitted to MC weak forms.

    ``A_bar``/``B_bar`` bound ``int Q(f,f) <v,I>^k`` by ``-A_bar m_{k+zeta} + B_bar``
    and ``D_bar`` bounds it by ``D_bar m_k`` on every fitted density.
    """

    k: float
    zeta: float
    A_bar: float
    B_bar: float
    D_bar: float
    m_k: tuple
    m_k_zeta: tuple
    values: tuple
    std_errors: tuple
    n_samples: int

    def as_dict(self) -> dict:
        return asdict(self)


def fit_externals(spec: KernelSpec, densities: Sequence, k: float, n: int = 100_000,
                  rng=None, n_sigma: float = 3.0) -> FittedExternals:
    """Fit ``-A m_{k+zeta} + B`` to ``int Q(f,f) <v,I>^k`` over ``densities``.

    The slope comes from least squares; ``B`` is then raised until the line
    sits ``n_sigma`` errors above every point, and ``D`` is the smallest
    non-negative slope through the origin with the same property.
    """
    if spec.channel != "polyatomic":
        raise ValueError("externals are fitted on the polyatomic channel")
    if len(densities) < 2:
        raise ValueError("need at least two densities to fit a slope")
    seed = _seed_of(rng)
    z = spec.zeta
    W, se, mk, mkz = [], [], [], []
    for i, d in enumerate(densities):
        est = weak_form_poly(d, d, "total", k, spec, n, rngmod.stream(seed, rngmod.FIT, i).integers(2**62))
        W.append(0.5 * est.value)
        se.append(0.5 * est.std_error)
        mk.append(d.moment("total", k))
        mkz.append(d.moment("total", k + z))
    W, se, mk, mkz = (np.asarray(a, dtype=float) for a in (W, se, mk, mkz))
    X = np.column_stack([-mkz, np.ones_like(mkz)])
    coef, *_ = np.linalg.lstsq(X / mkz[:, None], W / mkz, rcond=None)
    A_bar = float(coef[0])
    if not A_bar > 0:
        raise ValueError(f"fitted drift slope is not negative (A_bar = {A_bar:.3g}); order k too small")
    B_bar = float(max(np.max(W + n_sigma * se + A_bar * mkz), 0.0))
    D_bar = float(max(np.max((W + n_sigma * se) / mk), 0.0))
    return FittedExternals(k, z, A_bar, B_bar, D_bar, tuple(mk), tuple(mkz), tuple(W), tuple(se), n)


@dataclass(frozen=True)
class FittedRate:
    """Smallest ``D`` with ``int Q(f,f) <v,I>^k <= D m_k`` on every fitted density (``n_sigma`` margin)."""

    k: float
    D_bar: float
    m_k: tuple
    values: tuple
    std_errors: tuple
    n_samples: int

    def as_dict(self) -> dict:
        return asdict(self)


def fit_linear_rate(spec: KernelSpec, densities: Sequence, k: float, n: int = 100_000,
                    rng=None, n_sigma: float = 3.0) -> FittedRate:
    if spec.channel != "polyatomic":
        raise ValueError("the linear rate is fitted on the polyatomic channel")
    if not densities:
        raise ValueError("need at least one density")
    seed = _seed_of(rng)
    W, se, mk = [], [], []
    for i, d in enumerate(densities):
        est = weak_form_poly(d, d, "total", k, spec, n, rngmod.stream(seed, rngmod.FIT, i).integers(2**62))
        W.append(0.5 * est.value)
        se.append(0.5 * est.std_error)
        mk.append(d.moment("total", k))
    W, se, mk = (np.asarray(a, dtype=float) for a in (W, se, mk))
    D_bar = float(max(np.max((W + n_sigma * se) / mk), 0.0))
    return FittedRate(k, D_bar, tuple(mk), tuple(W), tuple(se), n)

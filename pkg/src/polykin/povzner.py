"""Povzner averaging constants and the decay threshold k*.

The constant for order ``k`` is estimated as the supremum, over a scale-rich
population of pre-collision pairs, of the exact per-pair ratio

    int (<post>^k + <post*>^k) dnu  /  (<pre>^2 + <pre*>^2)^(k/2)

where ``nu`` is ``b dsigma`` (frozen) or ``b * rR_upper * measure`` (polyatomic).
Both post-collision brackets squared sum to the pre-collision sum ``S``, so
with ``x = <post>^2 / S`` the integrand is ``x^p + (1-x)^p``, ``p = k/2``.
``x`` is affine in ``mu = c_hat . sigma`` which is integrated in closed form
for isotropic ``b`` and by Gauss-Legendre otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .kernels import AngularModel, KernelSpec, rR_measure_nodes

V_RANGE = (1e-2, 1e2)
I_RANGE = (1e-4, 1e4)


class KStarBeyondGrid(RuntimeError):
    """No order on the grid satisfies the decay condition."""


@dataclass
class PovznerConstants:
    channel: str
    ks: np.ndarray
    C_k: np.ndarray
    norm: float
    n_pairs: int
    lb_integral: float | None = None
    k_star: float | None = None
    witnesses: dict = field(default_factory=dict, repr=False)

    def as_dict(self) -> dict:
        return {
            "channel": self.channel,
            "ks": [float(k) for k in self.ks],
            "C_k": [float(c) for c in self.C_k],
            "norm": self.norm,
            "lb_integral": self.lb_integral,
            "k_star": self.k_star,
            "n_pairs": self.n_pairs,
        }


def _sym_power_mean(t, q):
    """``[(1+t)^q - (1-t)^q] / (2 t q)``, i.e. the mean of ``(1 + t mu)^(q-1)`` over mu in [-1, 1]."""
    t = np.clip(t, 0.0, 1.0)
    small = t < 0.5
    ts = np.where(small, t, 0.25)
    tiny = ts < 1e-300
    ts = np.where(tiny, 1e-300, ts)
    # cancellation-free branch for small t
    lo = np.exp(q * np.log1p(-ts)) * np.expm1(2.0 * q * np.arctanh(ts)) / (2.0 * ts * q)
    lo = np.where(tiny, 1.0, lo)
    tb = np.where(small, 0.75, t)
    hi = ((1.0 + tb) ** q - (1.0 - tb) ** q) / (2.0 * tb * q)
    return np.where(small, lo, hi)


def _split(v, v_star):
    c = 0.5 * (v + v_star)
    u = v - v_star
    c2 = np.einsum("...i,...i->...", c, c)
    u2 = np.einsum("...i,...i->...", u, u)
    return c, u, c2, u2


def _azimuthal_mean(angular: AngularModel, A, B):
    """Exact mean over phi of ``b(A + B cos phi)`` for a piecewise-linear ``b``."""
    nodes, dens, _ = angular._shape
    scale = angular.l1_norm / (2.0 * math.pi)
    x0, x1 = nodes[:-1], nodes[1:]
    b0, b1 = dens[:-1], dens[1:]
    h = x1 - x0
    keep = h > 0
    x0, x1, b0, b1, h = x0[keep], x1[keep], b0[keep], b1[keep], h[keep]
    slope = (b1 - b0) / h
    A = A[..., None]
    Bs = np.maximum(B[..., None], 1e-300)
    lo = np.arccos(np.clip((x1 - A) / Bs, -1.0, 1.0))
    hi = np.arccos(np.clip((x0 - A) / Bs, -1.0, 1.0))
    seg = (b0 + slope * (A - x0)) * (hi - lo) + slope * Bs * (np.sin(hi) - np.sin(lo))
    out = seg.sum(axis=-1) / math.pi
    flat = B < 1e-12
    if np.any(flat):
        out = np.where(flat, np.interp(np.clip(A[..., 0], -1.0, 1.0), nodes, dens), out)
    return scale * out


def _mu_rule(angular: AngularModel, c, u, n_mu: int = 64):
    """Nodes in ``mu_c = c_hat . sigma`` with per-pair weights of ``b dsigma``.

    Returns ``(mu, W)`` with ``mu`` shape (n_mu,) and ``W`` shape (P, n_mu);
    ``W`` sums to ``||b||`` for every pair.
    """
    mu, wmu = np.polynomial.legendre.leggauss(n_mu)
    P = c.shape[0]
    if angular.kind == "isotropic":
        W = np.broadcast_to(0.5 * angular.l1_norm * wmu, (P, n_mu))
        return mu, W
    cn = np.linalg.norm(c, axis=1)
    un = np.linalg.norm(u, axis=1)
    ok = (cn > 0) & (un > 0)
    cos_g = np.where(ok, np.einsum("ij,ij->i", c, u) / np.where(ok, cn * un, 1.0), 1.0)
    cos_g = np.clip(cos_g, -1.0, 1.0)
    sin_g = np.sqrt(1.0 - cos_g ** 2)
    s = np.sqrt(1.0 - mu ** 2)
    # u_hat . sigma = cos_g mu + sin_g s cos(phi) for sigma parametrised around c_hat
    g = _azimuthal_mean(angular, cos_g[:, None] * mu[None, :], sin_g[:, None] * s[None, :]) * 2.0 * math.pi
    W = g * wmu[None, :]
    W *= angular.l1_norm / W.sum(axis=1, keepdims=True)
    return mu, W


def povzner_ratio_frozen(angular: AngularModel, v, v_star, ks) -> np.ndarray:
    """Per-pair Povzner ratio for the elastic rule; shape (P, len(ks)).

    Defined for every ``k >= 0``; at ``k = 2`` it equals ``||b||``.
    """
    v = np.asarray(v, dtype=float).reshape(-1, 3)
    v_star = np.asarray(v_star, dtype=float).reshape(-1, 3)
    ks = np.atleast_1d(np.asarray(ks, dtype=float))
    c, u, c2, u2 = _split(v, v_star)
    S = 2.0 + c2 + 0.25 * u2
    beta = 0.5 * np.sqrt(c2 * u2) / S  # x = 1/2 + beta * mu
    p = 0.5 * ks
    if angular.kind == "isotropic":
        t = 2.0 * beta
        # int_{-1}^{1} (1/2 + beta mu)^p dmu = 2^(1-p) * mean of (1 + t mu)^p
        return angular.l1_norm * 2.0 ** (1.0 - p)[None, :] * _sym_power_mean(t[:, None], p[None, :] + 1.0)
    mu, W = _mu_rule(angular, c, u)
    x = np.clip(0.5 + beta[:, None] * mu[None, :], 0.0, 1.0)
    lx, l1x = np.log(x), np.log1p(-x)
    out = np.empty((v.shape[0], ks.size))
    for j, pj in enumerate(p):
        out[:, j] = np.sum(W * (np.exp(pj * lx) + np.exp(pj * l1x)), axis=1)
    return out


def povzner_ratio_poly(spec: KernelSpec, v, v_star, I, I_star, ks, n_rR: int = 32,
                       chunk: int = 64) -> np.ndarray:
    """Per-pair ``(sigma, r, R)`` Povzner ratio for the energy-exchanging rule."""
    if not spec.is_poly:
        raise ValueError("povzner_ratio_poly needs a polyatomic kernel")
    m = spec.mass
    v = np.asarray(v, dtype=float).reshape(-1, 3)
    v_star = np.asarray(v_star, dtype=float).reshape(-1, 3)
    I = np.asarray(I, dtype=float).reshape(-1)
    I_star = np.asarray(I_star, dtype=float).reshape(-1)
    ks = np.atleast_1d(np.asarray(ks, dtype=float))
    p = 0.5 * ks
    r, R, w = rR_measure_nodes(spec.alpha, n_rR)
    wb = w * spec.rR_upper(r, R)
    P = v.shape[0]
    out = np.empty((P, ks.size))
    iso = spec.angular.kind == "isotropic"
    for s0 in range(0, P, chunk):
        sl = slice(s0, min(P, s0 + chunk))
        c, u, c2, u2 = _split(v[sl], v_star[sl])
        Em = 0.25 * u2 + (I[sl] + I_star[sl]) / m
        S = 2.0 + c2 + Em
        a0 = (1.0 + 0.5 * (c2[:, None] + R[None, :] * Em[:, None])
              + r[None, :] * (1.0 - R[None, :]) * Em[:, None]) / S[:, None]
        a0 = np.clip(a0, 0.0, 1.0)
        beta = np.sqrt(R[None, :] * Em[:, None] * c2[:, None]) / S[:, None]
        b0 = 1.0 - a0
        if iso:
            acc = np.zeros((sl.stop - sl.start, ks.size))
            for base in (a0, b0):
                t = np.minimum(beta / base, 1.0 - 1e-15)
                lb = np.log(base)
                l1m = np.log1p(-t)
                D = 2.0 * np.arctanh(t)
                tq = 2.0 * np.maximum(t, 1e-300)
                for j, pj in enumerate(p):
                    q = pj + 1.0
                    # base^p * mean of (1 + t mu)^p over mu in [-1, 1]
                    with np.errstate(over="ignore", invalid="ignore"):
                        val = np.exp(pj * lb + q * l1m) * np.expm1(q * D) / (tq * q)
                    val = np.where(t < 1e-12, np.exp(pj * lb), val)
                    bad = ~np.isfinite(val)
                    if np.any(bad):
                        val[bad] = base[bad] ** pj * _sym_power_mean(t[bad], q)
                    acc[:, j] += val @ wb
            out[sl] = spec.angular.l1_norm * acc
        else:
            mu, W = _mu_rule(spec.angular, c, u)
            x = np.clip(a0[:, :, None] + beta[:, :, None] * mu[None, None, :], 0.0, 1.0)
            lx, l1x = np.log(x), np.log1p(-x)
            for j, pj in enumerate(p):
                val = np.exp(pj * lx) + np.exp(pj * l1x)
                out[sl, j] = np.einsum("pnm,pm,n->p", val, W, wb)
    return out


def _log_uniform(rng, lo, hi, n):
    return np.exp(rng.uniform(math.log(lo), math.log(hi), n))


def _directions(rng, n):
    d = rng.normal(size=(n, 3))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def sample_pairs(rng: np.random.Generator, n: int, m: float = 1.0):
    """Pair population: speeds and internal energies log-uniform, directions uniform."""
    v = _log_uniform(rng, *V_RANGE, n)[:, None] * _directions(rng, n)
    vs = _log_uniform(rng, *V_RANGE, n)[:, None] * _directions(rng, n)
    I = _log_uniform(rng, *I_RANGE, n) * m
    Is = _log_uniform(rng, *I_RANGE, n) * m
    return v, vs, I, Is


# ---- local refinement of the supremum -------------------------------------

def _unpack(x, poly, m):
    v = x[0:3]
    vs = x[3:6]
    if poly:
        return v, vs, m * math.exp(x[6]), m * math.exp(x[7])
    return v, vs, 0.0, 0.0


def _inside(v, vs, I, Is, poly, m):
    for s in (np.linalg.norm(v), np.linalg.norm(vs)):
        if not V_RANGE[0] <= s <= V_RANGE[1]:
            return False
    if poly:
        for e in (I / m, Is / m):
            if not I_RANGE[0] <= e <= I_RANGE[1]:
                return False
    return True


def _refine(ratio_fn, starts, poly, m, maxiter):
    found = []
    for x0 in starts:
        def neg(x):
            v, vs, I, Is = _unpack(x, poly, m)
            if not _inside(v, vs, I, Is, poly, m):
                return 0.0
            return -float(ratio_fn(v[None], vs[None], np.array([I]), np.array([Is]))[0])
        res = optimize.minimize(neg, x0, method="Nelder-Mead",
                                options={"maxiter": maxiter, "xatol": 1e-10, "fatol": 1e-14})
        v, vs, I, Is = _unpack(res.x, poly, m)
        if _inside(v, vs, I, Is, poly, m):
            found.append((v, vs, I, Is))
    return found


def _estimate(ratio_all, ratio_one, v, vs, I, Is, ks, poly, m, n_refine, maxiter, refine_every=1):
    """Supremum over the sampled pairs plus locally refined witnesses.

    The final table takes, for every k, the max over one common pair set,
    so it inherits the pointwise monotonicity of the ratio in k.
    """
    table = ratio_all(v, vs, I, Is, ks)
    extra = []
    if n_refine > 0:
        picks = sorted(set(range(0, len(ks), refine_every)) | {len(ks) - 1})
        for j in picks:
            k = ks[j]
            top = np.argsort(table[:, j])[::-1][:n_refine]
            starts = []
            for i in top:
                x0 = np.concatenate([v[i], vs[i]] + ([np.log([I[i] / m, Is[i] / m])] if poly else []))
                starts.append(x0)
            extra.extend(_refine(lambda a, b, c, d, _k=k: ratio_one(a, b, c, d, _k)[:, 0],
                                 starts, poly, m, maxiter))
    if extra:
        ev = np.array([e[0] for e in extra])
        evs = np.array([e[1] for e in extra])
        eI = np.array([e[2] for e in extra])
        eIs = np.array([e[3] for e in extra])
        table = np.vstack([table, ratio_all(ev, evs, eI, eIs, ks)])
        v = np.vstack([v, ev])
        vs = np.vstack([vs, evs])
        I = np.concatenate([I, eI])
        Is = np.concatenate([Is, eIs])
    best = table.argmax(axis=0)
    C = table[best, np.arange(len(ks))]
    witnesses = {float(k): (v[b], vs[b], float(I[b]), float(Is[b])) for k, b in zip(ks, best)}
    return C, witnesses


def povzner_constants_frozen(angular: AngularModel, ks, n_pairs: int = 10_000,
                             rng: np.random.Generator | None = None, n_refine: int = 3,
                             maxiter: int = 400) -> PovznerConstants:
    ks = np.atleast_1d(np.asarray(ks, dtype=float))
    if np.any(ks <= 2):
        raise ValueError("frozen Povzner constants need k > 2")
    rng = rng if rng is not None else np.random.default_rng(0)
    v, vs, I, Is = sample_pairs(rng, n_pairs)

    def all_(a, b, c, d, kk):
        return povzner_ratio_frozen(angular, a, b, kk)

    def one(a, b, c, d, k):
        return povzner_ratio_frozen(angular, a, b, [k])

    C, wit = _estimate(all_, one, v, vs, I, Is, ks, False, 1.0, n_refine, maxiter)
    return PovznerConstants("frozen", ks, C, angular.l1_norm, n_pairs, witnesses=wit)


def povzner_constant_frozen(angular: AngularModel, k: float, n_pairs: int = 10_000,
                            rng: np.random.Generator | None = None, **kw) -> float:
    """Estimated Povzner constant for the elastic rule at one order ``k > 2``."""
    if not k > 2:
        raise ValueError(f"frozen Povzner constant needs k > 2, got {k}")
    return float(povzner_constants_frozen(angular, [k], n_pairs, rng, **kw).C_k[0])


def lb_integral(spec: KernelSpec) -> float:
    """Mass of ``b * rR_lower * measure`` (right-hand side of the k* condition)."""
    return spec.angular.l1_norm * spec.rR_lower_norm


def povzner_constants_poly(spec: KernelSpec, ks, n_pairs: int = 4000,
                           rng: np.random.Generator | None = None, n_refine: int = 1,
                           maxiter: int = 300, n_rR: int = 32, refine_every: int = 4) -> PovznerConstants:
    ks = np.atleast_1d(np.asarray(ks, dtype=float))
    if np.any(ks < 0):
        raise ValueError("polyatomic Povzner constants need k >= 0")
    rng = rng if rng is not None else np.random.default_rng(0)
    v, vs, I, Is = sample_pairs(rng, n_pairs, spec.mass)

    def all_(a, b, c, d, kk):
        return povzner_ratio_poly(spec, a, b, c, d, kk, n_rR)

    def one(a, b, c, d, k):
        return povzner_ratio_poly(spec, a, b, c, d, [k], n_rR)

    C, wit = _estimate(all_, one, v, vs, I, Is, ks, True, spec.mass, n_refine, maxiter, refine_every)
    return PovznerConstants("polyatomic", ks, C, spec.angular.l1_norm * spec.rR_upper_norm,
                            n_pairs, lb_integral=lb_integral(spec), witnesses=wit)


def povzner_constant_poly(spec: KernelSpec, k: float, n_pairs: int = 4000,
                          rng: np.random.Generator | None = None, **kw) -> float:
    return float(povzner_constants_poly(spec, [k], n_pairs, rng, **kw).C_k[0])


def k_star_from(constants: PovznerConstants, threshold: float | None = None) -> float:
    """Smallest grid order whose constant falls below ``threshold``."""
    threshold = constants.lb_integral if threshold is None else threshold
    below = np.nonzero(constants.C_k < threshold)[0]
    if below.size == 0:
        raise KStarBeyondGrid(
            f"k* beyond grid: C_k >= {threshold:.6g} for every k up to {constants.ks[-1]:g}; extend the grid")
    return float(constants.ks[below[0]])


def default_k_grid() -> np.ndarray:
    return np.arange(2.5, 20.0 + 1e-9, 0.5)


def find_k_star(spec: KernelSpec, k_grid=None, n_pairs: int = 4000,
                rng: np.random.Generator | None = None, **kw) -> float:
    """Smallest grid order with ``C_k < int b * rR_lower * measure``."""
    k_grid = default_k_grid() if k_grid is None else np.asarray(k_grid, dtype=float)
    if np.any(np.diff(k_grid) <= 0) or np.any(k_grid <= 2):
        raise ValueError("k grid must be increasing and above 2")
    consts = povzner_constants_poly(spec, k_grid, n_pairs, rng, **kw)
    k_star = k_star_from(consts)
    consts.k_star = k_star
    return k_star

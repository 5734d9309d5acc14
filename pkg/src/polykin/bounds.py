"""Explicit constants of the moment inequalities and the time envelopes built on them.

Naming follows the quantities they represent: ``A`` is a drift (absorption)
coefficient, ``B`` a forcing term, ``D`` a linear growth rate and ``E`` the
equilibrium level of the moment ODE ``y' <= -A y^(1 + zeta/(k-2)) + B``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

from .kinematics import Ensemble, moment

ENVELOPE_KINDS = (
    "gen_frozen",
    "prop_frozen",
    "gen_omega_large_k",
    "gen_omega_small_k",
    "prop_omega_large_k",
    "prop_omega_small_k",
)


class BoundError(ValueError):
    """A constant is undefined for the given inputs."""


def _pos(name, x):
    if not (x > 0 and math.isfinite(x)):
        raise BoundError(f"{name} must be finite and positive, got {x!r}")
    return float(x)


def _exp_checked(name, log_value):
    if log_value > 709.0:
        raise BoundError(f"{name} overflows double precision (log value {log_value:.1f})")
    return math.exp(log_value)


@dataclass(frozen=True)
class MomentSnapshot:
    """Low-order moments a bound set is built from.

    ``mz_v`` and ``mz_I`` are the v- and I-moments of order ``zeta``.
    """

    m0: float
    m2: float
    m2_v: float
    m2_I: float
    mz_v: float
    mz_I: float
    zeta: float

    def __post_init__(self):
        for name in ("m0", "m2", "m2_v", "m2_I", "mz_v", "mz_I"):
            x = getattr(self, name)
            if not (x >= 0 and math.isfinite(x)):
                raise BoundError(f"snapshot moment {name} must be finite and non-negative, got {x!r}")

    @classmethod
    def from_density(cls, density, zeta: float) -> "MomentSnapshot":
        return cls(
            m0=density.rho,
            m2=density.moment("total", 2),
            m2_v=density.moment("v", 2),
            m2_I=density.moment("I", 2),
            mz_v=density.moment("v", zeta),
            mz_I=density.moment("I", zeta),
            zeta=zeta,
        )

    @classmethod
    def from_ensemble(cls, ens: Ensemble, zeta: float) -> "MomentSnapshot":
        return cls(
            m0=float(ens.w.sum()),
            m2=moment(ens, "total", 2),
            m2_v=moment(ens, "v", 2),
            m2_I=moment(ens, "I", 2),
            mz_v=moment(ens, "v", zeta),
            mz_I=moment(ens, "I", zeta),
            zeta=zeta,
        )

    def conserved(self) -> "MomentSnapshot":
        """Replace the non-conserved ``mz_v`` by its conserved upper bound ``m2_v``.

        Valid for ``zeta <= 2`` because brackets are at least one.
        """
        return MomentSnapshot(self.m0, self.m2, self.m2_v, self.m2_I, max(self.mz_v, self.m2_v),
                              self.mz_I, self.zeta)

    def scaled(self, factor: float) -> "MomentSnapshot":
        return MomentSnapshot(self.m0 * factor, self.m2 * factor, self.m2_v * factor,
                              self.m2_I * factor, self.mz_v * factor, self.mz_I * factor, self.zeta)


@dataclass(frozen=True)
class ElementaryConstants:
    k: float
    zeta: float
    c_zeta: float
    C_zeta: float
    norm_b: float
    C_k: float
    A_tilde: float
    c_tilde: float
    L: float
    D_k: float


def absorption_L(zeta: float) -> float:
    return 2.0 ** (-zeta) * min(1.0, 2.0 ** (1.0 - zeta))


def frozen_D(k: float, C_zeta: float, norm_b: float) -> float:
    """Linear-growth constant of the total-bracket estimate for the elastic channel."""
    return 2.0 ** (k / 2.0 + 2.0) * C_zeta * norm_b


def elementary_constants(zeta: float, c_zeta: float, C_zeta: float, norm_b: float,
                         C_k_povzner: float, k: float) -> ElementaryConstants:
    if not k > 2:
        raise BoundError(f"need k > 2, got {k}")
    if not 0.0 <= zeta <= 2.0:
        raise BoundError(f"need zeta in [0, 2], got {zeta}")
    A_tilde = norm_b - C_k_povzner
    if not A_tilde > 0:
        raise BoundError(
            f"Povzner constant {C_k_povzner:.6g} is not below ||b|| = {norm_b:.6g}; "
            "the absorption constant would be non-positive")
    return ElementaryConstants(
        k=k, zeta=zeta, c_zeta=c_zeta, C_zeta=C_zeta, norm_b=norm_b, C_k=C_k_povzner,
        A_tilde=A_tilde,
        c_tilde=c_zeta * 3.0 ** (zeta / 2.0 - 1.0),
        L=absorption_L(zeta),
        D_k=frozen_D(k, C_zeta, norm_b),
    )


@dataclass(frozen=True)
class FrozenBoundSet:
    k: float
    zeta: float
    A_tilde: float
    c_tilde: float
    L: float
    eps_f: float
    eps_g: float
    delta: float
    K1: float        # K1[f, g]
    K2: float        # K2[f, g]
    A_fg: float
    A_gf: float
    B_fg: float
    B_gf: float
    A_k: float       # A[f, f]
    B_k: float       # B[f, f]
    D_k: float
    E_k: float

    def as_dict(self) -> dict:
        return asdict(self)


def _frozen_pieces(e: ElementaryConstants, f: MomentSnapshot, g: MomentSnapshot):
    k, z = e.k, e.zeta
    Ac = e.A_tilde * e.c_tilde
    P1 = 2.0 ** (k / 2.0 + 1.0) * e.C_k * e.C_zeta
    P2 = 2.0 * P1
    delta = Ac * e.L / 4.0

    def eps(h):
        return Ac * h.m0 / (P2 * h.m2_v)

    def K1t(h):
        return Ac * h.mz_v + P1 * h.mz_I

    def K2t(h):
        return P2 * h.m2_v

    def K1(a, b):
        log = ((k - 2 + z) / z) * math.log(K1t(b)) + math.log(a.m2_v) - ((k - 2) / z) * math.log(b.m0 * delta)
        return _exp_checked("K1", log)

    def K2(a, b):
        log = ((k + z) / 2.0) * math.log(K2t(b)) + math.log(a.m0) - ((k - 2 + z) / 2.0) * math.log(b.m0 * delta)
        return _exp_checked("K2", log)

    def B(a, b):
        tail = P1 * eps(b) ** (-(k - 2) / 2.0) * a.mz_I * b.m2_v
        return K1(a, b) + K2(a, b) + tail

    def A(a, b):
        return (Ac * e.L / 2.0) * b.m0 * a.m2_v ** (-z / (k - 2))

    return eps, delta, K1, K2, A, B


def frozen_bound_set(f: MomentSnapshot, g: Optional[MomentSnapshot],
                     elem: ElementaryConstants) -> FrozenBoundSet:
    """Constants of the v-moment inequality for the pair ``(f, g)`` (``g = f`` if omitted)."""
    g = f if g is None else g
    if not elem.zeta > 0:
        raise BoundError("the v-moment drift estimate needs zeta > 0")
    for h in (f, g):
        _pos("m0", h.m0)
        _pos("m2_v", h.m2_v)
    eps, delta, K1, K2, A, B = _frozen_pieces(elem, f, g)
    A_k = A(f, f)
    B_k = B(f, f)
    k, z = elem.k, elem.zeta
    E_k = (B_k / A_k) ** ((k - 2) / (k - 2 + z))
    return FrozenBoundSet(
        k=k, zeta=z, A_tilde=elem.A_tilde, c_tilde=elem.c_tilde, L=elem.L,
        eps_f=eps(f), eps_g=eps(g), delta=delta, K1=K1(f, g), K2=K2(f, g),
        A_fg=A(f, g), A_gf=A(g, f), B_fg=B(f, g), B_gf=B(g, f),
        A_k=A_k, B_k=B_k, D_k=elem.D_k, E_k=E_k,
    )


def frozen_v_rhs(bs: FrozenBoundSet, mk_v_f: float, mk_v_g: float) -> float:
    """Right-hand side of the symmetrised v-moment inequality."""
    p = 1.0 + bs.zeta / (bs.k - 2.0)
    return -(bs.A_fg * mk_v_f ** p + bs.A_gf * mk_v_g ** p) + bs.B_fg + bs.B_gf


def frozen_vI_rhs(D_k: float, m2_f: float, mk_f: float, m2_g: float, mk_g: float) -> float:
    """Right-hand side of the symmetrised total-bracket inequality."""
    return D_k * (m2_f * mk_g + m2_g * mk_f)


@dataclass(frozen=True)
class OmegaBoundSet:
    k: float
    zeta: float
    zeta_f: float
    omega: float
    m2: float
    A_bar: Optional[float]
    B_bar: Optional[float]
    D_bar: float
    D_frozen: float
    k_star: Optional[float]
    delta: Optional[float]
    K_tilde: Optional[float]
    A_om: Optional[float]
    B_om: Optional[float]
    D_om: float
    E_om: Optional[float]
    A_anchor: Optional[float] = None
    E_anchor: Optional[float] = None
    E_script: Optional[float] = None
    E_script_tilde: Optional[float] = None

    def as_dict(self) -> dict:
        return asdict(self)


def omega_bound_set(snapshot: MomentSnapshot, A_bar: Optional[float], B_bar: Optional[float],
                    D_bar: float, D_frozen: float, omega: float, k: float, zeta: float,
                    zeta_f: float = 1.0, k_star: Optional[float] = None,
                    anchor: Optional["OmegaBoundSet"] = None) -> OmegaBoundSet:
    """Constants of the mixed-operator estimates at order ``k``.

    ``A_bar``/``B_bar`` may be omitted below ``k_star``; then the drift-based
    fields are left empty and ``anchor`` (the set at order ``k_star + 1``)
    supplies the small-order levels.
    """
    if not 0.0 < omega <= 1.0:
        raise BoundError("the mixed estimates need omega in (0, 1]; use the frozen bound set for omega = 0")
    if not k > 2:
        raise BoundError(f"need k > 2, got {k}")
    if not 0.0 < zeta <= 2.0:
        raise BoundError(f"need zeta in (0, 2], got {zeta}")
    if D_bar < 0 or D_frozen < 0:
        raise BoundError("linear-growth constants must be non-negative")
    m2 = _pos("m2", snapshot.m2)
    D_om = omega * D_bar + (1.0 - omega) * D_frozen * m2

    delta = K_tilde = A_om = B_om = E_om = None
    if A_bar is not None:
        _pos("A_bar", A_bar)
        if B_bar is None or B_bar < 0:
            raise BoundError("B_bar must be supplied and non-negative together with A_bar")
        delta = omega * A_bar / 2.0
        if omega < 1.0:
            log_K = (((k - 2 + zeta) / zeta) * math.log((1.0 - omega) * D_frozen)
                     + ((k - 2 + zeta) / zeta + 1.0) * math.log(m2)
                     - ((k - 2) / zeta) * math.log(delta))
            K_tilde = _exp_checked("K_tilde", log_K)
        else:
            K_tilde = 0.0
        A_om = delta * m2 ** (-zeta / (k - 2))
        B_om = omega * B_bar + K_tilde
        E_om = (B_om / A_om) ** ((k - 2) / (k - 2 + zeta))

    A_anchor = E_anchor = E_script = E_script_tilde = None
    if anchor is not None:
        if k_star is None:
            raise BoundError("small-order levels need k_star")
        if anchor.E_om is None or anchor.A_om is None:
            raise BoundError("anchor bound set must carry drift constants")
        ks = k_star
        theta = (ks - k + 1.0) / (ks - 1.0)
        A_anchor, E_anchor = anchor.A_om, anchor.E_om
        E_script = m2 ** theta * E_anchor ** ((k - 2) / (ks - 1.0))
        E_script_tilde = E_script + m2 ** theta * ((ks - 1.0) * D_om / (zeta * A_anchor)) ** ((k - 2) / zeta)

    return OmegaBoundSet(
        k=k, zeta=zeta, zeta_f=zeta_f, omega=omega, m2=m2, A_bar=A_bar, B_bar=B_bar, D_bar=D_bar,
        D_frozen=D_frozen, k_star=k_star, delta=delta, K_tilde=K_tilde, A_om=A_om, B_om=B_om,
        D_om=D_om, E_om=E_om, A_anchor=A_anchor, E_anchor=E_anchor, E_script=E_script,
        E_script_tilde=E_script_tilde,
    )


def _decay(k, zeta, rate_over, t):
    return rate_over ** ((k - 2) / zeta) * t ** (-(k - 2) / zeta)


def envelope(kind: str, bound_set, m_k0: Optional[float] = None, t: Optional[float] = None) -> float:
    """Right-hand side of the generation or propagation estimate at time ``t``."""
    if kind not in ENVELOPE_KINDS:
        raise ValueError(f"unknown envelope kind {kind!r}")
    k, z = bound_set.k, bound_set.zeta
    if kind.startswith("gen"):
        if t is None or not t > 0:
            raise ValueError("generation envelopes need t > 0")
    elif m_k0 is None:
        raise ValueError("propagation envelopes need the initial moment")

    if kind == "gen_frozen":
        return bound_set.E_k + _decay(k, z, (k - 2) / (z * bound_set.A_k), t)
    if kind == "prop_frozen":
        return max(bound_set.E_k, m_k0)

    ks = bound_set.k_star
    if kind.endswith("large_k"):
        if ks is not None and k < ks:
            raise ValueError(f"large-order envelope needs k >= k* = {ks}")
        if bound_set.E_om is None:
            raise ValueError("bound set has no drift constants at this order")
        if kind == "gen_omega_large_k":
            return bound_set.E_om + _decay(k, z, (k - 2) / (z * bound_set.A_om), t)
        return max(bound_set.E_om, m_k0)

    if ks is None or not 2 < k < ks:
        raise ValueError(f"small-order envelope needs 2 < k < k* (k={k}, k*={ks})")
    if bound_set.E_script is None:
        raise ValueError("bound set was built without an anchor at order k* + 1")
    if kind == "gen_omega_small_k":
        theta = (ks - k + 1.0) / (ks - 1.0)
        return bound_set.E_script + bound_set.m2 ** theta * _decay(k, z, (ks - 1.0) / (z * bound_set.A_anchor), t)
    return max(bound_set.E_script_tilde, math.e * m_k0)

"""Space-homogeneous DSMC for the omega-mixed equation.

Each step runs two no-time-counter sub-steps, one per collision channel,
against a single running bound ``E_max`` on the pair energy.  Candidate
pairs are disjoint within a sub-step, so a particle collides at most once
per sub-step.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import rng as rngmod
from .bounds import MomentSnapshot, envelope
from .kernels import (KernelSpec, MixtureSpec, kernel_eval, majorant_rate, pair_rate, sample_rR,
                      sample_sigma)
from .kinematics import Ensemble, frozen_transform, moment, poly_transform, total_energy

log = logging.getLogger(__name__)

E_MAX_SAFETY = 4.0
E_MAX_GROWTH = 1.5
N_SCAN_PAIRS = 1000
N_TAU_PAIRS = 10_000
MAX_RETRIES = 60


class SimulationError(RuntimeError):
    """Raised with a diagnostic dump when the ensemble becomes unusable."""


@dataclass
class SimState:
    ensemble: Ensemble
    mixture: MixtureSpec
    dt: float
    E_max: float
    rng_seed: int
    step_index: int = 0
    collision_counters: dict = field(default_factory=lambda: {"frozen": [0, 0], "polyatomic": [0, 0]})
    carry: dict = field(default_factory=lambda: {"frozen": 0.0, "polyatomic": 0.0})
    refreshes: int = 0
    dt_halvings: int = 0

    def acceptance_ratio(self, channel: str) -> float:
        acc, att = self.collision_counters[channel]
        return acc / att if att else float("nan")


def _random_pairs(ens: Ensemble, gen: np.random.Generator, n: int):
    idx = gen.permutation(len(ens))[: 2 * n]
    return idx[0::2], idx[1::2]


def initial_E_max(ens: Ensemble, seed: int) -> float:
    """Four times the largest pair energy among a thousand random pairs."""
    gen = rngmod.stream(seed, rngmod.PAIR_SCAN)
    n = len(ens)
    i = gen.integers(0, n, N_SCAN_PAIRS)
    j = gen.integers(0, n, N_SCAN_PAIRS)
    E = total_energy(ens.v[i], ens.v[j], ens.I[i], ens.I[j], ens.mass)
    return E_MAX_SAFETY * float(np.max(E))


def mean_collision_time(ens: Ensemble, mixture: MixtureSpec, seed: int) -> float:
    """``1 / (rho <int B>)`` from ten thousand random pairs of the ensemble."""
    gen = rngmod.stream(seed, rngmod.PAIR_SCAN, 1)
    n = len(ens)
    i = gen.integers(0, n, N_TAU_PAIRS)
    j = gen.integers(0, n, N_TAU_PAIRS)
    args = (ens.v[i], ens.v[j], ens.I[i], ens.I[j])
    rate = 0.0
    if mixture.omega > 0:
        rate += mixture.omega * float(np.mean(pair_rate(mixture.poly, *args)))
    if mixture.omega < 1:
        rate += (1.0 - mixture.omega) * float(np.mean(pair_rate(mixture.frozen, *args)))
    rho = float(ens.w.sum())
    return 1.0 / (rho * rate)


def majorant_frequency(mixture: MixtureSpec, E_max: float) -> float:
    """Per-unit-density majorant collision frequency of the mixture."""
    om = mixture.omega
    return om * majorant_rate(mixture.poly, E_max) + (1.0 - om) * majorant_rate(mixture.frozen, E_max)


def default_dt(ens: Ensemble, mixture: MixtureSpec, E_max: float, factor: float = 0.1) -> float:
    return factor / (float(ens.w.sum()) * majorant_frequency(mixture, E_max))


def init_state(ens: Ensemble, mixture: MixtureSpec, seed: int, dt: Optional[float] = None,
               dt_factor: float = 0.1) -> SimState:
    E_max = initial_E_max(ens, seed)
    if dt is None:
        dt = default_dt(ens, mixture, E_max, dt_factor)
    if not dt > 0:
        raise ValueError("dt must be positive")
    return SimState(ens.copy(), mixture, float(dt), E_max, int(seed))


class _Redo(Exception):
    pass


def _substep(ens, spec: KernelSpec, weight: float, state: SimState, channel: str, tag: int, attempt: int,
             carry: float):
    """One NTC sub-step on the arrays of ``ens`` (modified in place only on success)."""
    n = len(ens)
    rho = float(ens.w.sum())
    lam = majorant_rate(spec, state.E_max)
    expected = weight * lam * rho * n * state.dt / 2.0 + carry
    n_cand = int(math.floor(expected))
    new_carry = expected - n_cand
    if n_cand > n // 2:
        raise OverflowError(channel)
    if n_cand == 0:
        return new_carry, 0, 0
    gen = rngmod.stream(state.rng_seed, state.step_index, tag, attempt)
    i, j = _random_pairs(ens, gen, n_cand)
    v, vs, I, Is = ens.v[i], ens.v[j], ens.I[i], ens.I[j]
    E = total_energy(v, vs, I, Is, ens.mass)
    if np.max(E) > state.E_max:
        raise _Redo(float(np.max(E)))

    u = v - vs
    norm = np.linalg.norm(u, axis=1, keepdims=True)
    u_hat = np.where(norm > 0, u / np.where(norm > 0, norm, 1.0), np.array([[1.0, 0.0, 0.0]]))
    sigma = sample_sigma(spec.angular, u_hat, gen)
    ceiling = spec.energy_factor(state.E_max)
    if spec.is_poly:
        r, R = sample_rR(spec, gen, n_cand)
        prob = kernel_eval(spec, v, vs, I, Is, r, R) / (spec.rR_upper(r, R) * ceiling)
    else:
        prob = kernel_eval(spec, v, vs, I, Is) / (spec.c_upper * ceiling)
    if np.any(prob > 1.0 + 1e-12):
        raise _Redo(float(np.max(E)))
    acc = gen.random(n_cand) < prob
    ia, ja = i[acc], j[acc]
    if spec.is_poly:
        vp, vsp, Ip, Isp = poly_transform(v[acc], vs[acc], I[acc], Is[acc], ens.mass,
                                          sigma=sigma[acc], r=r[acc], R=R[acc])
        ens.v[ia], ens.v[ja], ens.I[ia], ens.I[ja] = vp, vsp, Ip, Isp
    else:
        vp, vsp = frozen_transform(v[acc], vs[acc], sigma[acc])
        ens.v[ia], ens.v[ja] = vp, vsp
    return new_carry, int(acc.sum()), n_cand


def step(state: SimState) -> SimState:
    """Advance one time step; returns a new state and leaves the input untouched."""
    mix = state.mixture
    channels = (
        ("frozen", mix.frozen, 1.0 - mix.omega, rngmod.FROZEN),
        ("polyatomic", mix.poly, mix.omega, rngmod.POLY),
    )
    st = replace(state, ensemble=state.ensemble.copy(),
                 collision_counters={k: list(v) for k, v in state.collision_counters.items()},
                 carry=dict(state.carry))
    for name, spec, weight, tag in channels:
        if weight <= 0:
            continue
        attempt = 0
        while True:
            try:
                carry, acc, att = _substep(st.ensemble, spec, weight, st, name, tag, attempt, st.carry[name])
                break
            except _Redo as exc:
                attempt += 1
                if attempt > MAX_RETRIES:
                    raise SimulationError(f"pair-energy bound kept failing at step {st.step_index}")
                st.E_max = max(st.E_max * E_MAX_GROWTH, 0.0)
                while st.E_max < exc.args[0]:
                    st.E_max *= E_MAX_GROWTH
                st.refreshes += 1
            except OverflowError:
                st.dt *= 0.5
                st.dt_halvings += 1
                log.warning("too many %s candidates at step %d; halving dt to %.6g", name, st.step_index, st.dt)
                # restart the whole step with the smaller dt
                return step(replace(state, dt=st.dt, E_max=st.E_max, refreshes=st.refreshes,
                                    dt_halvings=st.dt_halvings))
        st.carry[name] = carry
        st.collision_counters[name][0] += acc
        st.collision_counters[name][1] += att
    st.ensemble.time = state.ensemble.time + st.dt
    st.step_index = state.step_index + 1
    return st


# ----------------------------------------------------------------- traces

BASE_COLUMNS = ("t", "m0", "m2", "m2_v", "m2_I")


def column_name(family: str, k: float) -> str:
    return f"{family}_{k:g}"


@dataclass
class MomentTrace:
    """Moments of the ensemble on the output grid."""

    requested: tuple
    columns: dict
    initial: dict                # zeta -> MomentSnapshot at t = 0
    mean_collision_time: float
    dt: float
    seed: int
    counters: dict = field(default_factory=dict)
    steps: int = 0
    refreshes: int = 0
    dt_halvings: int = 0

    @property
    def times(self) -> np.ndarray:
        return np.asarray(self.columns["t"])

    def column(self, family: str, k: float) -> np.ndarray:
        name = column_name(family, k)
        if name not in self.columns:
            raise KeyError(f"moment {name} was not recorded")
        return np.asarray(self.columns[name])

    def header(self) -> list:
        return list(BASE_COLUMNS) + [column_name(f, k) for f, k in self.requested]

    def rows(self):
        cols = [self.columns[h] for h in self.header()]
        return list(zip(*cols))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.header())
            for row in self.rows():
                w.writerow([format(float(x), ".17g") for x in row])


def read_csv(path) -> dict:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    head, body = rows[0], rows[1:]
    return {h: np.array([float(r[i]) for r in body]) for i, h in enumerate(head)}


def _record(trace_cols, ens: Ensemble, requested, step_index):
    vals = {
        "t": ens.time,
        "m0": float(ens.w.sum()),
        "m2": moment(ens, "total", 2),
        "m2_v": moment(ens, "v", 2),
        "m2_I": moment(ens, "I", 2),
    }
    for fam, k in requested:
        vals[column_name(fam, k)] = moment(ens, fam, k)
    bad = [k for k, x in vals.items() if not math.isfinite(x)]
    if bad:
        raise SimulationError(
            f"non-finite moments {bad} at step {step_index}, t={ens.time:.6g}; "
            f"max |v| = {np.max(np.abs(ens.v)):.3g}, max I = {np.max(ens.I):.3g}, "
            f"min I = {np.min(ens.I):.3g}")
    for k, x in vals.items():
        trace_cols.setdefault(k, []).append(x)


def run(ensemble: Ensemble, mixture: MixtureSpec, seed: int, t_final: float | None = None,
        n_steps: int | None = None, record_every: int = 1, moments: Sequence = (),
        dt: float | None = None, dt_factor: float = 0.1, in_collision_times: bool = True,
        zetas: Sequence = ()) -> MomentTrace:
    """Evolve ``ensemble`` and record moments every ``record_every`` steps.

    The run length is either ``n_steps`` or ``t_final`` (in mean collision
    times unless ``in_collision_times`` is false).  Recorded times are exact
    multiples of the step unless the step had to be halved.
    """
    if record_every < 1:
        raise ValueError("record_every must be at least 1")
    requested = tuple((str(f), float(k)) for f, k in moments)
    state = init_state(ensemble, mixture, seed, dt, dt_factor)
    tau = mean_collision_time(ensemble, mixture, seed)
    if n_steps is None:
        if t_final is None:
            raise ValueError("give t_final or n_steps")
        if t_final < 0:
            raise ValueError("t_final must be non-negative")
        horizon = t_final * tau if in_collision_times else t_final
        n_steps = int(math.ceil(horizon / state.dt - 1e-9)) if horizon > 0 else 0
    zetas = sorted({float(z) for z in zetas} | {mixture.frozen.zeta, mixture.poly.zeta})
    initial = {z: MomentSnapshot.from_ensemble(state.ensemble, z) for z in zetas}
    cols: dict = {}
    _record(cols, state.ensemble, requested, 0)
    for s in range(1, n_steps + 1):
        state = step(state)
        if s % record_every == 0 or s == n_steps:
            _record(cols, state.ensemble, requested, s)
    return MomentTrace(requested, cols, initial, tau, state.dt, int(seed),
                       {k: list(v) for k, v in state.collision_counters.items()}, n_steps,
                       state.refreshes, state.dt_halvings)


# ----------------------------------------------------------------- envelope checks

@dataclass(frozen=True)
class EnvelopeReport:
    kind: str
    family: str
    k: float
    slack: float
    times: tuple
    values: tuple
    bounds: tuple
    margins: tuple        # bound * (1 + slack) / value - 1, positive when satisfied
    passed: bool

    def as_dict(self) -> dict:
        d = {f: getattr(self, f) for f in self.__dataclass_fields__}
        return d


def default_family(kind: str) -> str:
    return "v" if kind.endswith("frozen") else "total"


def check_envelopes(trace, bound_set, kind: str, family: str | None = None, slack: float = 0.05,
                    t_burn: float = 0.0) -> EnvelopeReport:
    """Compare a recorded moment against its envelope at every recorded time.

    ``trace`` is a :class:`MomentTrace` or any mapping with a ``t`` column and
    the moment column (as read back from CSV).
    """
    family = family or default_family(kind)
    k = float(bound_set.k)
    if isinstance(trace, MomentTrace):
        t = trace.times
        vals = trace.column(family, k)
    else:
        t = np.asarray(trace["t"])
        vals = np.asarray(trace[column_name(family, k)])
    m_k0 = float(vals[0])
    use = t > t_burn if kind.startswith("gen") else t >= t_burn
    ts, ms = t[use], vals[use]
    bounds = np.array([envelope(kind, bound_set, m_k0, float(x) if x > 0 else None) for x in ts])
    margins = bounds * (1.0 + slack) / ms - 1.0
    passed = bool(np.all(ms <= bounds * (1.0 + slack)))
    return EnvelopeReport(kind, family, k, slack, tuple(map(float, ts)), tuple(map(float, ms)),
                          tuple(map(float, bounds)), tuple(map(float, margins)), passed)

"""Command line entry point: ``polykin <mode> --config <path>``.

Modes run the pieces of the verification pipeline; ``full-suite`` chains
them: averaging constants, bound constants, weak-form inequalities,
simulations and envelope checks.  Exit status is 0 iff no check failed.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import logging
import os
import shutil
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import rng as rngmod
from .bounds import (BoundError, MomentSnapshot, elementary_constants, frozen_bound_set, frozen_D,
                     frozen_v_rhs, frozen_vI_rhs, omega_bound_set)
from .config import MODES, ConfigError, RunConfig, defaults_text, dumps as config_dumps, load_config
from .densities import MixtureDensity, TestDensity, bimodal, energy_family, sample_ensemble
from .dsmc import SimulationError, check_envelopes, run as run_dsmc
from .kernels import AngularModel, MixtureSpec, frozen_kernel, poly_kernel
from .povzner import KStarBeyondGrid, k_star_from, povzner_constants_frozen, povzner_constants_poly
from .quadrature import (FAIL, PASS, combine_mixed, fit_externals, fit_linear_rate, verify_inequality,
                         weak_form_frozen, weak_form_poly)
from .report import dumps as report_dumps, tag, tag_all

log = logging.getLogger("polykin")


# ----------------------------------------------------------------- building blocks

def angular_model(cfg: RunConfig) -> AngularModel:
    k = cfg.kernel
    if k.angular == "tabulated":
        return AngularModel.tabulated(k.angular_mu, k.angular_values, k.norm_b)
    return AngularModel.isotropic(k.norm_b)


def mixture_spec(cfg: RunConfig, omega: float | None = None) -> MixtureSpec:
    k = cfg.kernel
    ang = angular_model(cfg)
    fr = frozen_kernel(k.zeta_f, k.c_zeta, k.C_zeta, ang, k.mass)
    po = poly_kernel(k.zeta, k.alpha, ang, k.mass, k.lb_factor)
    return MixtureSpec(k.omega if omega is None else omega, fr, po)


def initial_density(cfg: RunConfig):
    i = cfg.initial
    T = i.T[0] if len(i.T) == 1 else tuple(i.T)
    if i.kind == "bimodal":
        half = 0.5 * i.rho
        return MixtureDensity((
            TestDensity(half, (i.drift, 0.0, 0.0), T, i.theta, i.alpha_I, cfg.kernel.mass),
            TestDensity(half, (-i.drift, 0.0, 0.0), T, i.theta, i.alpha_I, cfg.kernel.mass),
        ))
    return TestDensity(i.rho, (i.drift, 0.0, 0.0), T, i.theta, i.alpha_I, cfg.kernel.mass)


def density_catalog(m: float = 1.0):
    """Pairs ``(name, f, g)`` used by the weak-form inequality checks."""
    unit = TestDensity(1.0, m=m)
    hot = TestDensity(0.8, T=2.0, theta=0.5, m=m)
    drifting = TestDensity(1.2, V=(1.0, 0.0, 0.0), T=0.7, theta=1.5, m=m)
    cold = TestDensity(1.0, T=0.3, theta=2.0, alpha_I=1.0, m=m)
    aniso = TestDensity(1.0, T=(0.5, 1.0, 2.0), theta=0.8, alpha_I=0.5, m=m)
    two_peak = bimodal(1.0, drift=1.2, T=0.4, theta=1.0, m=m)
    return [
        ("unit-unit", unit, unit),
        ("unit-hot", unit, hot),
        ("drifting-cold", drifting, cold),
        ("anisotropic-unit", aniso, unit),
        ("bimodal-hot", two_peak, hot),
    ]


def _sub_seed(seed: int, *key: int) -> int:
    return int(rngmod.stream(seed, *key).integers(0, 2**62))


@dataclass
class Outcome:
    """Report sections and check verdicts accumulated by the stages."""

    sections: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    files: dict = field(default_factory=dict)

    def check(self, name: str, verdict, detail: str = "") -> None:
        if isinstance(verdict, bool):
            verdict = PASS if verdict else FAIL
        self.checks.append({"name": name, "verdict": verdict, "detail": detail})

    @property
    def failed(self) -> bool:
        return any(c["verdict"] == FAIL for c in self.checks)


# ----------------------------------------------------------------- stages

def stage_povzner(cfg: RunConfig, out: Outcome) -> dict:
    p = cfg.povzner
    seed = cfg.run.seed
    grid = np.arange(p.k_start, p.k_stop + 1e-9 * p.k_step, p.k_step)
    needed = [cfg.checks.k_prop_frozen, cfg.checks.k_gen_frozen, *cfg.verification.ks]
    frozen_ks = np.union1d(grid, needed)
    ang = angular_model(cfg)
    fz = povzner_constants_frozen(ang, frozen_ks, p.n_pairs_frozen, rngmod.stream(seed, rngmod.POVZNER, 0))
    frozen_C = dict(zip(map(float, fz.ks), map(float, fz.C_k)))
    for k, val in p.frozen_C_k.items():
        frozen_C[k] = val
    spec = mixture_spec(cfg).poly
    pz = povzner_constants_poly(spec, grid, p.n_pairs_poly, rngmod.stream(seed, rngmod.POVZNER, 1))
    poly_C = dict(zip(map(float, pz.ks), map(float, pz.C_k)))
    for k, val in p.poly_C_k.items():
        poly_C[k] = val
    pz.C_k = np.array([poly_C[float(k)] for k in pz.ks])

    fvals = np.array([frozen_C[k] for k in sorted(frozen_C)])
    out.check("povzner.frozen.below_norm", bool(np.all(fvals < ang.l1_norm)))
    out.check("povzner.frozen.non_increasing", bool(np.all(np.diff(fvals) <= 1e-6 * fvals[:-1])))
    out.check("povzner.poly.non_increasing", bool(np.all(np.diff(pz.C_k) <= 1e-6 * pz.C_k[:-1])))
    try:
        k_star = k_star_from(pz)
        out.check("povzner.k_star.found", True, f"k* = {k_star:g}")
    except KStarBeyondGrid as exc:
        k_star = None
        out.check("povzner.k_star.found", False, str(exc))

    out.sections["povzner"] = {
        "frozen": {
            "ks": tag(sorted(frozen_C), "formula"),
            "C_k": tag(fvals, "estimated"),
            "norm_b": tag(ang.l1_norm, "formula"),
            "n_pairs": tag(p.n_pairs_frozen, "estimated"),
            "overridden": [f"{k:g}" for k in sorted(p.frozen_C_k)],
        },
        "polyatomic": {
            "ks": tag(pz.ks, "formula"),
            "C_k": tag(pz.C_k, "estimated"),
            "full_measure": tag(pz.norm, "formula"),
            "lb_integral": tag(pz.lb_integral, "formula"),
            "k_star": tag(k_star, "estimated") if k_star is not None else None,
            "n_pairs": tag(p.n_pairs_poly, "estimated"),
            "overridden": [f"{k:g}" for k in sorted(p.poly_C_k)],
        },
    }
    return {"frozen_C": frozen_C, "poly": pz, "k_star": k_star}


def _frozen_C_at(pov: dict, k: float) -> float:
    try:
        return pov["frozen_C"][float(k)]
    except KeyError:
        raise BoundError(f"no frozen averaging constant at order {k:g}") from None


def _snapshot_table(s: MomentSnapshot) -> dict:
    return tag_all({"m0": s.m0, "m2": s.m2, "m2_v": s.m2_v, "m2_I": s.m2_I, "mz_v": s.mz_v,
                    "mz_I": s.mz_I, "zeta": s.zeta}, "formula")


def frozen_sets(cfg: RunConfig, snapshot: MomentSnapshot, pov: dict, ks) -> dict:
    k = cfg.kernel
    sets = {}
    for order in ks:
        elem = elementary_constants(k.zeta_f, k.c_zeta, k.C_zeta, k.norm_b, _frozen_C_at(pov, order), order)
        sets[float(order)] = frozen_bound_set(snapshot, None, elem)
    return sets


def fit_stage(cfg: RunConfig, m2: float, rho: float, k_large: float | None, small_ks, out: Outcome,
              key: str = "externals") -> dict:
    """Polyatomic drift constants: fitted on densities sharing the run's mass and energy, or given."""
    e = cfg.externals
    spec = mixture_spec(cfg).poly
    seed = cfg.run.seed
    family = energy_family(rho, m2, cfg.initial.alpha_I, cfg.kernel.mass, e.fit_fractions)
    catalog = [d for _, f, g in density_catalog(cfg.kernel.mass) for d in (f, g)]
    result = {"A_bar": None, "B_bar": None, "D_bar": {}}
    section = {"source": e.source}
    if e.source == "given":
        result["A_bar"], result["B_bar"] = e.A_bar, e.B_bar
        result["D_bar"] = dict(e.D_bar)
        section.update(tag_all({"A_bar": e.A_bar, "B_bar": e.B_bar}, "formula"))
        section["D_bar"] = {f"{k:g}": tag(v, "formula") for k, v in e.D_bar.items()}
        missing = [k for k in small_ks if float(k) not in result["D_bar"]]
        if missing:
            raise ConfigError(f"externals.D_bar: no value for orders {missing}")
    else:
        if k_large is not None:
            fx = fit_externals(spec, family, k_large, e.fit_samples, _sub_seed(seed, rngmod.FIT, 0))
            result["A_bar"], result["B_bar"] = fx.A_bar, fx.B_bar
            section["drift"] = tag_all(fx.as_dict(), "fitted")
        for j, order in enumerate(small_ks):
            fr = fit_linear_rate(spec, family + catalog, order, e.fit_samples, _sub_seed(seed, rngmod.FIT, 1 + j))
            result["D_bar"][float(order)] = fr.D_bar
        section["D_bar"] = {f"{k:g}": tag(v, "fitted") for k, v in result["D_bar"].items()}
    out.sections[key] = section
    return result


def omega_sets(cfg: RunConfig, snapshot: MomentSnapshot, ext: dict, k_star: float, k_small: float,
               k_large: float) -> dict:
    kern = cfg.kernel
    prov = "fitted" if cfg.externals.source == "fit" else "formula"
    large = omega_bound_set(snapshot, ext["A_bar"], ext["B_bar"], ext["D_bar"].get(k_large, 0.0),
                            frozen_D(k_large, kern.C_zeta, kern.norm_b), kern.omega, k_large, kern.zeta,
                            kern.zeta_f, k_star)
    anchor = large
    if k_large != k_star + 1:
        anchor = omega_bound_set(snapshot, ext["A_bar"], ext["B_bar"], 0.0,
                                 frozen_D(k_star + 1, kern.C_zeta, kern.norm_b), kern.omega, k_star + 1,
                                 kern.zeta, kern.zeta_f, k_star)
    small = omega_bound_set(snapshot, None, None, ext["D_bar"][float(k_small)],
                            frozen_D(k_small, kern.C_zeta, kern.norm_b), kern.omega, k_small, kern.zeta,
                            kern.zeta_f, k_star, anchor=anchor)
    return {"large": large, "small": small, "provenance": prov}


def stage_weakform(cfg: RunConfig, pov: dict, out: Outcome) -> None:
    v = cfg.verification
    kern = cfg.kernel
    seed = cfg.run.seed
    ang = angular_model(cfg)
    catalog = density_catalog(kern.mass)
    rows = []
    idx = 0
    worst = {"a": PASS, "b": PASS, "omega": PASS}

    def bump(key, verdict):
        order = {PASS: 0, "inconclusive": 1, FAIL: 2}
        if order[verdict] > order[worst[key]]:
            worst[key] = verdict

    for name, f, g in catalog:
        for zeta in v.zetas:
            spec = frozen_kernel(zeta, kern.c_zeta, kern.C_zeta, ang, kern.mass)
            sf = MomentSnapshot.from_density(f, zeta)
            sg = MomentSnapshot.from_density(g, zeta)
            for k in v.ks:
                elem = elementary_constants(zeta, kern.c_zeta, kern.C_zeta, kern.norm_b, _frozen_C_at(pov, k), k)
                bs = frozen_bound_set(sf, sg, elem)
                est = weak_form_frozen(f, g, "v", k, spec, v.n_samples, _sub_seed(seed, rngmod.QUAD, idx))
                rhs = frozen_v_rhs(bs, f.moment("v", k), g.moment("v", k))
                verdict = verify_inequality(est, rhs, v.n_sigma)
                bump("a", verdict)
                rows.append({"inequality": "v-moment", "pair": name, "zeta": tag(zeta, "formula"),
                             "k": tag(k, "formula"), "value": tag(est.value, "estimated"),
                             "std_error": tag(est.std_error, "estimated"), "rhs": tag(rhs, "formula"),
                             "verdict": verdict})
                idx += 1
                est = weak_form_frozen(f, g, "total", k, spec, v.n_samples, _sub_seed(seed, rngmod.QUAD, idx))
                rhs = frozen_vI_rhs(elem.D_k, sf.m2, f.moment("total", k), sg.m2, g.moment("total", k))
                verdict = verify_inequality(est, rhs, v.n_sigma)
                bump("b", verdict)
                rows.append({"inequality": "total-moment", "pair": name, "zeta": tag(zeta, "formula"),
                             "k": tag(k, "formula"), "value": tag(est.value, "estimated"),
                             "std_error": tag(est.std_error, "estimated"), "rhs": tag(rhs, "formula"),
                             "verdict": verdict})
                idx += 1

    # mixed operator, linear bound at small orders
    mix = mixture_spec(cfg, omega=1.0)
    singles = []
    for _, f, g in catalog:
        for d in (f, g):
            if all(d is not s for s in singles):
                singles.append(d)
    m2_ref = max(d.moment("total", 2) for d in singles)
    ext = fit_stage(cfg, m2_ref, 1.0, None, v.ks, out, "externals_weakform")
    for j, d in enumerate(singles):
        m2 = d.moment("total", 2)
        for k in v.ks:
            p = weak_form_poly(d, d, "total", k, mix.poly, v.n_samples, _sub_seed(seed, rngmod.QUAD, 10_000 + idx))
            q = weak_form_frozen(d, d, "total", k, mix.frozen, v.n_samples,
                                 _sub_seed(seed, rngmod.QUAD, 20_000 + idx))
            idx += 1
            mk = d.moment("total", k)
            for om in v.omegas:
                est = combine_mixed(p, q, om)
                D_om = om * ext["D_bar"][float(k)] + (1.0 - om) * frozen_D(k, kern.C_zeta, kern.norm_b) * m2
                rhs = D_om * mk
                verdict = verify_inequality(est, rhs, v.n_sigma)
                bump("omega", verdict)
                rows.append({"inequality": "mixed-linear", "density": f"density-{j}", "omega": tag(om, "formula"),
                             "k": tag(k, "formula"), "value": tag(est.value, "estimated"),
                             "std_error": tag(est.std_error, "estimated"), "rhs": tag(rhs, "fitted"),
                             "verdict": verdict})

    out.check("weakform.v_moment", worst["a"] != FAIL, worst["a"])
    out.check("weakform.total_moment", worst["b"] != FAIL, worst["b"])
    out.check("weakform.mixed_linear", worst["omega"] != FAIL, worst["omega"])
    out.sections["weakform"] = {"n_samples": tag(v.n_samples, "estimated"), "n_sigma": tag(v.n_sigma, "formula"),
                                "rows": rows}


def _simulate(cfg: RunConfig, omega: float, moments, seed_key: int):
    s = cfg.simulation
    dens = initial_density(cfg)
    ens = sample_ensemble(dens, s.n_particles, rngmod.stream(cfg.run.seed, rngmod.INIT, seed_key))
    mix = mixture_spec(cfg, omega)
    return run_dsmc(ens, mix, cfg.run.seed, t_final=s.t_final, n_steps=s.n_steps or None,
                    record_every=s.record_every, moments=moments, dt=s.dt or None, dt_factor=s.dt_factor)


def _trace_section(trace) -> dict:
    d = {
        "steps": tag(trace.steps, "simulated"),
        "dt": tag(trace.dt, "simulated"),
        "mean_collision_time": tag(trace.mean_collision_time, "simulated"),
        "t_final": tag(trace.times[-1], "simulated"),
        "majorant_refreshes": tag(trace.refreshes, "simulated"),
        "dt_halvings": tag(trace.dt_halvings, "simulated"),
        "collisions": {ch: {"accepted": tag(a, "simulated"), "attempted": tag(t, "simulated")}
                       for ch, (a, t) in trace.counters.items()},
        "initial": _snapshot_table(trace.initial[min(trace.initial)]),
        "final": {h: tag(trace.columns[h][-1], "simulated") for h in trace.header()},
    }
    return d


def _envelope_entry(rep) -> dict:
    worst = int(np.argmin(rep.margins)) if rep.margins else None
    return {
        "kind": rep.kind, "family": rep.family, "k": tag(rep.k, "formula"), "slack": tag(rep.slack, "formula"),
        "n_times": tag(len(rep.times), "simulated"),
        "min_margin": tag(rep.margins[worst], "simulated") if worst is not None else None,
        "worst_time": tag(rep.times[worst], "simulated") if worst is not None else None,
        "passed": rep.passed,
    }


def stage_simulation(cfg: RunConfig, pov: dict | None, out: Outcome, checks: bool) -> None:
    kern = cfg.kernel
    chk = cfg.checks
    extra = [tuple(m) for m in cfg.simulation.moments]
    omega = kern.omega
    sim_section = {}
    frozen_moments = [("v", chk.k_prop_frozen), ("v", chk.k_gen_frozen), ("I", 2.0), ("I", 4.0), ("I", 6.0)]
    k_star = pov["k_star"] if pov else None
    k_large = None
    if checks and omega > 0 and k_star is not None:
        k_large = chk.k_large or k_star + 1.0

    main_moments = list(extra)
    if checks and omega == 0:
        main_moments += frozen_moments
    if k_large is not None:
        main_moments += [("total", chk.k_small), ("total", k_large)]
    main_moments = list(dict.fromkeys((f, float(k)) for f, k in main_moments))
    trace = _simulate(cfg, omega, main_moments, 0)
    out.files["trace.csv"] = trace
    sim_section["trace"] = _trace_section(trace)

    if checks and omega > 0:
        ftrace = _simulate(cfg, 0.0, frozen_moments, 0)
        out.files["trace_frozen.csv"] = ftrace
        sim_section["trace_frozen"] = _trace_section(ftrace)
    elif checks:
        ftrace = trace
    out.sections["simulation"] = sim_section
    if not checks:
        return

    # conservation of internal-energy moments by the frozen channel
    for k in (2.0, 4.0, 6.0):
        col = ftrace.column("I", k)
        drift = float(np.max(np.abs(col - col[0])) / col[0])
        out.check(f"frozen.I_moment_{k:g}_constant", drift <= 1e-12, f"max relative drift {drift:.3g}")

    envs = []
    consts = out.sections.setdefault("constants", {})
    if kern.zeta_f > 0:
        snap = ftrace.initial[kern.zeta_f].conserved()
        fsets = frozen_sets(cfg, snap, pov, [chk.k_prop_frozen, chk.k_gen_frozen])
        consts["frozen_run"] = {"snapshot": _snapshot_table(snap),
                                "sets": {f"{k:g}": tag_all(b.as_dict(), "formula") for k, b in fsets.items()}}
        for kind, k in (("prop_frozen", chk.k_prop_frozen), ("gen_frozen", chk.k_gen_frozen)):
            rep = check_envelopes(ftrace, fsets[float(k)], kind, slack=chk.slack, t_burn=chk.t_burn)
            envs.append(_envelope_entry(rep))
            out.check(f"envelope.{kind}.k{k:g}", rep.passed)
    else:
        out.check("envelope.frozen", "inconclusive", "zeta_f = 0: no frozen drift estimate")

    if omega > 0:
        if k_large is None:
            out.check("envelope.omega", FAIL, "k* unavailable")
        else:
            snap = trace.initial[kern.zeta]
            ext = fit_stage(cfg, snap.m2, snap.m0, k_large, [chk.k_small, k_large], out)
            sets = omega_sets(cfg, snap, ext, k_star, chk.k_small, k_large)
            consts["omega_run"] = {
                "snapshot": _snapshot_table(snap),
                "large_k": tag_all(sets["large"].as_dict(), sets["provenance"]),
                "small_k": tag_all(sets["small"].as_dict(), sets["provenance"]),
            }
            for kind, bs in (("gen_omega_small_k", sets["small"]), ("prop_omega_small_k", sets["small"]),
                             ("gen_omega_large_k", sets["large"]), ("prop_omega_large_k", sets["large"])):
                rep = check_envelopes(trace, bs, kind, slack=chk.slack, t_burn=chk.t_burn)
                envs.append(_envelope_entry(rep))
                out.check(f"envelope.{kind}.k{bs.k:g}", rep.passed)
    out.sections["envelopes"] = envs


def stage_constants(cfg: RunConfig, pov: dict, out: Outcome) -> None:
    """Bound constants from the initial density at the configured orders."""
    kern = cfg.kernel
    chk = cfg.checks
    dens = initial_density(cfg)
    consts = out.sections.setdefault("constants", {})
    ks = sorted({chk.k_prop_frozen, chk.k_gen_frozen, *cfg.verification.ks})
    elem = {}
    for k in ks:
        e = elementary_constants(kern.zeta_f, kern.c_zeta, kern.C_zeta, kern.norm_b, _frozen_C_at(pov, k), k)
        elem[f"{k:g}"] = tag_all(e.__dict__, "formula")
    consts["elementary"] = elem
    if kern.zeta_f > 0:
        snap = MomentSnapshot.from_density(dens, kern.zeta_f)
        sets = frozen_sets(cfg, snap, pov, ks)
        consts["initial_density"] = {"snapshot": _snapshot_table(snap),
                                     "frozen": {f"{k:g}": tag_all(b.as_dict(), "formula") for k, b in sets.items()}}
    if kern.omega > 0 and pov.get("k_star") is not None:
        k_star = pov["k_star"]
        k_large = chk.k_large or k_star + 1.0
        snap = MomentSnapshot.from_density(dens, kern.zeta)
        ext = fit_stage(cfg, snap.m2, snap.m0, k_large, [chk.k_small, k_large], out)
        sets = omega_sets(cfg, snap, ext, k_star, chk.k_small, k_large)
        consts["omega_initial"] = {"large_k": tag_all(sets["large"].as_dict(), sets["provenance"]),
                                   "small_k": tag_all(sets["small"].as_dict(), sets["provenance"])}


# ----------------------------------------------------------------- orchestration

def orchestrate(cfg: RunConfig, out_dir: Path | None = None) -> tuple[int, dict]:
    """Run the configured mode; write outputs to ``out_dir`` if given."""
    out = Outcome()
    mode = cfg.mode
    status = "complete"
    error = None
    try:
        pov = None
        if mode in ("povzner", "constants", "full-suite", "verify-weakform"):
            pov = stage_povzner(cfg, out)
        if mode in ("constants",):
            stage_constants(cfg, pov, out)
        if mode in ("verify-weakform", "full-suite"):
            stage_weakform(cfg, pov, out)
        if mode == "simulate":
            stage_simulation(cfg, None, out, checks=False)
        if mode == "full-suite":
            stage_simulation(cfg, pov, out, checks=True)
    except (BoundError, SimulationError, ConfigError, ValueError, FloatingPointError) as exc:
        status = "incomplete"
        error = f"{type(exc).__name__}: {exc}"
        out.check("pipeline", FAIL, error)

    report = {
        "meta": {
            "software": f"polykin {__version__}",
            "mode": mode,
            "seed": str(cfg.run.seed),
            "threads": str(cfg.run.threads),
            "status": status,
            "error": error,
            "config": config_dumps(cfg),
            "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        },
        "checks": out.checks,
        "passed": not out.failed,
        **out.sections,
    }
    code = 1 if out.failed else 0
    if out_dir is not None:
        write_outputs(out_dir, report, out.files)
    return code, report


def prepare_out_dir(path) -> Path:
    """Check that ``path`` can receive outputs; nothing is created yet."""
    path = Path(path)
    if path.exists() and not path.is_dir():
        raise ConfigError(f"output path {path} exists and is not a directory")
    parent = path.parent if not path.exists() else path
    if not parent.is_dir():
        raise ConfigError(f"output directory parent {parent} does not exist")
    if not os.access(parent, os.W_OK):
        raise ConfigError(f"output directory {parent} is not writable")
    return path


def write_outputs(path: Path, report: dict, traces: dict) -> None:
    """Write everything to a scratch directory first, then move it into place."""
    path = Path(path)
    base = path if path.is_dir() else path.parent
    scratch = Path(tempfile.mkdtemp(prefix=".polykin-", dir=base))
    try:
        for name, trace in traces.items():
            trace.write_csv(scratch / name)
        (scratch / "report.json").write_text(report_dumps(report))
        path.mkdir(exist_ok=True)
        for item in sorted(scratch.iterdir()):
            os.replace(item, path / item.name)
    finally:
        shutil.rmtree(scratch, ignore_errors=True)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="polykin", description=__doc__.splitlines()[0])
    p.add_argument("mode", nargs="?", choices=MODES, help="what to run")
    p.add_argument("--config", help="TOML run configuration")
    p.add_argument("--seed", type=int, help="override run.seed")
    p.add_argument("--threads", type=int, help="worker threads (default: $POLYKIN_THREADS or 1)")
    p.add_argument("--out", help="output directory (default: run.out)")
    p.add_argument("--print-defaults", action="store_true", help="print the default configuration and exit")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.print_defaults:
        sys.stdout.write(defaults_text())
        return 0
    if args.mode is None or args.config is None:
        print("polykin: a mode and --config are required (see --help)", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.config)
        cfg.run.mode = args.mode
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be non-negative")
            cfg.run.seed = args.seed
        threads = args.threads if args.threads is not None else os.environ.get("POLYKIN_THREADS")
        if threads is not None:
            threads = int(threads)
            if threads < 1:
                raise ConfigError("--threads must be at least 1")
            cfg.run.threads = threads
        out_dir = prepare_out_dir(args.out or cfg.run.out)
    except (ConfigError, ValueError) as exc:
        print(f"polykin: {exc}", file=sys.stderr)
        return 2
    code, report = orchestrate(cfg, out_dir)
    for c in report["checks"]:
        print(f"{c['verdict']:>12}  {c['name']}  {c['detail']}".rstrip())
    print(f"polykin: {'all checks passed' if code == 0 else 'some checks failed'}; outputs in {out_dir}")
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

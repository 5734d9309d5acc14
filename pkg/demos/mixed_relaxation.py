"""Relax a bimodal gas under the mixed operator and compare moments with their envelopes.

    python demos/mixed_relaxation.py [omega]

Prints the total 4-moment and 17-moment every few collision times next to
the propagation envelopes built from the initial conserved moments and
fitted drift constants.
"""

import sys

import numpy as np

from polykin import dsmc
from polykin.bounds import MomentSnapshot, envelope, frozen_D, omega_bound_set
from polykin.densities import bimodal, energy_family, sample_ensemble
from polykin.kernels import MixtureSpec, frozen_kernel, poly_kernel
from polykin.quadrature import fit_externals, fit_linear_rate

omega = float(sys.argv[1]) if len(sys.argv) > 1 else 0.5
k_star, k_small = 16.0, 4.0
k_large = k_star + 1.0

mix = MixtureSpec(omega, frozen_kernel(), poly_kernel(lb_factor=0.1))
ens = sample_ensemble(bimodal(), 20_000, np.random.default_rng(3))
snap = MomentSnapshot.from_ensemble(ens, 1.0)

family = energy_family(snap.m0, snap.m2)
drift = fit_externals(mix.poly, family, k_large, n=50_000, rng=4)
rate = fit_linear_rate(mix.poly, family, k_small, n=50_000, rng=5)
large = omega_bound_set(snap, drift.A_bar, drift.B_bar, drift.D_bar, frozen_D(k_large, 1, 1),
                        omega, k_large, 1.0, k_star=k_star)
small = omega_bound_set(snap, None, None, rate.D_bar, frozen_D(k_small, 1, 1), omega, k_small, 1.0,
                        k_star=k_star, anchor=large)

trace = dsmc.run(ens, mix, seed=6, t_final=10.0, record_every=25,
                 moments=[("total", k_small), ("total", k_large)])
m4, m17 = trace.column("total", k_small), trace.column("total", k_large)
print(f"omega = {omega}, mean collision time = {trace.mean_collision_time:.4f}, steps = {trace.steps}")
print(f"envelope k=4: {envelope('prop_omega_small_k', small, m_k0=m4[0]):.3e}")
print(f"envelope k=17: {envelope('prop_omega_large_k', large, m_k0=m17[0]):.3e}")
print(f"{'t / tau':>8} {'m_4':>12} {'m_17':>14}")
for t, a, b in zip(trace.times, m4, m17):
    print(f"{t / trace.mean_collision_time:8.2f} {a:12.5f} {b:14.6e}")

"""Run configurations shared by the CLI and acceptance tests."""

# full pipeline at a fraction of the default cost
REDUCED = """
[run]
mode = "full-suite"
seed = 7

[simulation]
n_particles = 4000
t_final = 6.0
record_every = 10

[povzner]
n_pairs_frozen = 1500
n_pairs_poly = 600

[externals]
fit_samples = 20000

[verification]
n_samples = 40000
"""

MINIMAL = """
[run]
mode = "simulate"
"""

"""Space-homogeneous polyatomic Boltzmann solver with frozen collisions."""

__version__ = "0.1.0"

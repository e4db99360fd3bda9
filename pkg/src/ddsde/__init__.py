"""Simulation and certification of SDEs whose drift depends on their own density.

Engines: an exact-in-law grid propagation of the Euler scheme with density
feedback (:mod:`ddsde.euler`), a Monte Carlo particle version
(:mod:`ddsde.particles`) and a finite-volume solver of the nonlinear
Fokker-Planck equation (:mod:`ddsde.fpe`).  :mod:`ddsde.diagnostics` turns
sweeps over the step count into certificates.
"""

__version__ = "0.1.0"

"""OTFS-modulated massive random access simulator for cell-free massive
MIMO uplinks: delay-Doppler link models, hybrid-preamble measurement
construction, GAMP-based pattern-coupled sparse Bayesian recovery, the
two-stage detection/estimation pipeline and a Monte Carlo harness."""

__version__ = "0.1.0"

"""Unitary processes with independent increments and their Hudson-Parthasarathy models.

Forward direction: coefficient schedules (G, L_j) are turned into unitary
evolutions, either as ordered products of slice unitaries on a toy Fock
space or as exponential-vector matrix elements integrated by RK4.

Backward direction: vacuum expectation flows T and Z are extracted from a
process, differentiated, and the positive-definite kernel they define is
factorized to recover the noise multiplicity and the coefficients L_j.
"""

from hpequiv.errors import CapError, DimensionError, HPError, KernelError, ScheduleError

__all__ = ["CapError", "DimensionError", "HPError", "KernelError", "ScheduleError"]
__version__ = "0.1.0"

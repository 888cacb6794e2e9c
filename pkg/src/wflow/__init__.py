"""Exact and inexact proximal flows on the 2-Wasserstein space.

Closed-form-verifiable measure families (particle clouds, Gaussians),
exact transport metrics, proximal-point and forward-backward flows with
certified error injection, schedule summability verdicts, and
trace-based convergence certificates.
"""

from . import (
    certificates,
    errors,
    functionals,
    harness,
    jko,
    measures,
    proxgrad,
    schedules,
    trace,
    transport,
)
from .trace import VERSION as __version__

__all__ = [
    "certificates",
    "errors",
    "functionals",
    "harness",
    "jko",
    "measures",
    "proxgrad",
    "schedules",
    "trace",
    "transport",
    "__version__",
]

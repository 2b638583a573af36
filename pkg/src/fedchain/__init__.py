"""Deterministic simulator and protocol library for proof-of-useful-federated-
learning blockchain consensus: latency-guided mining pools, noise-masked ring
all-reduce aggregation, divergence-weighted model averaging, and
commit-then-challenge model verification, plus baselines for comparison.
"""

from . import chain, data, experiments, fed, fixedpoint, netsim, pools, sharedring, verify
from .errors import FedChainError

__version__ = "0.1.0"

__all__ = [
    "chain",
    "data",
    "experiments",
    "fed",
    "fixedpoint",
    "netsim",
    "pools",
    "sharedring",
    "verify",
    "FedChainError",
    "__version__",
]

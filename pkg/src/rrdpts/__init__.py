"""Round-robin differential phase-time-shifting QKD: key rates, information bound, packet simulator."""

from .bound import BoundResult, SimplexPoint, f_entropy, iae_objective, iae_upper, maximize_separable
from .core import (
    Basis,
    DelayChoice,
    InvalidWindow,
    PacketSpec,
    ParameterError,
    ProtocolParams,
    interfering_indices,
    occupied_bins,
    valid_delays,
)
from .mcsim import SimConfig, SimTally, crosscheck, estimate, simulate
from .rates import RateSummary, aggregate, conditional_entropy, e_src, optimize_keyrate, secret_key_rate

__version__ = "0.1.0"

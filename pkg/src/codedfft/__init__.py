"""Coded distributed FFT over a simulated one-port cluster."""

from .cost import CostLedger, CostParams
from .dft import DftPlan, dft_direct
from .mds import make_checksum_code, make_systematic_mds
from .netsim import FaultEvent, FaultScenario
from .pipeline import overhead_comparison, run_coded, run_uncoded

__all__ = [
    "CostLedger",
    "CostParams",
    "DftPlan",
    "FaultEvent",
    "FaultScenario",
    "dft_direct",
    "make_checksum_code",
    "make_systematic_mds",
    "overhead_comparison",
    "run_coded",
    "run_uncoded",
]

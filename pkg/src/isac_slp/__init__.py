"""SI-aware symbol-level precoding for full-duplex OFDM-MIMO sensing and communication."""

from . import detector, signal_model, solver, statkit

__all__ = ["detector", "signal_model", "solver", "statkit"]
__version__ = "0.1.0"

"""Driven Kerr oscillator with weak higher-order nonlinearities: quantum, reduced and
quasienergy Fokker-Planck descriptions of its stationary state."""

__version__ = "0.1.0"

from .params import ModelParams, TruncationError

__all__ = ["ModelParams", "TruncationError", "__version__"]

"""Q-representation stochastic simulator of the transverse degenerate OPO."""

__version__ = "0.1.0"

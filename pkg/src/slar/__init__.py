"""Semi-Lagrangian adaptive-rank solver for 2-D advection and 1D1V Vlasov-Poisson."""

__version__ = "0.1.0"

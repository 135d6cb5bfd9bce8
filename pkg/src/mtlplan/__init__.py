"""Compositional MTL mission planning for hybrid quadrotor models via MILP."""

__version__ = "0.1.0"

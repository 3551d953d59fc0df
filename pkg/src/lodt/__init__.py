"""Simulator and verification harness for location-oblivious data transfer
with flying entangled qudits."""

__version__ = "0.1.0"

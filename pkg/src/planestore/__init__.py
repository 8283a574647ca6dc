"""Bit-plane disaggregated weight storage with a DDR5 access-cost model."""

__version__ = "0.1.0"

"""Behavioral simulator of a single-cycle analog MLP built from SOT-MRAM
sigmoid neurons and binary synapses, with hardware-aware training."""

__version__ = "0.1.0"

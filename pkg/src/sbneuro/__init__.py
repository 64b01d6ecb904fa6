"""Schottky-barrier MOSFET current source, capacitor LIF neuron and a 16x3 spiking classifier."""

__version__ = "0.1.0"

"""Quantum lattice Boltzmann advection-diffusion: circuits, simulation, readout, mitigation."""
__version__ = "0.1.0"

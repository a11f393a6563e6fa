"""Structured low-rank (SLR) and unrolled deep-network MRI reconstruction.

Desk-scale toolkit for recovering single- and multi-channel images from
undersampled Fourier measurements: classical annihilating-filter structured
low-rank solvers (iteratively reweighted least squares, variable splitting,
calibration-based recovery) and their unrolled network generalizations with
analytical data-consistency layers, plus the simulation, metric, and probe
machinery needed to verify everything end to end on synthetic phantoms.
"""

__version__ = "0.1.0"

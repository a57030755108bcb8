"""Observing-system simulation toolkit for coastal wind-speed reconstruction.

The package builds a synthetic hourly wind-speed truth over a coastal grid,
carves heterogeneous pseudo-observations out of it, and reconstructs the
full-resolution series with a trainable variational assimilation scheme,
alongside interpolation and direct-inversion references.  Campaigns cover a
skill benchmark, robustness to coarse-input biases, sensitivity to the
in-situ network, coarse-observation resolution settings, and a comparison
of flow operators.
"""

__version__ = "0.1.0"

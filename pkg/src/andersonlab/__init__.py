"""Finite-volume numerics for the discrete Anderson model.

Submodules: ``lattice``, ``operators``, ``disorder``, ``spectral``, ``dos``,
``green``, ``msa``, ``dynamics`` and the ``cli`` experiment runner.
"""

__version__ = "0.1.0"

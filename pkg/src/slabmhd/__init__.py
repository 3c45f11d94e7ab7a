"""Spectral laboratory for plasma-vacuum free-boundary ideal MHD in the
periodic slab T^2 x (-1, 1).

The plasma occupies the region between the free interface and the top wall;
the vacuum below carries a curl-free magnetic field driven by a surface
current on the bottom wall.  The interface is a height field over the flat
reference cross-section z = z0, bulk fields live on harmonically mapped
product grids, and all tangential calculus is Fourier-spectral.
"""

__version__ = "0.1.0"

from . import (bulk, cheb, config, diagnostics, elliptic, errors, evolution,
               fields, fourier, harmonic, report, runner, seriesio, surface,
               verify)

__all__ = [
    "bulk", "cheb", "config", "diagnostics", "elliptic", "errors",
    "evolution", "fields", "fourier", "harmonic", "report", "runner",
    "seriesio", "surface", "verify",
]

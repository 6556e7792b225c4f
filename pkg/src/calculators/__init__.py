"""Numerical kernels for semi-discrete unbalanced transport.

This package contains the transport models, the Laguerre tessellation of a
density raster, the dual weight solver and the quantization solvers, together
with the shared L-BFGS driver and the error hierarchy.
"""

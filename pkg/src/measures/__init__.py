"""Measure containers: the rasterized diffuse measure and the discrete measure."""

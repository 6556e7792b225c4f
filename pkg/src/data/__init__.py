"""Reference setups.

This module contains the canonical site configurations, length scales and
asymptotic targets that the presets and acceptance tests are built from.
"""

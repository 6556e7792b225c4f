"""Configuration loading and file formats."""

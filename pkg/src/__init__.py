"""Semi-discrete unbalanced transport and quantization."""

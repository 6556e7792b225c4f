"""Top-level runner for the semi-discrete unbalanced transport experiments.

Equivalent to the ``uot`` console script::

    python app.py transport --config configs/transport_ghk.json
"""

import sys

from src.cli.main import main

if __name__ == "__main__":
    sys.exit(main())

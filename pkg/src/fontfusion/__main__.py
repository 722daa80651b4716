"""Module entry point: ``python -m fontfusion``."""

import sys

from fontfusion.cli import main

if __name__ == "__main__":
    sys.exit(main())

"""
popgraph entry point.

    python main.py benchmark --set cohort.num_subjects=300 --set train.epochs=20
"""

import sys

from popgraph.cli import main


if __name__ == "__main__":
    sys.exit(main())

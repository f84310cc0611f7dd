"""
Kessel
Regularized parabolic-elliptic Keller-Segel simulator with a weak-solution
verification harness.
"""

import os
import sys
from pathlib import Path

if sys.version_info < (3, 9):
    raise RuntimeError("Kessel requires Python 3.9 or higher")

LOG_DIR = os.environ.get('KESSEL_LOG_DIR', str(Path.home() / '.kessel' / 'logs'))

__version__ = "0.3.0"
__license__ = "MIT"

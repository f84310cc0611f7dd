import sys

from kessel.cli import main

sys.exit(main())

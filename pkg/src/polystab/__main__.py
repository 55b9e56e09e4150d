import sys

from polystab.cli import main

sys.exit(main())

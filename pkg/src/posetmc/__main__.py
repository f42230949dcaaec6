import sys

from posetmc.cli import main

sys.exit(main())

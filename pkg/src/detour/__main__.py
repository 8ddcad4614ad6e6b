import sys

from detour.cli import main

sys.exit(main())

import sys

from lexner.cli import main

sys.exit(main())

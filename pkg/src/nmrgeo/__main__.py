import sys

from nmrgeo.cli import main

sys.exit(main())

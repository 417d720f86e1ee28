import sys

from rllcap.cli import main

sys.exit(main())

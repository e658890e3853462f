import sys

from resilient_evo.cli import main

sys.exit(main())

import sys

from trapcal.cli import main

sys.exit(main())

import sys

from intentkit.workbench.cli import main

sys.exit(main())

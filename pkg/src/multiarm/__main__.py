import sys

from multiarm.cli import main

sys.exit(main())

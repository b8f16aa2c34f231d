import sys

from polypvid.cli import main

sys.exit(main())

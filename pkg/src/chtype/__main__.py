import sys

from chtype.cli import main

sys.exit(main())

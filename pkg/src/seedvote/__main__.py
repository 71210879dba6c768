import sys

from seedvote.cli import main

sys.exit(main())

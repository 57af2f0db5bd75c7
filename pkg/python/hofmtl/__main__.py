"""``python -m hofmtl``."""

import sys

from hofmtl.cli import main

sys.exit(main())

"""Allow ``python -m gbdm``."""

import sys

from gbdm.cli import main


sys.exit(main())

import sys

from isothermic.cli import main

sys.exit(main())

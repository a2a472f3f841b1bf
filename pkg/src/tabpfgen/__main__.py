import sys

from tabpfgen.cli import main

sys.exit(main())

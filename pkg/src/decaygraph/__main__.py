import sys

from decaygraph.cli import main

sys.exit(main())

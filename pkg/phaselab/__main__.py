import sys

from phaselab.main import main

sys.exit(main())

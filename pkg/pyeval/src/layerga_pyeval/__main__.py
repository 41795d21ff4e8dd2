import sys

from layerga_pyeval.worker import main

sys.exit(main())

import sys

from fedsim.main import main

sys.exit(main())

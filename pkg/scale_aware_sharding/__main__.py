import sys

from scale_aware_sharding.cli import main

sys.exit(main())

import sys

from scworker.main import main

sys.exit(main())

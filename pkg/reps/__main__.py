import sys

from reps.main import main

sys.exit(main())

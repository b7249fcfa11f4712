import sys

from causalprompt.cli.Cli import main

sys.exit(main())

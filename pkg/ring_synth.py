import sys

# Import the command-line driver
from bin.cli import main


if __name__ == "__main__":
    sys.exit(main())

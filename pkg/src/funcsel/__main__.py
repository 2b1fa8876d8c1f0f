"""Allow ``python -m funcsel``."""

from funcsel.cli import main

if __name__ == "__main__":
    main()

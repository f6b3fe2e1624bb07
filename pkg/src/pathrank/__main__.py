"""Entry point for running pathrank as a module (python -m pathrank)."""

from pathrank.cli import main


if __name__ == "__main__":
    main()

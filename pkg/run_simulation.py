"""Run the nematic electrolyte command line interface."""

from nematic_electrolyte.cli import main


if __name__ == "__main__":
    raise SystemExit(main())

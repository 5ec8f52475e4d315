"""Console entry point: ``fdg`` or ``python -m src.main``."""

import sys

from dotenv import load_dotenv

from src.cli import cli_dispatch
from src.config import get_settings
from src.logging_config import configure_logging


def main() -> None:
    load_dotenv()
    configure_logging(get_settings().log_level)
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()

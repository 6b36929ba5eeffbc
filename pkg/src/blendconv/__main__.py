import asyncio
import logging
import sys

from blendconv.cli import cli

log = logging.getLogger(__name__)


def main() -> None:
    """Entrypoint for the `bcs` CLI."""
    try:
        code = asyncio.run(cli())
    except KeyboardInterrupt:
        log.info("stopped")
        code = 130
    sys.exit(code)


if __name__ == "__main__":
    main()

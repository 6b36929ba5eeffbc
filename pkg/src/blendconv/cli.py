import logging
from pathlib import Path
from typing import Sequence

from docopt import DocoptExit, docopt
from pydantic import ValidationError

from blendconv.doc import __doc__ as cli_doc
from blendconv.exceptions import BlendConvError, InputError

log = logging.getLogger(__name__)


async def cli(argv: Sequence[str] | None = None) -> int:
    """
    Parse CLI args and run one pipeline command.

    Args:
        argv (Sequence[str] | None): Arguments, `sys.argv[1:]` by default.

    Returns:
        int: 0 on success, 1 on input errors, 2 on numerical errors.
    """
    try:
        args = docopt(cli_doc, argv=argv)
    except DocoptExit:
        log.info(cli_doc)
        return InputError.exit_code

    if args["--verbose"]:
        logging.getLogger().setLevel(logging.DEBUG)

    try:
        from blendconv.args import config_overrides, process_args
        from blendconv.config import load_run_config
        from blendconv.pipeline import Pipeline

        config_file = Path(args["--config"]) if args["--config"] else None
        config = load_run_config(config_file, config_overrides(args))
        pipeline = Pipeline(config, Path(args["--basis"]) if args["--basis"] else None)
        await process_args(pipeline, args)
    except BlendConvError as e:
        log.debug("exception:", exc_info=e)
        log.error(e)
        return e.exit_code
    except ValidationError as e:
        log.debug("exception:", exc_info=e)
        log.error(f"invalid configuration: {e}")
        return InputError.exit_code
    except OSError as e:
        log.debug("exception:", exc_info=e)
        log.error(e)
        return InputError.exit_code
    return 0

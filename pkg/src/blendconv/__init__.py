from importlib.metadata import PackageNotFoundError, version

from blendconv.logger import set_up_logging

try:
    __version__ = version("blendconv")
except PackageNotFoundError:
    # running from a source checkout
    __version__ = "0.0.0"

set_up_logging()

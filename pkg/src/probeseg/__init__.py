"""
probeseg - discover objects in RGB-D views by pushing them and watching what moves
"""

try:
    from importlib.metadata import version

    __version__ = version("probeseg")
except Exception:
    # Fallback for editable/uninstalled checkouts
    __version__ = "0.dev0"
__author__ = "probeseg"
__description__ = "Self-supervised object discovery and relative-mass estimation by interaction"

from .config import RunConfig, TrainConfig
from .exceptions import ConfigError, ProbesegError
from .logger import setup_logging
from .output import OutputFormatter

__all__ = [
    "ConfigError",
    "OutputFormatter",
    "ProbesegError",
    "RunConfig",
    "TrainConfig",
    "setup_logging",
    "__version__",
]

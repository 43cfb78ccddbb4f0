"""Block particle filters for locally interacting hidden Markov models."""

from ._blockpf import *  # noqa: F401,F403
from ._blockpf import __version__  # noqa: F401

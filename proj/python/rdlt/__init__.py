"""Rate-distortion learned block transforms: transforms, coder, baselines and training."""

from ._rdlt import *  # noqa: F401,F403
from ._rdlt import __doc__  # noqa: F401

"""Score-entropy discrete diffusion with a germline absorbing state."""

from ._gsedd import *  # noqa: F401,F403
from ._gsedd import __doc__  # noqa: F401

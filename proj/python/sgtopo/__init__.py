"""Topology optimization of structures made of random microstructures.

The compiled core lives in ``sgtopo._core``; everything is re-exported here.
"""

from ._core import *  # noqa: F401,F403
from ._core import __doc__, streams  # noqa: F401

__version__ = "0.1.0"

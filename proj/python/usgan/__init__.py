"""Expression-synthesis GAN toolkit: Python bindings to the C++ core."""

import torch  # noqa: F401  (loads the libtorch shared libraries)

try:
    from ._usgan import *  # noqa: F401,F403
    from ._usgan import __doc__  # noqa: F401
except ImportError:  # extension built in-tree and placed on PYTHONPATH
    from _usgan import *  # noqa: F401,F403
    from _usgan import __doc__  # noqa: F401

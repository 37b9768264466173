"""Remote heart-rate estimation from face video.

Thin Python wrapper around the compiled core. When the package is installed
the extension module lives next to this file; during development the
``RHYTHMKIT_MODULE_DIR`` environment variable may point at a build directory
containing the extension.
"""

import os
import sys

try:
    from ._rhythmkit import *  # noqa: F401,F403
    from . import _rhythmkit as _core  # noqa: F401
except ImportError:
    _module_dir = os.environ.get("RHYTHMKIT_MODULE_DIR")
    if not _module_dir:
        raise
    if _module_dir not in sys.path:
        sys.path.insert(0, _module_dir)
    import _rhythmkit as _core  # noqa: F401

    globals().update(
        {_k: _v for _k, _v in vars(_core).items() if not _k.startswith("_")}
    )

__version__ = "0.1.0"

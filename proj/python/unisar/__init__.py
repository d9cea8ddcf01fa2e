"""Python bindings for the UniSAR C++ core."""

try:
    from ._unisar import *  # noqa: F401,F403
    from ._unisar import ConfigError, __doc__  # noqa: F401
except ImportError:  # in-tree build: the extension sits on sys.path directly
    from _unisar import *  # noqa: F401,F403
    from _unisar import ConfigError, __doc__  # noqa: F401

"""Pyramid depthwise-separable convolution kernels and cost analysis."""

try:
    # Installed layout: the extension lives inside the package.
    from ._pydnet import *  # noqa: F401,F403
    from ._pydnet import __doc__  # noqa: F401
except ImportError:
    # Build-tree layout: the extension sits on sys.path next to the package.
    from _pydnet import *  # type: ignore # noqa: F401,F403
    from _pydnet import __doc__  # type: ignore # noqa: F401

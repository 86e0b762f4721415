"""Dual semantic fusion video object detection toolkit."""

try:
    from dsfnet._dsfnet import *  # noqa: F401,F403  (installed layout)
except ImportError:  # in-tree build: module directory on PYTHONPATH
    from _dsfnet import *  # noqa: F401,F403

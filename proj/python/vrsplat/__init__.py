# Copyright Contributors to the vrsplat Project
# SPDX-License-Identifier: Apache-2.0
"""Feed-forward Gaussian-splatting view synthesis and viewpoint-robustness toolkit."""

from ._core import *  # noqa: F401,F403
from ._core import __doc__ as _core_doc

__doc__ = _core_doc
__version__ = "0.1.0"

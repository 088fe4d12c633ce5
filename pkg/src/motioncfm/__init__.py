"""Conditional flow matching for text-to-motion generation with a clean-motion target."""

from .estimator import MotionFlowGenerator

__version__ = "0.1.0"
__all__ = ["MotionFlowGenerator", "__version__"]

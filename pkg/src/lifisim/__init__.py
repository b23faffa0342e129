"""Indoor LiFi link simulator with randomly oriented handheld terminals."""

from ._kernels import BACKEND_NAME as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "__version__"]

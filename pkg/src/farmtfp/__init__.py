"""Farm total factor productivity and subsidy impact estimation."""

__version__ = "0.1.0"

from .exceptions import FarmTfpError  # noqa: E402

__all__ = ["FarmTfpError", "__version__"]

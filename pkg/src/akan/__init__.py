"""Analog Kolmogorov-Arnold networks on reconfigurable nonlinear devices.

Training, pruning, and mixed-signal cost estimation for layered networks
whose edge nonlinearities are physical devices described by differentiable
surrogate models.
"""

from .kernels import active_backend

__version__ = "0.1.0"

__all__ = ["active_backend", "__version__"]

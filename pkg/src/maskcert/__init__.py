"""maskcert: certified top-K ranking robustness via randomized masking."""

from ._backend import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]

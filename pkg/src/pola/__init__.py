"""Online recurrent forecasting with meta-learned SGD learning rates."""

__version__ = "0.1.0"

"""S-integral points of SL2 ordered by finite-adelic height: counting, volumes and discrepancy."""

__version__ = "0.1.0"

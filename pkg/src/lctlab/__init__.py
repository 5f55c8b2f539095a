"""Loss-conditional training of binary classifiers under class imbalance."""

__version__ = "0.1.0"

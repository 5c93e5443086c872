"""Common eigenspace problems for commuting local operators."""
__version__ = "0.1.0"

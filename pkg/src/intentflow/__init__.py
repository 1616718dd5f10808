"""Static analysis of Android intent communication across components and apps."""

__version__ = "0.1.0"

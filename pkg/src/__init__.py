"""Exact stationary measure of the multispecies TASEP on a ring"""

__version__ = "0.1.0"

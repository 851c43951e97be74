"""Bootstrappable RNS-CKKS with hybrid key switching and a FAB accelerator cost model."""
from .params import SchemeParams, paper_params

__all__ = ["SchemeParams", "paper_params"]
__version__ = "0.1.0"

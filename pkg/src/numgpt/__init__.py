"""Numeral-aware autoregressive language model and numeracy experiment harness."""

__version__ = "0.1.0"

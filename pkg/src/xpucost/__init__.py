"""Learned hardware cost models for a high-level tensor IR.

Predicts register pressure and vector-ALU utilization of straight-line
``xpu``-dialect functions from their text alone, by tokenizing the IR and
training small sequence-regression networks against analytical cost oracles.
"""

__version__ = "0.1.0"

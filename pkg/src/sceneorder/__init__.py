"""Ordered scene generation: object-set parsing into trees and forests, sequence
orderings, evaluation metrics, and a small autoregressive layout generator."""

__version__ = "0.1.0"

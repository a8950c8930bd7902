"""Time-evolving translation-invariant Wishart-Dirichlet clustering."""

__version__ = "0.1.0"

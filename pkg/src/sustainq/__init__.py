"""Repository mining, sustainability and code-quality metrics, and Bayesian impact analysis."""

__version__ = "0.1.0"

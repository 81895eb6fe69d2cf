"""Cross-country clustering of R0-standardized contact matrices and socioeconomic indicators."""

__version__ = "0.1.0"

"""Second-order (evidential) uncertainty models and a resampling-based faithfulness check."""

__version__ = "0.1.0"

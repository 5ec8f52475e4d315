"""FDG toolkit: feature diversity gain for long-tailed embedding sets."""

__version__ = "0.1.0"

"""Motion-aware contrastive video representation learning on synthetic sprite videos."""

__version__ = "0.1.0"

"""Video polyp detection with temporally concatenated bottleneck features."""

__version__ = "0.1.0"

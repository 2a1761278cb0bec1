"""latentservo: image-state representation workbench on a 2D hand-eye toy task."""

__version__ = "0.1.0"

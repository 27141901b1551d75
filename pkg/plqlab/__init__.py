"""plqlab: pixel-level face image quality maps."""

__version__ = "0.3.0"
__app_name__ = "plqlab"

"""Static person identification from Wi-Fi CSI with a dual-branch transformer."""

__version__ = "0.1.0"

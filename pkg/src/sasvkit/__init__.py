"""Decision layer for spoofing-aware speaker verification."""

__version__ = "0.1.0"

"""Iris verification engine and print-recapture spoof-attack benchmark."""

__version__ = "0.1.0"

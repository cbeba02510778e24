"""Asynchronous detection of self-initiated movement onsets from EEG."""

__version__ = "0.1.0"

"""Query-focused utterance ranking and extraction toolkit."""

__version__ = "0.1.0"

"""Unit tests for steinvar; run with ``python -m unittest discover -s tests``."""

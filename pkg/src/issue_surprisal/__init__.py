"""Surprisal scoring of issue-tracker items and the accompanying analysis toolkit."""

__version__ = "0.1.0"

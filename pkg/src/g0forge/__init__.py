"""Verification and retargeting pipeline for wearable-capture robot demonstrations."""

__version__ = "0.1.0"

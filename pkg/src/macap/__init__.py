"""Effective capacity regions of two-user fading multiple-access channels."""

"""Cooperative cognitive-radio MAC protocols over broadcast erasure channels."""

__version__ = "0.1.0"

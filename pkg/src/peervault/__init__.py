"""Peer-to-peer personal data vault with credential-based access control."""

__version__ = "0.1.0"

"""Verification of isolation invariants in networks with stateful middleboxes."""

__version__ = "0.1.0"

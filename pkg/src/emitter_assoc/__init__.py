"""Emitter association by MIMO channel identification from Zadoff-Chu soundings."""

__version__ = "0.1.0"

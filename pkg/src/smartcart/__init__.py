"""Deterministic desk-scale emulation of an RFID smart-cart checkout system."""

__version__ = "0.1.0"

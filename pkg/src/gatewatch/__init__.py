"""Premises threat-assessment engine.

Turns camera frames into person identifications and natural-language
scene descriptions, persists threat events, and dispatches notifications.
Neural detection models live behind a pluggable inference backend; the
built-in recognizer and attribute classifier are texture-based and run
anywhere.
"""

__version__ = "0.1.0"

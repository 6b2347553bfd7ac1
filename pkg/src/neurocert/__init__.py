"""Neural certificate and controller synthesis with an interval verifier."""

__version__ = "0.1.0"

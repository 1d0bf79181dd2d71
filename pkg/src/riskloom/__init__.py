"""Early risk detection on threaded social-media text, and interview-based BDI-II symptom assessment."""

__version__ = "0.1.0"

"""Desk-scale study of how targeted ASR attacks move speaker embeddings.

Modules: audio, features, ctc, model, attack, verify, phonetics, plus the
harness (synth, targets, pipeline, report, cli).
"""

from .errors import PhondriftError

__version__ = "0.1.0"

__all__ = ["PhondriftError", "__version__"]

"""Two-stage user-defined keyword spotting over phoneme posteriorgrams.

Stage 1 streams a CTC keyword automaton over a posteriorgram and emits
candidate segments; stage 2 verifies each candidate with a small
cross-attention phoneme matcher. Metrics cover AUC, EER and recall at a
fixed false-alarm rate.
"""

from . import ctc, errors, matcher, metrics, pgram, phonemes, pipeline

__version__ = "0.1.0"

__all__ = ["ctc", "errors", "matcher", "metrics", "pgram", "phonemes", "pipeline", "__version__"]

"""Open-vocabulary EEG-to-text decoding and zero-shot EEG sentiment classification."""

__version__ = "0.1.0"

"""Lexicon-enhanced BiLSTM-CRF named entity recognition for low-resource domains."""

__version__ = "0.1.0"

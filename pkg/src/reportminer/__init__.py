"""Drilling report mining: cleaning, word vectors, sentence classifiers, queries."""

__version__ = "0.1.0"

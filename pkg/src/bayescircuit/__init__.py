"""Neural circuits with linear probabilistic population codes, trained to
approximate Bayes filters on unknown stimulus dynamics."""

__version__ = "0.1.0"

"""Semi-supervised fine-grained attack categorization toolkit."""

__version__ = "0.1.0"

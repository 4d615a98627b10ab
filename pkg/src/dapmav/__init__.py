"""Patient-experience discourse analysis for social-media threads.

Stages: acquire posts, preprocess text, fit a nested stochastic block model
on the document-word network, score sentiment, compute positional analytics
and render SVG reports.
"""

__version__ = "0.1.0"

"""Exact computation in free products: trees, Whitehead graphs, currents,
laminations and finite systems of isometries."""

__version__ = "0.1.0"

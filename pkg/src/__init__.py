"""
gsdlab - Gradient subspace distance between private and public datasets
"""

__version__ = "0.1.0"

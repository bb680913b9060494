"""
src package for vecspin.

Keeping this file allows relative imports like:
    from .model import MixtureModel
to work reliably when running main.py.
"""

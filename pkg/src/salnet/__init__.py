"""Patch-based video saliency prediction with a small numpy CNN.

Modules: ``io`` (file formats), ``fixations`` (density maps), ``patches``
(training-sample extraction), ``motion`` and ``contrast`` (feature channels),
``channels`` (channel configurations), ``cnn`` (network and solver),
``saliency`` (dense maps), ``metrics`` (scores), ``pipeline`` / ``cli``.
"""
__version__ = "0.1.0"

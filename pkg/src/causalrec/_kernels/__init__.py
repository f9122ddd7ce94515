"""Masked structural-equation kernels.

``_masked_mlp`` is the compiled Cython implementation; ``fallback`` is the
numpy implementation with the same signatures.  :mod:`causalrec.kernels`
picks one at import time.
"""

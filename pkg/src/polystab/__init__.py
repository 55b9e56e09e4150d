"""
polystab: exact weighted K-stability computations on moment polytopes of projective bundles.
"""
__version__ = "0.1.0"

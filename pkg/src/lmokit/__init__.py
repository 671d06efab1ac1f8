"""Exact combinatorial machinery for degree-truncated LMO-type invariants of
closed oriented 3-manifolds: partition and Brauer categories, Jacobi-diagram
algebras modulo STU/AS/IHX at bounded degree, a truncated Kontsevich integral
on framed oriented tangle words, diagrammatic traces, and the formal Gaussian
integral cross-check.
"""

__version__ = "0.1.0"

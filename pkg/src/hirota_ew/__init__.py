"""Numerical certification toolkit for Hirota-type dispersionless equations.

Builds Einstein-Weyl structures, Lax pairs, Veronese webs, twistor series and
five-dimensional Poisson pencils from a scalar field and checks the
correspondences between them as residual identities.
"""
from . import conventions, fields, geometry, jets, laxweb, pdesolve, poisson, twistor

__version__ = "0.1.0"
__all__ = ["conventions", "fields", "geometry", "jets", "laxweb", "pdesolve", "poisson",
           "twistor", "__version__"]

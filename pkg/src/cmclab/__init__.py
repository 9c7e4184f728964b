"""Numerical laboratory for near-constant-mean-curvature domains.

Implicitly defined bodies go in; curvature deficits, torsion potentials,
integral identity residuals, and tangent-unit-ball approximations with the
full set of closeness metrics come out.
"""

__version__ = "0.1.0"

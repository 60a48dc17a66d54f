"""Random walks on the Riemann sphere driven by measures on PSL2(C).

Modules:

- ``mobius``: matrices, Moebius action, Cartan decomposition, classification
- ``measures``: atomic and sampled matrix measures, moments, elementarity
- ``sphere``: two-chart mesh of the sphere, quadrature, del, Sobolev and
  Orlicz norms, bump functions
- ``transfer``: pullback operator, its norm on forms, convergence experiments
- ``limits``: Lyapunov exponent, boundary map, Green-Kubo variance, CLT
- ``regularity``: disc masses and exponent fits for stationary measures
- ``cli``: the ``sl2walk`` command
"""
__version__ = "0.1.0"

"""Numerical toolkit for the doubly critical heat equation ``u_t = Δu + |u|^{2/N} u``.

Submodules:

* :mod:`critheat.grids` radial grids, time meshes, quadrature and log-weight integrals
* :mod:`critheat.heatsemigroup` radial heat kernel and the semigroup ``S(t)``
* :mod:`critheat.gtool` the weight ``g(s) = s log(rho + s)^q`` and its checks
* :mod:`critheat.initdata` initial data families and ball-mass diagnostics
* :mod:`critheat.duhamel` Duhamel map, supersolutions and fixed-point iterations
* :mod:`critheat.expcli` config-driven experiment runner
"""

__version__ = "0.1.0"

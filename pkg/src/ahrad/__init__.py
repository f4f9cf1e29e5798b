"""Radiation fields and scattering on asymptotically hyperbolic warped products."""

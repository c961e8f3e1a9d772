"""Visco-energetic evolutions of brittle fracture on triangulated 2D domains.

The package simulates quasi-static crack growth in antiplane shear with a
viscously corrected incremental minimization scheme, audits stability and
the energy-dissipation balance of the computed evolutions, and checks
Griffith's criterion along declared crack paths.
"""

__version__ = "0.1.0"

"""Numerical laboratory for Korn-Maxwell-Sobolev-type inequalities.

Submodules:
    operators  - matrix representatives, symbol maps, ellipticity tests
    fields     - grid-sampled fields, differential operators, corpora, I/O
    spectral   - Helmholtz decomposition, Riesz potentials, multipliers
    norms      - Lebesgue, Lorentz, BMO, Hoelder and Gagliardo (semi)norms
    extension  - divergence-free extension and duality-pairing estimator
    harness    - ratio experiments for the inequalities and the blow-up
    cli        - the `kms` command line tool
"""

from . import extension, fields, harness, norms, operators, spectral

__all__ = ["extension", "fields", "harness", "norms", "operators", "spectral"]
__version__ = "0.1.0"

"""Fourier-side operators on periodic fields.

Conventions: the forward coefficient at integer frequency k approximates the
integral of f(x) exp(-2 pi i <k, x>/L) over the box (a DFT scaled by the cell
volume, with the cell-center phase included), so the continuous frequency is
xi = k / L.  All singular symbols are set to zero at the k = 0 mode.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

from . import operators
from .fields import (
    ComponentField,
    GridGeometry,
    MatrixField,
    ScalarGrid,
    VectorField,
    field_from_stack,
)
from .operators import MatrixRep, NotEllipticError

__all__ = [
    "FourierField",
    "forward_fft",
    "inverse_fft",
    "xi_grids",
    "helmholtz",
    "helmholtz_rows",
    "riesz",
    "gamma_s",
    "multiplier_T",
]


def _require_periodic(geometry):
    if not geometry.periodic:
        raise ValueError("operation requires a periodic geometry")


@dataclass(frozen=True, eq=False)
class FourierField:
    """Complex spectral coefficients of a real grid field, one array per
    component, indexed by integer frequency k (stored at index k mod n)."""

    geometry: GridGeometry
    coeffs: np.ndarray  # shape (m, nx, ny, nz), complex

    def __post_init__(self):
        _require_periodic(self.geometry)
        arr = np.ascontiguousarray(self.coeffs, dtype=complex)
        if arr.ndim != 4 or arr.shape[1:] != self.geometry.dims:
            raise ValueError("coefficient stack has wrong shape")
        arr.flags.writeable = False
        object.__setattr__(self, "coeffs", arr)


def _center_phase(geometry):
    # product of exp(-2 pi i k (x0 + h/2) / L) over the three axes
    phases = []
    for a in range(3):
        n = geometry.dims[a]
        lo, _ = geometry.box[a]
        h = geometry.spacing[a]
        L = geometry.lengths[a]
        k = np.fft.fftfreq(n, d=1.0 / n)
        phases.append(np.exp(-2j * np.pi * k * (lo + 0.5 * h) / L))
    return (
        phases[0][:, None, None]
        * phases[1][None, :, None]
        * phases[2][None, None, :]
    )


def forward_fft(field) -> FourierField:
    """Spectral coefficients approximating the Fourier integral of the field."""
    _require_periodic(field.geometry)
    stack = field.component_stack()
    spec = np.fft.fftn(stack, axes=(-3, -2, -1))
    spec *= field.geometry.cell_volume * _center_phase(field.geometry)
    return FourierField(field.geometry, spec)


def inverse_fft(ff: FourierField):
    """Back to a grid field; inverse of :func:`forward_fft` to roundoff."""
    spec = ff.coeffs / (_center_phase(ff.geometry) * ff.geometry.cell_volume)
    stack = np.fft.ifftn(spec, axes=(-3, -2, -1)).real
    return field_from_stack(ff.geometry, stack)


def xi_grids(geometry):
    """Continuous frequency grids xi_a = k_a / L_a, each of shape dims."""
    ks = [
        np.fft.fftfreq(n, d=1.0 / n) / L
        for n, L in zip(geometry.dims, geometry.lengths)
    ]
    return np.meshgrid(*ks, indexing="ij")


# ---------------------------------------------------------------------------
# Helmholtz decomposition


def helmholtz(v: VectorField):
    """Split v = v_div + v_curl with div(v_div) = 0 and curl(v_curl) = 0.

    Per mode k != 0 the curl-free part is the projection of the coefficient
    onto the frequency direction; the k = 0 mode (the mean, a constant and
    hence solenoidal field) is assigned entirely to v_div.
    """
    _require_periodic(v.geometry)
    ff = forward_fft(v)
    x1, x2, x3 = xi_grids(v.geometry)
    q = x1 * x1 + x2 * x2 + x3 * x3
    q[0, 0, 0] = 1.0  # guard; xi = 0 there, so the projection vanishes anyway
    dot = (x1 * ff.coeffs[0] + x2 * ff.coeffs[1] + x3 * ff.coeffs[2]) / q
    curl_part = np.stack([x1 * dot, x2 * dot, x3 * dot])
    div_part = ff.coeffs - curl_part
    v_div = inverse_fft(FourierField(v.geometry, div_part))
    v_curl = inverse_fft(FourierField(v.geometry, curl_part))
    return v_div, v_curl


def helmholtz_rows(F: MatrixField):
    """Row-wise Helmholtz split of a matrix field."""
    divs, curls = [], []
    for i in range(3):
        d, c = helmholtz(F.row(i))
        divs.append(d.values)
        curls.append(c.values)
    return (
        MatrixField(F.geometry, np.stack(divs)),
        MatrixField(F.geometry, np.stack(curls)),
    )


# ---------------------------------------------------------------------------
# Riesz potentials


def gamma_s(s: float, n: int) -> float:
    """Normalization constant pi^(n/2) 2^s Gamma(s/2) / Gamma(n/2 - s/2)."""
    if not 0 < s < n:
        raise ValueError(f"s={s} outside (0, {n}): Gamma pole in the denominator")
    return math.pi ** (n / 2) * 2.0**s * math.gamma(s / 2) / math.gamma(n / 2 - s / 2)


def riesz(field, s: float):
    """Riesz potential of order s: multiplier (2 pi |xi|)^(-s), mean dropped."""
    _require_periodic(field.geometry)
    if not 0 < s < 3:
        raise ValueError(f"riesz order s={s} must lie in (0, 3)")
    ff = forward_fft(field)
    x1, x2, x3 = xi_grids(field.geometry)
    norm = 2.0 * np.pi * np.sqrt(x1 * x1 + x2 * x2 + x3 * x3)
    norm[0, 0, 0] = 1.0
    mult = norm ** (-s)
    mult[0, 0, 0] = 0.0
    return inverse_fft(FourierField(field.geometry, ff.coeffs * mult))


# ---------------------------------------------------------------------------
# ellipticity-based multipliers


@functools.lru_cache(maxsize=16)
def _multiplier_cache(A: MatrixRep, geometry: GridGeometry):
    """Pseudoinverse of the unit-frequency symbol for every lattice mode.

    Unique unit directions are computed once (modes sharing a primitive
    integer direction share their pseudoinverse) and scattered back to the
    full lattice.  Returns (pinv, units) with pinv of shape (M, 3, N) and
    units of shape (M, 3); the k = 0 row is all zeros.
    """
    dims = geometry.dims
    kk = [np.fft.fftfreq(n, d=1.0 / n).astype(np.int64) for n in dims]
    K = np.stack(np.meshgrid(*kk, indexing="ij"), axis=-1).reshape(-1, 3)
    g = np.gcd.reduce(np.abs(K), axis=1)
    nonzero = g > 0
    prim = np.zeros_like(K)
    prim[nonzero] = K[nonzero] // g[nonzero, None]
    uniq, inverse = np.unique(prim, axis=0, return_inverse=True)
    L = np.array(geometry.lengths)
    xi = uniq / L[None, :]
    nrm = np.linalg.norm(xi, axis=1)
    nrm[nrm == 0.0] = 1.0
    units_u = xi / nrm[:, None]
    r = A.entries.reshape(A.n_out, 3, 3)
    syms = np.einsum("nij,sj->sni", r, units_u)
    pinv_u = np.linalg.pinv(syms)
    zero_rows = np.all(uniq == 0, axis=1)
    pinv_u[zero_rows] = 0.0
    units_u[zero_rows] = 0.0
    return pinv_u[inverse], units_u[inverse]


def multiplier_T(A: MatrixRep, i: int, G) -> VectorField:
    """Recover the i-th partial derivative through an elliptic operator.

    Applies, per mode k != 0 and at the unit frequency direction u = xi/|xi|,
    the degree-zero symbol u_i pinv(symbol(A, u)) to the N coefficient
    components of G; the k = 0 mode maps to zero.  Satisfies
    T_i(A[grad psi]) = d_i psi for mean-zero psi.
    """
    if i not in (0, 1, 2):
        raise ValueError("direction index must be 0, 1 or 2")
    _require_periodic(G.geometry)
    report = operators.cached_ellipticity(A)
    if not report.is_elliptic:
        raise NotEllipticError(
            f"operator {A.name or '<anonymous>'} is not elliptic "
            f"(min_singular={report.min_singular:.3e} <= {report.tolerance:.1e})"
        )
    stack = G.component_stack()
    if stack.shape[0] != A.n_out:
        raise ValueError(
            f"field has {stack.shape[0]} components, operator expects {A.n_out}"
        )
    pinv, units = _multiplier_cache(A, G.geometry)
    ff = forward_fft(G)
    flat = ff.coeffs.reshape(A.n_out, -1)
    out = np.einsum("mab,bm->am", pinv, flat) * units[:, i][None, :]
    out = out.reshape((3,) + G.geometry.dims)
    result = inverse_fft(FourierField(G.geometry, out))
    return result

"""First-order constant-coefficient operators via their matrix representatives.

An operator acting on vector fields u: R^3 -> R^3 is described by the linear
map A with (A u)(x) = A[grad u(x)].  Everything here is plain linear algebra
on the 9-dimensional space of 3x3 matrices, vectorized row-major: entry M_ij
sits at index 3*i + j.
"""

from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

__all__ = [
    "MatrixRep",
    "EllipticityReport",
    "NotEllipticError",
    "BUILTIN_NAMES",
    "builtin_operator",
    "symbol",
    "ellipticity",
    "kernel_direction",
    "load_operator",
    "read_operator_file",
    "write_operator_file",
]

BUILTIN_NAMES = ("grad", "sym", "dev", "skew", "trace")

DEFAULT_ELLIPTIC_TOL = 1e-6
DEFAULT_REFINE_TOL = 1e-8
DEFAULT_SPHERE_SAMPLES = 2048


class NotEllipticError(ValueError):
    """Raised when an operation requires an elliptic operator."""


@dataclass(frozen=True, eq=False)
class MatrixRep:
    """Linear map from 3x3 matrices to R^N, stored as an N x 9 array."""

    n_out: int
    entries: np.ndarray
    name: Optional[str] = None

    def __post_init__(self):
        entries = np.ascontiguousarray(self.entries, dtype=np.float64)
        if self.n_out < 1:
            raise ValueError("n_out must be a positive integer")
        if entries.shape != (self.n_out, 9):
            raise ValueError(f"entries must have shape ({self.n_out}, 9)")
        if not np.all(np.isfinite(entries)):
            raise ValueError("entries must be finite")
        entries.flags.writeable = False
        object.__setattr__(self, "entries", entries)

    def apply(self, M):
        """Apply to a single 3x3 matrix, returning a length-N vector."""
        M = np.asarray(M, dtype=np.float64)
        return self.entries @ M.reshape(9)

    def coefficient_matrices(self):
        """The three N x 3 coefficient blocks: block j acts on d_j u."""
        r = self.entries.reshape(self.n_out, 3, 3)
        return tuple(np.ascontiguousarray(r[:, :, j]) for j in range(3))


@dataclass(frozen=True)
class EllipticityReport:
    min_singular: float
    argmin_xi: tuple
    near_kernel_v: tuple
    is_elliptic: bool
    tolerance: float

    def to_dict(self):
        return {
            "min_singular": self.min_singular,
            "argmin_xi": list(self.argmin_xi),
            "near_kernel_v": list(self.near_kernel_v),
            "is_elliptic": self.is_elliptic,
            "tolerance": self.tolerance,
        }


def _vec_index(i, j):
    return 3 * i + j


def _builtin_entries(name):
    if name == "trace":
        out = np.zeros((1, 9))
        for i in range(3):
            out[0, _vec_index(i, i)] = 1.0
        return out
    out = np.zeros((9, 9))
    for i in range(3):
        for j in range(3):
            col = _vec_index(i, j)
            if name == "grad":
                out[_vec_index(i, j), col] += 1.0
            elif name == "sym":
                out[_vec_index(i, j), col] += 0.5
                out[_vec_index(j, i), col] += 0.5
            elif name == "skew":
                out[_vec_index(i, j), col] += 0.5
                out[_vec_index(j, i), col] -= 0.5
            elif name == "dev":
                out[_vec_index(i, j), col] += 0.5
                out[_vec_index(j, i), col] += 0.5
                if i == j:
                    for d in range(3):
                        out[_vec_index(d, d), col] -= 1.0 / 3.0
    return out


@functools.lru_cache(maxsize=None)
def builtin_operator(name: str) -> MatrixRep:
    """One of the five built-in pointwise maps: grad, sym, dev, skew, trace."""
    if name not in BUILTIN_NAMES:
        raise ValueError(f"unknown builtin operator {name!r}; pick from {BUILTIN_NAMES}")
    entries = _builtin_entries(name)
    return MatrixRep(n_out=entries.shape[0], entries=entries, name=name)


def symbol(A: MatrixRep, xi) -> np.ndarray:
    """The N x 3 symbol at frequency xi: its action on v equals A[v ox xi]."""
    xi = np.asarray(xi, dtype=np.float64)
    if xi.shape != (3,) or not np.all(np.isfinite(xi)):
        raise ValueError("xi must be a finite 3-vector")
    r = A.entries.reshape(A.n_out, 3, 3)
    return np.einsum("nij,j->ni", r, xi)


def _symbols_batch(A, xis):
    r = A.entries.reshape(A.n_out, 3, 3)
    return np.einsum("nij,sj->sni", r, xis)


def _min_singular_batch(A, xis):
    if A.n_out < 3:
        return np.zeros(len(xis))
    return np.linalg.svd(_symbols_batch(A, xis), compute_uv=False)[:, -1]


def _min_singular_with_kernel(A, xi):
    sym = symbol(A, xi)
    _, s, vh = np.linalg.svd(sym, full_matrices=True)
    smin = s[-1] if A.n_out >= 3 else 0.0
    return smin, vh[-1]


def _fibonacci_sphere(n):
    i = np.arange(n)
    z = 1.0 - 2.0 * (i + 0.5) / n
    rad = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    theta = np.pi * (3.0 - np.sqrt(5.0)) * i
    return np.stack([rad * np.cos(theta), rad * np.sin(theta), z], axis=1)


def _angles_to_xi(a, b):
    return np.array([math.cos(a) * math.cos(b), math.sin(a) * math.cos(b), math.sin(b)])


def _refine_on_sphere(A, xi0, step0, refine_tol):
    # pattern search in spherical angles; smin is Lipschitz so this converges
    b = math.asin(max(-1.0, min(1.0, xi0[2])))
    a = math.atan2(xi0[1], xi0[0])
    best = _min_singular_batch(A, _angles_to_xi(a, b)[None, :])[0]
    step = step0
    while step >= refine_tol:
        cand = [(a + step, b), (a - step, b), (a, b + step), (a, b - step)]
        xis = np.stack([_angles_to_xi(*c) for c in cand])
        vals = _min_singular_batch(A, xis)
        j = int(np.argmin(vals))
        if vals[j] < best:
            best = vals[j]
            a, b = cand[j]
        else:
            step *= 0.5
    return _angles_to_xi(a, b), best


def ellipticity(
    A: MatrixRep,
    sphere_samples: int = DEFAULT_SPHERE_SAMPLES,
    refine_tol: float = DEFAULT_REFINE_TOL,
    elliptic_tol: float = DEFAULT_ELLIPTIC_TOL,
) -> EllipticityReport:
    """Minimize the smallest singular value of the symbol over the unit sphere.

    A Fibonacci-lattice sweep locates the basin, then coordinate descent on
    the sphere refines the minimizer until the angular step drops below
    ``refine_tol``.  Non-ellipticity is a result, not an error.
    """
    if sphere_samples < 12:
        raise ValueError("sphere_samples must be at least 12")
    if refine_tol <= 0 or elliptic_tol <= 0:
        raise ValueError("tolerances must be positive")
    lattice = _fibonacci_sphere(sphere_samples)
    vals = _min_singular_batch(A, lattice)
    j = int(np.argmin(vals))
    step0 = 2.0 * math.sqrt(4.0 * math.pi / sphere_samples)
    xi, _ = _refine_on_sphere(A, lattice[j], step0, refine_tol)
    xi = xi / np.linalg.norm(xi)
    smin, v = _min_singular_with_kernel(A, xi)
    return EllipticityReport(
        min_singular=float(smin),
        argmin_xi=tuple(xi),
        near_kernel_v=tuple(v / np.linalg.norm(v)),
        is_elliptic=bool(smin > elliptic_tol),
        tolerance=float(elliptic_tol),
    )


@functools.lru_cache(maxsize=64)
def _cached_ellipticity(A):
    return ellipticity(A)


def cached_ellipticity(A: MatrixRep) -> EllipticityReport:
    """Default-parameter ellipticity report, memoized per operator object."""
    return _cached_ellipticity(A)


def kernel_direction(
    A: MatrixRep,
    sphere_samples: int = DEFAULT_SPHERE_SAMPLES,
    refine_tol: float = DEFAULT_REFINE_TOL,
    elliptic_tol: float = DEFAULT_ELLIPTIC_TOL,
) -> Optional[Tuple[np.ndarray, np.ndarray]]:
    """A pair (xi, v) of unit vectors with symbol(A, xi) v = 0, if one exists."""
    rep = ellipticity(A, sphere_samples, refine_tol, elliptic_tol)
    if rep.min_singular > elliptic_tol:
        return None
    return np.array(rep.argmin_xi), np.array(rep.near_kernel_v)


# ---------------------------------------------------------------------------
# operator spec files


def write_operator_file(A: MatrixRep, path):
    doc = {
        "name": A.name or "custom",
        "n_out": A.n_out,
        "entries": [[float(v) for v in row] for row in A.entries],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def read_operator_file(path) -> MatrixRep:
    with open(path) as fh:
        doc = json.load(fh)
    missing = {"name", "n_out", "entries"} - set(doc)
    if missing:
        raise ValueError(f"operator file lacks keys {sorted(missing)}")
    return MatrixRep(
        n_out=int(doc["n_out"]),
        entries=np.asarray(doc["entries"], dtype=np.float64),
        name=str(doc["name"]),
    )


def load_operator(name_or_path: str) -> MatrixRep:
    """Resolve a builtin name or an operator JSON file path."""
    if name_or_path in BUILTIN_NAMES:
        return builtin_operator(name_or_path)
    return read_operator_file(name_or_path)

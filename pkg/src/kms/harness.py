"""Inequality-verification experiments.

Assembles operators, corpora, spectral transforms and norms into ratio
measurements: for every corpus field the left-hand norm is divided by the
sum of the elliptic-part and curl-part norms, and the supremum of that
ratio is tracked across grid refinements.  A bounded, refinement-stable
supremum is the observable stand-in for the uniform constants; for
non-elliptic operators a directional oscillation corpus exhibits blow-up
instead.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import norms
from .fields import (
    GridGeometry,
    MatrixField,
    ScalarGrid,
    VectorField,
    apply_matrix_rep,
    curl_rows,
    gradient,
    periodic_box,
    random_band_limited,
    random_smooth_on_cube,
    unit_cube,
    _bump_profile,
)
from .operators import MatrixRep, NotEllipticError, builtin_operator, cached_ellipticity, kernel_direction

__all__ = [
    "RatioRow",
    "GridResult",
    "RatioReport",
    "ProjectionBasis",
    "CounterexampleSequence",
    "kms_ratio_first",
    "verify_first",
    "verify_subcritical",
    "verify_variant",
    "counterexample_sequence",
    "build_rigid_basis",
    "build_conformal_basis",
    "project_out",
    "verify_second",
]

BOX_LENGTH = 3.0
SUPPORT_RADIUS = BOX_LENGTH / 6.0  # 3x padding between support and period
ZERO_RHS_FACTOR = 1e-14
CSV_HEADER = "index,lhs,rhs_elliptic,rhs_curl,ratio,flag"
VARIANT_KINDS = ("bmo", "morrey", "lorentz", "fractional")


def _fmt(x) -> str:
    return format(float(x), ".17g")


@dataclass(frozen=True)
class RatioRow:
    index: int
    lhs: float
    rhs_elliptic: float
    rhs_curl: float
    ratio: float
    flag: str = ""

    def csv_line(self) -> str:
        return ",".join(
            [
                str(self.index),
                _fmt(self.lhs),
                _fmt(self.rhs_elliptic),
                _fmt(self.rhs_curl),
                _fmt(self.ratio),
                self.flag,
            ]
        )


@dataclass(frozen=True)
class GridResult:
    dims: tuple
    sup_ratio: float
    rows: tuple


@dataclass(frozen=True)
class RatioReport:
    operator_name: str
    kind: str
    params: dict
    seed: int
    grid_results: tuple
    stability_quotients: tuple
    extras: dict = field(default_factory=dict)

    @property
    def sup_ratio(self) -> float:
        return self.grid_results[-1].sup_ratio

    def write_csv(self, path):
        lines = [CSV_HEADER]
        for gr in self.grid_results:
            lines.extend(row.csv_line() for row in gr.rows)
        with open(path, "w", newline="") as fh:
            fh.write("\n".join(lines) + "\n")

    def summary(self) -> dict:
        return {
            "operator": self.operator_name,
            "kind": self.kind,
            "params": self.params,
            "seed": self.seed,
            "grids": [
                {"dims": list(gr.dims), "sup_ratio": gr.sup_ratio}
                for gr in self.grid_results
            ],
            "stability_quotients": list(self.stability_quotients),
            "extras": self.extras,
        }

    def write_summary(self, path):
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _finish_rows(rows):
    valid = [r.ratio for r in rows if not r.flag]
    sup = max(valid) if valid else math.nan
    return sup, tuple(rows)


def _stability(grid_results):
    sups = [gr.sup_ratio for gr in grid_results]
    return tuple(
        sups[i + 1] / sups[i] if sups[i] else math.nan for i in range(len(sups) - 1)
    )


def _make_row(index, F, lhs, rhs_e, rhs_c) -> RatioRow:
    scale = norms.lp_norm(F, 2)
    if scale == 0.0:
        return RatioRow(index, 0.0, 0.0, 0.0, math.nan, "zero-field")
    denom = rhs_e + rhs_c
    if denom < ZERO_RHS_FACTOR * scale:
        return RatioRow(index, lhs, rhs_e, rhs_c, math.nan, "zero-rhs")
    return RatioRow(index, lhs, rhs_e, rhs_c, lhs / denom, "")


def _corpus_rows(corpus_size, make_item, jobs=1):
    if jobs and jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(make_item, range(corpus_size)))
    return [make_item(i) for i in range(corpus_size)]


def _require_elliptic(A):
    report = cached_ellipticity(A)
    if not report.is_elliptic:
        raise NotEllipticError(
            f"operator {A.name or '<anonymous>'} is not elliptic "
            f"(min_singular={report.min_singular:.3e}); "
            "use counterexample_sequence to exhibit the blow-up instead"
        )


def _default_kmax(grids):
    return max(1, min(int(g) for g in grids) // 8)


# ---------------------------------------------------------------------------
# first-kind inequality (compactly supported fields, scaling exponents)


def kms_ratio_first(A: MatrixRep, F: MatrixField, p: float, index: int = 0) -> RatioRow:
    """One corpus row of the first-kind ratio at exponent pair (p*, p)."""
    pstar = norms.sobolev_conjugate(p)
    lhs = norms.lp_norm(F, pstar)
    rhs_e = norms.lp_norm(apply_matrix_rep(A, F), pstar)
    rhs_c = norms.lp_norm(curl_rows(F), p)
    return _make_row(index, F, lhs, rhs_e, rhs_c)


def verify_first(
    A: MatrixRep,
    p: float,
    corpus_size: int,
    seed: int,
    grids,
    kmax: Optional[int] = None,
    support_radius: float = SUPPORT_RADIUS,
    jobs: int = 1,
) -> RatioReport:
    """Measure the first-kind ratio over a seeded corpus at several grids.

    The corpus is band-limited with kmax tied to the coarsest grid, so every
    grid samples the same smooth compactly supported fields and the
    grid-to-grid quotient of sup ratios isolates discretization error.
    """
    _require_elliptic(A)
    if not 1 <= p < 3:
        raise ValueError(f"p={p} must lie in [1, 3)")
    kmax = kmax or _default_kmax(grids)
    grid_results = []
    for n in grids:
        geometry = periodic_box(int(n), BOX_LENGTH)

        def item(i):
            F = random_band_limited(seed + i, geometry, kmax, support_radius)
            return kms_ratio_first(A, F, p, index=i)

        sup, rows = _finish_rows(_corpus_rows(corpus_size, item, jobs))
        grid_results.append(GridResult(geometry.dims, sup, rows))
    return RatioReport(
        operator_name=A.name or "custom",
        kind="first_kind",
        params={"p": p, "kmax": kmax, "support_radius": support_radius,
                "corpus_size": corpus_size},
        seed=seed,
        grid_results=tuple(grid_results),
        stability_quotients=_stability(grid_results),
    )


def verify_subcritical(
    A: MatrixRep,
    p: float,
    corpus_size: int,
    seed: int,
    grids,
    kmax: Optional[int] = None,
    radii=(SUPPORT_RADIUS, SUPPORT_RADIUS / 2.0),
    jobs: int = 1,
) -> RatioReport:
    """Bounded-domain variant: all three norms at the same exponent p.

    This version lacks the scaling-correct exponents, so the report also
    records the sup ratio under dyadic shrinking of the support radius,
    where the drift makes the inconvenient scaling visible.
    """
    _require_elliptic(A)
    if not 1 < p < math.inf:
        raise ValueError(f"p={p} must lie in (1, inf)")
    kmax = kmax or _default_kmax(grids)
    sweep = []
    grid_results = []
    for radius in radii:
        for n in grids:
            geometry = periodic_box(int(n), BOX_LENGTH)

            def item(i):
                F = random_band_limited(seed + i, geometry, kmax, radius)
                lhs = norms.lp_norm(F, p)
                rhs_e = norms.lp_norm(apply_matrix_rep(A, F), p)
                rhs_c = norms.lp_norm(curl_rows(F), p)
                return _make_row(i, F, lhs, rhs_e, rhs_c)

            sup, rows = _finish_rows(_corpus_rows(corpus_size, item, jobs))
            sweep.append({"support_radius": radius, "dims": list(geometry.dims),
                          "sup_ratio": sup})
            if radius == radii[0]:
                grid_results.append(GridResult(geometry.dims, sup, rows))
    return RatioReport(
        operator_name=A.name or "custom",
        kind="subcritical",
        params={"p": p, "kmax": kmax, "corpus_size": corpus_size},
        seed=seed,
        grid_results=tuple(grid_results),
        stability_quotients=_stability(grid_results),
        extras={"support_sweep": sweep},
    )


def _variant_norms(kind, p, q, theta):
    """Return (params, lhs/rhs-elliptic norm, curl norm) for a variant kind."""
    if kind == "bmo":
        if p not in (None, 3):
            raise ValueError("bmo variant fixes p = 3")
        return (
            {"p": 3.0},
            lambda f: norms.bmo_norm(f),
            lambda f: norms.lp_norm(f, 3.0),
        )
    if kind == "morrey":
        if p is None or p <= 3:
            raise ValueError("morrey variant needs p > 3")
        alpha = 1.0 - 3.0 / p
        return (
            {"p": p, "alpha": alpha},
            lambda f: norms.holder_seminorm(f, alpha),
            lambda f: norms.lp_norm(f, p),
        )
    if kind == "lorentz":
        if p is None or not 1 <= p < 3:
            raise ValueError("lorentz variant needs 1 <= p < 3")
        if q is None or (q != math.inf and q < 1):
            raise ValueError("lorentz variant needs q >= 1 or q = inf")
        pstar = norms.sobolev_conjugate(p)
        return (
            {"p": p, "q": q, "p_star": pstar},
            lambda f: norms.lorentz_norm(f, pstar, q),
            lambda f: norms.lorentz_norm(f, p, q),
        )
    if kind == "fractional":
        if theta is None or not 0 < theta < 1:
            raise ValueError("fractional variant needs theta in (0, 1)")
        if p is None or not 1 <= p < 3:
            raise ValueError("fractional variant needs 1 <= p < 3")
        pbar = norms.frac_conjugate(p, theta)
        return (
            {"p": p, "theta": theta, "p_star_theta": pbar},
            lambda f: norms.gagliardo_seminorm(f, theta, pbar),
            lambda f: norms.lp_norm(f, p),
        )
    raise ValueError(f"unknown variant kind {kind!r}; pick from {VARIANT_KINDS}")


def verify_variant(
    A: MatrixRep,
    kind: str,
    corpus_size: int,
    seed: int,
    grids,
    p: Optional[float] = None,
    q: Optional[float] = None,
    theta: Optional[float] = None,
    kmax: Optional[int] = None,
    support_radius: float = SUPPORT_RADIUS,
    jobs: int = 1,
) -> RatioReport:
    """First-kind experiment with BMO / Hoelder / Lorentz / Gagliardo norms."""
    _require_elliptic(A)
    params, main_norm, curl_norm = _variant_norms(kind, p, q, theta)
    kmax = kmax or _default_kmax(grids)
    if kind == "fractional" and max(int(g) for g in grids) > 16:
        raise ValueError("fractional variant is limited to grids of at most 16^3")
    grid_results = []
    for n in grids:
        geometry = periodic_box(int(n), BOX_LENGTH)

        def item(i):
            F = random_band_limited(seed + i, geometry, kmax, support_radius)
            lhs = main_norm(F)
            rhs_e = main_norm(apply_matrix_rep(A, F))
            rhs_c = curl_norm(curl_rows(F))
            return _make_row(i, F, lhs, rhs_e, rhs_c)

        sup, rows = _finish_rows(_corpus_rows(corpus_size, item, jobs))
        grid_results.append(GridResult(geometry.dims, sup, rows))
    extras = {}
    if kind == "fractional" and theta is not None and theta > 0.9:
        extras["ill_conditioned"] = (
            f"theta={theta} > 0.9: the Gagliardo kernel is nearly non-integrable"
        )
    params = dict(params, kmax=kmax, corpus_size=corpus_size)
    return RatioReport(
        operator_name=A.name or "custom",
        kind=kind,
        params=params,
        seed=seed,
        grid_results=tuple(grid_results),
        stability_quotients=_stability(grid_results),
        extras=extras,
    )


# ---------------------------------------------------------------------------
# non-ellipticity blow-up


@dataclass(frozen=True)
class CounterexampleSequence:
    operator_name: str
    xi: tuple
    v: tuple
    rows: tuple  # of (k, norm_grad, norm_op, ratio)

    def write_csv(self, path):
        lines = ["k,norm_grad,norm_op,ratio"]
        for k, ng, no, r in self.rows:
            lines.append(f"{k},{_fmt(ng)},{_fmt(no)},{_fmt(r)}")
        with open(path, "w", newline="") as fh:
            fh.write("\n".join(lines) + "\n")


def counterexample_sequence(
    A: MatrixRep,
    ks,
    p: float,
    grid: int,
    rho_radius: float = 1.2,
    eta_radius: float = 1.0,
) -> CounterexampleSequence:
    """Oscillation corpus along a symbol kernel direction.

    With symbol(A, xi) v = 0, the fields rho(x) eta_k(<x, xi>) v oscillate at
    frequency k in the annihilated direction: the operator part stays O(1)
    while the full gradient grows like k, so the ratio blows up.
    """
    pair = kernel_direction(A)
    if pair is None:
        raise NotEllipticError(
            f"operator {A.name or '<anonymous>'} is elliptic; "
            "no symbol kernel direction exists"
        )
    xi, v = pair
    geometry = periodic_box(int(grid), BOX_LENGTH)
    if max(ks) * BOX_LENGTH / (2.0 * math.pi) > grid / 4:
        raise ValueError(
            f"max oscillation frequency {max(ks)} is not resolvable on a "
            f"{grid}^3 grid (lattice frequency above grid/4)"
        )
    X, Y, Z = geometry.node_mesh()
    r = np.sqrt(X * X + Y * Y + Z * Z) / rho_radius
    rho = _bump_profile(r)
    t = xi[0] * X + xi[1] * Y + xi[2] * Z
    chi_t = _bump_profile(np.abs(t) / eta_radius)
    rows = []
    for k in ks:
        window = rho * chi_t * np.sin(float(k) * t)
        psi = VectorField(geometry, np.stack([v[0] * window, v[1] * window, v[2] * window]))
        D = gradient(psi)
        norm_grad = norms.lp_norm(D, p)
        norm_op = norms.lp_norm(apply_matrix_rep(A, D), p)
        rows.append((int(k), norm_grad, norm_op, norm_grad / norm_op))
    return CounterexampleSequence(
        operator_name=A.name or "custom",
        xi=tuple(float(c) for c in xi),
        v=tuple(float(c) for c in v),
        rows=tuple(rows),
    )


# ---------------------------------------------------------------------------
# second-kind inequality on the unit cube (non-zero boundary values)


@dataclass(frozen=True)
class ProjectionBasis:
    """Discrete-L2 orthonormal basis of constant-skew or conformal gradients."""

    space: str
    fields: tuple

    @property
    def dimension(self):
        return len(self.fields)

    def gram(self):
        vol = self.fields[0].geometry.cell_volume
        flat = np.stack([b.values.reshape(-1) for b in self.fields])
        return flat @ flat.T * vol


def _orthonormalize(generators, geometry):
    vol = geometry.cell_volume
    flat = np.stack([g.reshape(-1) for g in generators])
    gram = flat @ flat.T * vol
    try:
        L = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError("projection generators are numerically dependent") from exc
    ortho = np.linalg.solve(L, flat)
    return tuple(
        MatrixField(geometry, row.reshape((3, 3) + geometry.dims)) for row in ortho
    )


def _check_unit_cube_geometry(geometry):
    if geometry.periodic or geometry.box != ((0.0, 1.0), (0.0, 1.0), (0.0, 1.0)):
        raise ValueError("projection bases are built on the unit cube (0,1)^3")


def build_rigid_basis(geometry) -> ProjectionBasis:
    """Orthonormal basis of the constant skew 3x3 matrices (dimension 3)."""
    _check_unit_cube_geometry(geometry)
    ones = np.ones(geometry.dims)
    gens = []
    for i, j in ((0, 1), (0, 2), (1, 2)):
        g = np.zeros((3, 3) + geometry.dims)
        g[i, j] = ones
        g[j, i] = -ones
        gens.append(g)
    return ProjectionBasis("rigid", _orthonormalize(gens, geometry))


def build_conformal_basis(geometry) -> ProjectionBasis:
    """Orthonormal basis of the gradients of conformal Killing fields.

    Seven generators: three constant skews, the identity (dilations) and the
    three affine fields 2(x ox a - a ox x + <a, x> Id); translations drop out
    under the gradient.
    """
    _check_unit_cube_geometry(geometry)
    ones = np.ones(geometry.dims)
    coords = geometry.node_mesh()
    gens = []
    for i, j in ((0, 1), (0, 2), (1, 2)):
        g = np.zeros((3, 3) + geometry.dims)
        g[i, j] = ones
        g[j, i] = -ones
        gens.append(g)
    ident = np.zeros((3, 3) + geometry.dims)
    for i in range(3):
        ident[i, i] = ones
    gens.append(ident)
    for a in range(3):
        g = np.zeros((3, 3) + geometry.dims)
        for i in range(3):
            g[i, a] += 2.0 * coords[i]
            g[a, i] -= 2.0 * coords[i]
            g[i, i] += 2.0 * coords[a]
        gens.append(g)
    return ProjectionBasis("conformal", _orthonormalize(gens, geometry))


def project_out(F: MatrixField, basis: ProjectionBasis) -> MatrixField:
    """Remove the discrete-L2 projection of F onto the basis span."""
    if F.geometry != basis.fields[0].geometry:
        raise ValueError("field and basis live on different grids")
    vol = F.geometry.cell_volume
    out = F.values.copy()
    for b in basis.fields:
        coeff = float(np.sum(F.values * b.values)) * vol
        out -= coeff * b.values
    return MatrixField(F.geometry, out)


def verify_second(
    mode: str,
    p: float,
    corpus_size: int,
    seed: int,
    grids,
    kmax: Optional[int] = None,
    jobs: int = 1,
) -> RatioReport:
    """Second-kind experiment on the unit cube with non-zero boundary values.

    Corpus fields are smooth but in no way periodic; each is first made
    orthogonal to the mode's nullspace gradients (constant skews for sym,
    conformal gradients for dev), then the ratio is measured with the cube
    finite-difference curl.
    """
    if mode not in ("sym", "dev"):
        raise ValueError(f"mode must be 'sym' or 'dev', got {mode!r}")
    if not 1 <= p < 3:
        raise ValueError(f"p={p} must lie in [1, 3)")
    pstar = norms.sobolev_conjugate(p)
    A = builtin_operator(mode)
    kmax = kmax or _default_kmax(grids)
    grid_results = []
    for n in grids:
        geometry = unit_cube(int(n))
        basis = (
            build_rigid_basis(geometry)
            if mode == "sym"
            else build_conformal_basis(geometry)
        )

        def item(i):
            F = project_out(random_smooth_on_cube(seed + i, geometry, kmax), basis)
            lhs = norms.lp_norm(F, pstar)
            rhs_e = norms.lp_norm(apply_matrix_rep(A, F), pstar)
            rhs_c = norms.lp_norm(curl_rows(F), p)
            return _make_row(i, F, lhs, rhs_e, rhs_c)

        sup, rows = _finish_rows(_corpus_rows(corpus_size, item, jobs))
        grid_results.append(GridResult(geometry.dims, sup, rows))
    return RatioReport(
        operator_name=mode,
        kind=f"second_{mode}",
        params={"p": p, "kmax": kmax, "corpus_size": corpus_size},
        seed=seed,
        grid_results=tuple(grid_results),
        stability_quotients=_stability(grid_results),
    )

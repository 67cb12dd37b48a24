"""Discrete norms and seminorms used by the inequality experiments.

Pointwise magnitude is always the Frobenius norm across components, and
volume integrals use the midpoint rule (cell volume per node).  A ``mask``
argument, when given, restricts a norm to an index sub-box
``((i0, i1), (j0, j1), (k0, k1))`` with half-open ranges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

__all__ = [
    "lp_norm",
    "sobolev_conjugate",
    "frac_conjugate",
    "lorentz_norm",
    "bmo_norm",
    "holder_seminorm",
    "gagliardo_seminorm",
    "NormSpec",
]

GAGLIARDO_MAX_NODES = 16**3


def _slices(mask):
    return tuple(slice(int(lo), int(hi)) for lo, hi in mask)


def _magnitude(field, mask=None):
    stack = field.component_stack()
    if mask is not None:
        stack = stack[(slice(None),) + _slices(mask)]
    return np.sqrt(np.einsum("c...,c...->...", stack, stack))


def _masked_coords(geometry, mask=None):
    axes = [geometry.axis_nodes(a) for a in range(3)]
    if mask is not None:
        axes = [ax[slice(int(lo), int(hi))] for ax, (lo, hi) in zip(axes, mask)]
    return np.meshgrid(*axes, indexing="ij")


def lp_norm(field, p: float, mask=None) -> float:
    """Midpoint-rule L^p norm, Frobenius magnitude across components."""
    if p < 1:
        raise ValueError(f"p={p} must be >= 1")
    mag = _magnitude(field, mask)
    vol = field.geometry.cell_volume
    return float((np.sum(mag**p) * vol) ** (1.0 / p))


def sobolev_conjugate(p: float) -> float:
    """3p / (3 - p), defined for 1 <= p < 3."""
    if not 1 <= p < 3:
        raise ValueError(f"sobolev_conjugate needs 1 <= p < 3, got p={p}")
    return 3.0 * p / (3.0 - p)


def frac_conjugate(p: float, theta: float) -> float:
    """3p / (3 - (1 - theta) p), the fractional-variant target exponent."""
    if not 0 < theta < 1:
        raise ValueError(f"theta={theta} must lie in (0, 1)")
    denom = 3.0 - (1.0 - theta) * p
    if p < 1 or denom <= 0:
        raise ValueError(f"(p, theta)=({p}, {theta}) outside the admissible range")
    return 3.0 * p / denom


def lorentz_norm(field, p: float, q: float, mask=None) -> float:
    """Lorentz (p, q) norm, exact on the empirical step distribution.

    With the decreasing values v_1 >= v_2 >= ... and cumulative weights W_j
    the distribution-function integral is a finite sum; q = inf uses the
    weak-type supremum sup_t t * measure(|f| >= t)^(1/p).
    """
    if p < 1:
        raise ValueError(f"p={p} must be >= 1")
    if q != math.inf and q < 1:
        raise ValueError(f"q={q} must be >= 1 or inf")
    mag = _magnitude(field, mask).ravel()
    vol = field.geometry.cell_volume
    v = np.sort(mag)[::-1]
    v = v[v > 0.0]
    if v.size == 0:
        return 0.0
    W = vol * np.arange(1, v.size + 1, dtype=np.float64)
    if q == math.inf:
        return float(np.max(v * W ** (1.0 / p)))
    v_next = np.append(v[1:], 0.0)
    terms = W ** (q / p) * (v**q - v_next**q)
    return float((p / q * np.sum(terms)) ** (1.0 / q))


def bmo_norm(field, mask=None) -> float:
    """Dyadic BMO: sup over grid-aligned dyadic cubes of the mean absolute
    deviation from the cube mean (componentwise means, Frobenius deviation)."""
    stack = field.component_stack()
    if mask is not None:
        stack = stack[(slice(None),) + _slices(mask)]
    dims = stack.shape[1:]
    best = 0.0
    m = 0
    while 2**m <= min(dims):
        side = 2**m
        nb = [d // side for d in dims]
        crop = stack[:, : nb[0] * side, : nb[1] * side, : nb[2] * side]
        blocks = crop.reshape(
            crop.shape[0], nb[0], side, nb[1], side, nb[2], side
        )
        means = blocks.mean(axis=(2, 4, 6))
        dev = blocks - means[:, :, None, :, None, :, None]
        osc = np.sqrt(np.einsum("c...,c...->...", dev, dev)).mean(axis=(1, 3, 5))
        if osc.size:
            best = max(best, float(osc.max()))
        m += 1
    return best


def _pairwise_max_quotient(values, coords, alpha, exclude_diagonal=True):
    # exact max over all pairs, blocked to bound memory
    M = values.shape[0]
    best = 0.0
    block = 2048
    for start in range(0, M, block):
        stop = min(M, start + block)
        dv = values[start:stop, None, :] - values[None, :, :]
        num = np.sqrt(np.einsum("ijc,ijc->ij", dv, dv))
        dx = coords[start:stop, None, :] - coords[None, :, :]
        dist = np.sqrt(np.einsum("ijc,ijc->ij", dx, dx))
        if exclude_diagonal:
            idx = np.arange(start, stop)
            dist[np.arange(stop - start), idx] = np.inf
        best = max(best, float(np.max(num / dist**alpha)))
    return best


def holder_seminorm(
    field, alpha: float, mask=None, pair_budget: int = 4096, seed: int = 0
) -> float:
    """Max over node pairs of |f(x)-f(y)| / |x-y|^alpha.

    Exact double loop when the node count is at most ``pair_budget``;
    otherwise a seeded random subsample of pair_budget^2 pairs, in which case
    the result is a lower bound on the exact discrete supremum.
    """
    if not 0 < alpha < 1:
        raise ValueError(f"alpha={alpha} must lie in (0, 1)")
    stack = field.component_stack()
    if mask is not None:
        stack = stack[(slice(None),) + _slices(mask)]
    values = stack.reshape(stack.shape[0], -1).T
    X, Y, Z = _masked_coords(field.geometry, mask)
    coords = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)
    M = values.shape[0]
    if M <= pair_budget:
        return _pairwise_max_quotient(values, coords, alpha)
    rng = np.random.default_rng(seed)
    n_pairs = min(pair_budget * pair_budget, 2**24)
    best = 0.0
    chunk = 1 << 20
    drawn = 0
    while drawn < n_pairs:
        take = min(chunk, n_pairs - drawn)
        ii = rng.integers(0, M, take)
        jj = rng.integers(0, M, take)
        ok = ii != jj
        dv = values[ii[ok]] - values[jj[ok]]
        num = np.sqrt(np.einsum("ic,ic->i", dv, dv))
        dx = coords[ii[ok]] - coords[jj[ok]]
        dist = np.sqrt(np.einsum("ic,ic->i", dx, dx))
        if num.size:
            best = max(best, float(np.max(num / dist**alpha)))
        drawn += take
    return best


def gagliardo_seminorm(field, theta: float, p: float, mask=None) -> float:
    """Fractional Sobolev seminorm by exact double midpoint sum, diagonal
    excluded (the single-cell singularity is below quadrature accuracy)."""
    if not 0 < theta < 1:
        raise ValueError(f"theta={theta} must lie in (0, 1)")
    if p < 1:
        raise ValueError(f"p={p} must be >= 1")
    stack = field.component_stack()
    if mask is not None:
        stack = stack[(slice(None),) + _slices(mask)]
    values = stack.reshape(stack.shape[0], -1).T
    M = values.shape[0]
    if M > GAGLIARDO_MAX_NODES:
        raise ValueError(
            f"grid has {M} nodes > {GAGLIARDO_MAX_NODES}; restrict with a mask "
            "or evaluate on a coarser grid"
        )
    X, Y, Z = _masked_coords(field.geometry, mask)
    coords = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)
    vol = field.geometry.cell_volume
    total = 0.0
    block = 1024
    expo = 3.0 + theta * p
    for start in range(0, M, block):
        stop = min(M, start + block)
        dv = values[start:stop, None, :] - values[None, :, :]
        num = np.sqrt(np.einsum("ijc,ijc->ij", dv, dv)) ** p
        dx = coords[start:stop, None, :] - coords[None, :, :]
        dist2 = np.einsum("ijc,ijc->ij", dx, dx)
        idx = np.arange(start, stop)
        dist2[np.arange(stop - start), idx] = np.inf
        total += float(np.sum(num / dist2 ** (expo / 2.0)))
    return float((total * vol * vol) ** (1.0 / p))


@dataclass(frozen=True)
class NormSpec:
    """Parameter bundle selecting one of the implemented (semi)norms."""

    kind: str
    p: Optional[float] = None
    q: Optional[float] = None
    alpha: Optional[float] = None
    theta: Optional[float] = None
    domain_mask: Optional[tuple] = None

    _REQUIRED = {
        "lp": ("p",),
        "lorentz": ("p", "q"),
        "weak": ("p",),
        "bmo": (),
        "holder": ("alpha",),
        "gagliardo": ("theta", "p"),
    }

    def __post_init__(self):
        if self.kind not in self._REQUIRED:
            raise ValueError(f"unknown norm kind {self.kind!r}")
        required = set(self._REQUIRED[self.kind])
        given = {
            name
            for name in ("p", "q", "alpha", "theta")
            if getattr(self, name) is not None
        }
        if given != required:
            raise ValueError(
                f"norm kind {self.kind!r} needs exactly parameters "
                f"{sorted(required)}, got {sorted(given)}"
            )
        if self.p is not None and self.p < 1:
            raise ValueError("p must be >= 1")
        if self.q is not None and self.q != math.inf and self.q < 1:
            raise ValueError("q must be >= 1 or inf")
        if self.alpha is not None and not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.theta is not None and not 0 < self.theta < 1:
            raise ValueError("theta must lie in (0, 1)")

    def evaluate(self, field) -> float:
        mask = self.domain_mask
        if self.kind == "lp":
            return lp_norm(field, self.p, mask)
        if self.kind == "lorentz":
            return lorentz_norm(field, self.p, self.q, mask)
        if self.kind == "weak":
            return lorentz_norm(field, self.p, math.inf, mask)
        if self.kind == "bmo":
            return bmo_norm(field, mask)
        if self.kind == "holder":
            return holder_seminorm(field, self.alpha, mask)
        return gagliardo_seminorm(field, self.theta, self.p, mask)

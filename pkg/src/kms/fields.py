"""Grid-sampled scalar/vector/matrix fields on periodic tori and cubes.

Fields live on uniform cell-centered grids (no node touches the boundary).
Periodic geometries use spectral differentiation, cube geometries use
second-order centered differences with one-sided second-order stencils in
the boundary layer.  All field values are immutable after construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .operators import MatrixRep

__all__ = [
    "GridGeometry",
    "ScalarGrid",
    "VectorField",
    "MatrixField",
    "ComponentField",
    "periodic_box",
    "unit_cube",
    "field_from_stack",
    "apply_matrix_rep",
    "gradient",
    "scalar_gradient",
    "div",
    "curl",
    "curl_rows",
    "div_rows",
    "random_band_limited",
    "random_vector_band_limited",
    "random_solenoidal",
    "random_smooth_on_cube",
    "bump_window",
    "bump_trig_scalar",
    "read_field",
    "write_field",
    "FieldIOError",
    "HeaderFormatError",
    "PayloadSizeError",
    "NonFiniteDataError",
]


class FieldIOError(Exception):
    """Base class for field-file errors."""

    code = "io-error"


class HeaderFormatError(FieldIOError):
    code = "bad-header"


class PayloadSizeError(FieldIOError):
    code = "size-mismatch"


class NonFiniteDataError(FieldIOError):
    code = "non-finite"


@dataclass(frozen=True)
class GridGeometry:
    """Uniform cell-centered grid over a 3-D box.

    Nodes along axis a sit at ``x0 + (j + 1/2) h`` for ``j = 0..n-1`` with
    ``h = (x1 - x0)/n``, so reflections across box faces map nodes to nodes.
    """

    dims: tuple
    box: tuple
    periodic: bool

    def __post_init__(self):
        dims = tuple(int(n) for n in self.dims)
        box = tuple((float(lo), float(hi)) for lo, hi in self.box)
        if len(dims) != 3 or len(box) != 3:
            raise ValueError("geometry is three dimensional")
        if any(n < 4 for n in dims):
            raise ValueError(f"need at least 4 nodes per axis, got {dims}")
        if any(hi <= lo for lo, hi in box):
            raise ValueError(f"degenerate box {box}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "box", box)
        object.__setattr__(self, "periodic", bool(self.periodic))

    @property
    def lengths(self):
        return tuple(hi - lo for lo, hi in self.box)

    @property
    def spacing(self):
        return tuple((hi - lo) / n for (lo, hi), n in zip(self.box, self.dims))

    @property
    def cell_volume(self):
        h = self.spacing
        return h[0] * h[1] * h[2]

    def axis_nodes(self, axis):
        lo, _ = self.box[axis]
        h = self.spacing[axis]
        return lo + (np.arange(self.dims[axis]) + 0.5) * h

    def node_mesh(self):
        """Return the three coordinate arrays X, Y, Z of shape ``dims``."""
        return np.meshgrid(
            self.axis_nodes(0), self.axis_nodes(1), self.axis_nodes(2), indexing="ij"
        )

    @property
    def center(self):
        return tuple(0.5 * (lo + hi) for lo, hi in self.box)


def periodic_box(n, length=3.0, center=(0.0, 0.0, 0.0)):
    """Cubic periodic geometry of side ``length`` centered at ``center``."""
    if isinstance(n, int):
        n = (n, n, n)
    box = tuple((c - length / 2.0, c + length / 2.0) for c in center)
    return GridGeometry(tuple(n), box, periodic=True)


def unit_cube(n):
    """Non-periodic geometry on the unit cube (0,1)^3."""
    if isinstance(n, int):
        n = (n, n, n)
    return GridGeometry(tuple(n), ((0.0, 1.0), (0.0, 1.0), (0.0, 1.0)), periodic=False)


def _freeze(values, shape):
    arr = np.ascontiguousarray(values, dtype=np.float64)
    if arr.shape != shape:
        raise ValueError(f"expected shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("field values must be finite")
    arr.flags.writeable = False
    return arr


class _FieldBase:
    """Shared arithmetic for the concrete field classes."""

    def component_stack(self):
        """Values reshaped to (m, nx, ny, nz)."""
        return self.values.reshape((-1,) + self.geometry.dims)

    @property
    def n_components(self):
        return self.component_stack().shape[0]

    def __add__(self, other):
        self._check_compatible(other)
        return type(self)(self.geometry, self.values + other.values)

    def __sub__(self, other):
        self._check_compatible(other)
        return type(self)(self.geometry, self.values - other.values)

    def __mul__(self, t):
        return type(self)(self.geometry, self.values * float(t))

    __rmul__ = __mul__

    def __neg__(self):
        return type(self)(self.geometry, -self.values)

    def _check_compatible(self, other):
        if type(other) is not type(self) or other.geometry != self.geometry:
            raise ValueError("fields live on different grids or have different rank")


@dataclass(frozen=True, eq=False)
class ScalarGrid(_FieldBase):
    geometry: GridGeometry
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _freeze(self.values, self.geometry.dims))


@dataclass(frozen=True, eq=False)
class VectorField(_FieldBase):
    geometry: GridGeometry
    values: np.ndarray  # shape (3, nx, ny, nz)

    def __post_init__(self):
        object.__setattr__(
            self, "values", _freeze(self.values, (3,) + self.geometry.dims)
        )

    def component(self, i):
        return ScalarGrid(self.geometry, self.values[i])


@dataclass(frozen=True, eq=False)
class MatrixField(_FieldBase):
    geometry: GridGeometry
    values: np.ndarray  # shape (3, 3, nx, ny, nz); [i, j] is entry F_ij

    def __post_init__(self):
        object.__setattr__(
            self, "values", _freeze(self.values, (3, 3) + self.geometry.dims)
        )

    def row(self, i):
        """The i-th row as a vector field."""
        return VectorField(self.geometry, self.values[i])

    def transpose(self):
        return MatrixField(self.geometry, np.swapaxes(self.values, 0, 1))

    def sym(self):
        return MatrixField(
            self.geometry, 0.5 * (self.values + np.swapaxes(self.values, 0, 1))
        )

    def skew(self):
        return MatrixField(
            self.geometry, 0.5 * (self.values - np.swapaxes(self.values, 0, 1))
        )

    def trace(self):
        return ScalarGrid(self.geometry, np.einsum("iixyz->xyz", self.values))

    def dev(self):
        s = 0.5 * (self.values + np.swapaxes(self.values, 0, 1))
        tr = np.einsum("iixyz->xyz", self.values) / 3.0
        out = s.copy()
        for i in range(3):
            out[i, i] -= tr
        return MatrixField(self.geometry, out)


@dataclass(frozen=True, eq=False)
class ComponentField(_FieldBase):
    """Generic N-component field (outputs of non-square matrix representatives)."""

    geometry: GridGeometry
    values: np.ndarray  # shape (N, nx, ny, nz)

    def __post_init__(self):
        arr = np.ascontiguousarray(self.values, dtype=np.float64)
        if arr.ndim != 4 or arr.shape[1:] != self.geometry.dims:
            raise ValueError("component stack has wrong shape")
        if not np.all(np.isfinite(arr)):
            raise ValueError("field values must be finite")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)


def field_from_stack(geometry, stack):
    """Wrap an (m, nx, ny, nz) array as the natural field type for m."""
    stack = np.asarray(stack)
    m = stack.shape[0]
    if m == 1:
        return ScalarGrid(geometry, stack[0])
    if m == 3:
        return VectorField(geometry, stack)
    if m == 9:
        return MatrixField(geometry, stack.reshape((3, 3) + geometry.dims))
    return ComponentField(geometry, stack)


def apply_matrix_rep(A: MatrixRep, F: MatrixField):
    """Apply a matrix representative pointwise: component k is row k of A
    acting on vec(F(x)) in row-major order."""
    stack = F.values.reshape((9,) + F.geometry.dims)
    out = np.einsum("nc,c...->n...", A.entries, stack)
    return field_from_stack(F.geometry, out)


# ---------------------------------------------------------------------------
# differential operators


def _spectral_axis_derivative(stack, geometry, axis):
    # stack shape (..., nx, ny, nz); derivative along spatial `axis`
    n = geometry.dims[axis]
    L = geometry.lengths[axis]
    k = np.fft.fftfreq(n, d=1.0 / n)
    mult = 2j * np.pi * k / L
    if n % 2 == 0:
        mult[n // 2] = 0.0  # Nyquist mode has no well-defined odd derivative
    shape = [1] * stack.ndim
    shape[stack.ndim - 3 + axis] = n
    spec = np.fft.fft(stack, axis=stack.ndim - 3 + axis)
    spec *= mult.reshape(shape)
    return np.fft.ifft(spec, axis=stack.ndim - 3 + axis).real


def _axis_derivative(stack, geometry, axis):
    if geometry.periodic:
        return _spectral_axis_derivative(stack, geometry, axis)
    h = geometry.spacing[axis]
    return np.gradient(stack, h, axis=stack.ndim - 3 + axis, edge_order=2)


def gradient(u: VectorField) -> MatrixField:
    """Jacobian of a vector field, (grad u)_ij = d_j u_i."""
    out = np.empty((3, 3) + u.geometry.dims)
    for j in range(3):
        out[:, j] = _axis_derivative(u.values, u.geometry, j)
    return MatrixField(u.geometry, out)


def scalar_gradient(f: ScalarGrid) -> VectorField:
    out = np.empty((3,) + f.geometry.dims)
    for j in range(3):
        out[j] = _axis_derivative(f.values, f.geometry, j)
    return VectorField(f.geometry, out)


def div(v: VectorField) -> ScalarGrid:
    acc = np.zeros(v.geometry.dims)
    for j in range(3):
        acc += _axis_derivative(v.values[j], v.geometry, j)
    return ScalarGrid(v.geometry, acc)


def curl(v: VectorField) -> VectorField:
    d = [
        [_axis_derivative(v.values[i], v.geometry, j) for j in range(3)]
        for i in range(3)
    ]
    out = np.stack(
        [d[2][1] - d[1][2], d[0][2] - d[2][0], d[1][0] - d[0][1]]
    )
    return VectorField(v.geometry, out)


def curl_rows(F: MatrixField) -> MatrixField:
    """Row-wise curl of a matrix field."""
    out = np.stack([curl(F.row(i)).values for i in range(3)])
    return MatrixField(F.geometry, out)


def div_rows(F: MatrixField) -> VectorField:
    out = np.stack([div(F.row(i)).values for i in range(3)])
    return VectorField(F.geometry, out)


# ---------------------------------------------------------------------------
# smooth bump window


def _bump_profile(r):
    """chi(r) = exp(1 - 1/(1-r^2)) for r < 1, zero outside."""
    out = np.zeros_like(r)
    inside = r < 1.0
    ri = r[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - ri * ri))
    return out


def _bump_slope_over_r(r):
    # chi'(r)/r, smooth through r = 0
    out = np.zeros_like(r)
    inside = r < 1.0
    ri = r[inside]
    out[inside] = -2.0 * np.exp(1.0 - 1.0 / (1.0 - ri * ri)) / (1.0 - ri * ri) ** 2
    return out


def bump_window(geometry, radius, center=None):
    """Radial C-infinity bump and its gradient sampled on the grid.

    Returns (w, grad_w) with w of shape dims and grad_w of shape (3, dims);
    w vanishes identically outside the ball of the given radius.
    """
    if center is None:
        center = geometry.center
    X, Y, Z = geometry.node_mesh()
    dx, dy, dz = X - center[0], Y - center[1], Z - center[2]
    r = np.sqrt(dx * dx + dy * dy + dz * dz) / radius
    w = _bump_profile(r)
    fac = _bump_slope_over_r(r) / (radius * radius)
    grad_w = np.stack([fac * dx, fac * dy, fac * dz])
    return w, grad_w


# ---------------------------------------------------------------------------
# band-limited random corpora


def _mode_indices(kmax):
    return np.arange(-kmax, kmax + 1)


def _mode_grids(kmax):
    idx = _mode_indices(kmax)
    return np.meshgrid(idx, idx, idx, indexing="ij")


def _random_coeffs(seed, ncomp, kmax, zero_mean=True):
    K = 2 * kmax + 1
    rng = np.random.default_rng(seed)
    re = rng.standard_normal((ncomp, K, K, K))
    im = rng.standard_normal((ncomp, K, K, K))
    c = (re + 1j * im) / np.sqrt(2.0)
    if zero_mean:
        c[:, kmax, kmax, kmax] = 0.0
    return c


def _place_modes(coeffs, geometry, kmax):
    """Evaluate Re(sum_k c_k exp(2 pi i <k, x>/L)) on the grid via zero padding.

    `coeffs` has shape (..., K, K, K) indexed by integer frequencies
    -kmax..kmax per axis.  Requires 2*kmax+1 <= min(dims).
    """
    dims = geometry.dims
    if 2 * kmax + 1 > min(dims):
        raise ValueError("mode range does not fit on the grid")
    idx = _mode_indices(kmax)
    spec = np.zeros(coeffs.shape[:-3] + dims, dtype=complex)
    slots = [idx % n for n in dims]
    phases = []
    for a in range(3):
        lo, _ = geometry.box[a]
        h = geometry.spacing[a]
        L = geometry.lengths[a]
        phases.append(np.exp(2j * np.pi * idx * (lo + 0.5 * h) / L))
    ph = (
        phases[0][:, None, None]
        * phases[1][None, :, None]
        * phases[2][None, None, :]
    )
    spec[..., slots[0][:, None, None], slots[1][None, :, None], slots[2][None, None, :]] = (
        coeffs * ph
    )
    vals = np.fft.ifftn(spec, axes=(-3, -2, -1)) * (dims[0] * dims[1] * dims[2])
    return vals.real


def _check_corpus_args(geometry, kmax, support_radius):
    if kmax < 1 or 4 * kmax > min(geometry.dims):
        raise ValueError(
            f"kmax={kmax} violates anti-aliasing bound min(dims)/4 = {min(geometry.dims) / 4}"
        )
    if support_radius is not None:
        if not 0 < support_radius < min(geometry.lengths) / 2:
            raise ValueError(
                f"support_radius={support_radius} must lie in (0, {min(geometry.lengths) / 2})"
            )


def random_band_limited(seed, geometry, kmax, support_radius) -> MatrixField:
    """Seeded random compactly supported smooth matrix field.

    Each of the nine components is a real trigonometric polynomial with modes
    |k|_inf <= kmax and unit-variance coefficients, multiplied by a radial
    C-infinity bump of the given support radius centered in the box.  Bitwise
    deterministic in (seed, geometry, kmax, support_radius).
    """
    _check_corpus_args(geometry, kmax, support_radius)
    c = _random_coeffs(seed, 9, kmax, zero_mean=False)
    trig = _place_modes(c, geometry, kmax)
    w, _ = bump_window(geometry, support_radius)
    return MatrixField(geometry, (trig * w).reshape((3, 3) + geometry.dims))


def random_vector_band_limited(
    seed, geometry, kmax, support_radius: Optional[float] = None
) -> VectorField:
    """Seeded random vector field; band-limited and mean-zero when no window
    is requested, bump-windowed (compact support) otherwise."""
    _check_corpus_args(geometry, kmax, support_radius)
    c = _random_coeffs(seed, 3, kmax, zero_mean=True)
    vals = _place_modes(c, geometry, kmax)
    if support_radius is not None:
        w, _ = bump_window(geometry, support_radius)
        vals = vals * w
    return VectorField(geometry, vals)


def random_solenoidal(seed, geometry, kmax, support_radius) -> VectorField:
    """Exactly divergence-free compactly supported field curl(w u) sampled
    analytically (no discrete differentiation error in the construction)."""
    _check_corpus_args(geometry, kmax, support_radius)
    c = _random_coeffs(seed, 3, kmax, zero_mean=True)
    KX, KY, KZ = _mode_grids(kmax)
    L = geometry.lengths
    xi = (KX / L[0], KY / L[1], KZ / L[2])
    tau = 2j * np.pi
    curl_c = np.stack(
        [
            tau * (xi[1] * c[2] - xi[2] * c[1]),
            tau * (xi[2] * c[0] - xi[0] * c[2]),
            tau * (xi[0] * c[1] - xi[1] * c[0]),
        ]
    )
    u = _place_modes(c, geometry, kmax)
    curl_u = _place_modes(curl_c, geometry, kmax)
    w, grad_w = bump_window(geometry, support_radius)
    cross = np.stack(
        [
            grad_w[1] * u[2] - grad_w[2] * u[1],
            grad_w[2] * u[0] - grad_w[0] * u[2],
            grad_w[0] * u[1] - grad_w[1] * u[0],
        ]
    )
    return VectorField(geometry, w * curl_u + cross)


def random_smooth_on_cube(seed, geometry, kmax) -> MatrixField:
    """Smooth matrix field on a cube with generic non-zero boundary values.

    Sampled from trigonometric polynomials whose period is twice the box, so
    the restriction to the box is smooth but in no way periodic.
    """
    if geometry.periodic:
        raise ValueError("expected a cube geometry")
    dims = geometry.dims
    big = GridGeometry(
        tuple(2 * n for n in dims),
        tuple((lo, lo + 2 * (hi - lo)) for lo, hi in geometry.box),
        periodic=True,
    )
    _check_corpus_args(big, kmax, None)
    c = _random_coeffs(seed, 9, kmax, zero_mean=False)
    vals = _place_modes(c, big, kmax)[:, : dims[0], : dims[1], : dims[2]]
    return MatrixField(geometry, np.ascontiguousarray(vals).reshape((3, 3) + dims))


def bump_trig_scalar(seed, geometry, kmax, support_radius, constant=False):
    """Compactly supported smooth scalar test function with analytic gradient.

    Returns (phi, grad_phi).  With ``constant=True`` the trigonometric factor
    is 1 and phi is the pure bump (used as a deterministic first test).
    """
    _check_corpus_args(geometry, kmax, support_radius)
    w, grad_w = bump_window(geometry, support_radius)
    if constant:
        return ScalarGrid(geometry, w), VectorField(geometry, grad_w)
    c = _random_coeffs(seed, 1, kmax, zero_mean=False)
    KX, KY, KZ = _mode_grids(kmax)
    L = geometry.lengths
    tau = 2j * np.pi
    dc = np.stack([tau * KX / L[0] * c[0], tau * KY / L[1] * c[0], tau * KZ / L[2] * c[0]])
    t = _place_modes(c, geometry, kmax)[0]
    dt = _place_modes(dc, geometry, kmax)
    phi = w * t
    grad_phi = grad_w * t + w * dt
    return ScalarGrid(geometry, phi), VectorField(geometry, grad_phi)


# ---------------------------------------------------------------------------
# field file I/O (KMSF format)

_MAGIC = "KMSF1"


def write_field(field, path):
    """Write a field in the bit-exact KMSF format."""
    geom = field.geometry
    stack = field.component_stack()
    m = stack.shape[0]
    if m not in (1, 3, 9):
        raise ValueError(f"KMSF supports 1, 3 or 9 components, not {m}")
    fmt = lambda v: format(v, ".17g")
    lines = [
        _MAGIC,
        "grid {} {} {}".format(*geom.dims),
        "domain "
        + " ".join(fmt(v) for pair in geom.box for v in pair),
        f"components {m} periodic {1 if geom.periodic else 0}",
        "data",
    ]
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("ascii"))
        fh.write(np.ascontiguousarray(stack, dtype="<f8").tobytes())


def _parse_header_line(line, expected_key, n_values, caster):
    parts = line.split()
    if len(parts) != n_values + 1 or parts[0] != expected_key:
        raise HeaderFormatError(f"malformed '{expected_key}' line: {line!r}")
    try:
        return [caster(v) for v in parts[1:]]
    except ValueError as exc:
        raise HeaderFormatError(f"malformed '{expected_key}' line: {line!r}") from exc


def read_field(path):
    """Read a KMSF field file; inverse of :func:`write_field` bit for bit."""
    with open(path, "rb") as fh:
        header = []
        for _ in range(5):
            line = fh.readline()
            if not line:
                raise HeaderFormatError("truncated header")
            header.append(line.decode("ascii", errors="replace").rstrip("\n"))
        payload = fh.read()
    if header[0] != _MAGIC:
        raise HeaderFormatError(f"bad magic {header[0]!r}")
    dims = _parse_header_line(header[1], "grid", 3, int)
    dom = _parse_header_line(header[2], "domain", 6, float)
    comp = header[3].split()
    if len(comp) != 4 or comp[0] != "components" or comp[2] != "periodic":
        raise HeaderFormatError(f"malformed components line: {header[3]!r}")
    try:
        m, periodic = int(comp[1]), int(comp[3])
    except ValueError as exc:
        raise HeaderFormatError(f"malformed components line: {header[3]!r}") from exc
    if m not in (1, 3, 9) or periodic not in (0, 1):
        raise HeaderFormatError(f"unsupported components line: {header[3]!r}")
    if header[4] != "data":
        raise HeaderFormatError(f"expected 'data', got {header[4]!r}")
    geom = GridGeometry(
        tuple(dims),
        ((dom[0], dom[1]), (dom[2], dom[3]), (dom[4], dom[5])),
        periodic=bool(periodic),
    )
    expected = m * dims[0] * dims[1] * dims[2] * 8
    if len(payload) != expected:
        raise PayloadSizeError(
            f"payload holds {len(payload)} bytes, header promises {expected}"
        )
    stack = np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(
        (m,) + geom.dims
    )
    if not np.all(np.isfinite(stack)):
        raise NonFiniteDataError("payload contains non-finite values")
    return field_from_stack(geom, stack)

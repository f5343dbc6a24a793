"""Grid functions and the discrete calculus on them."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
import scipy.fft

from .errors import GridMismatchError, ParameterError
from .geometry import Grid, ReflectionPermutation


@dataclass(eq=False)
class Field:
    """Values on the nodes of a grid.

    ``zero_average`` is tri-state: True when known to have vanishing integral,
    False when known not to, None when unknown.
    """

    grid: Grid
    values: np.ndarray
    zero_average: bool | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).ravel()
        if self.values.size != self.grid.n_nodes:
            raise GridMismatchError(f"{self.values.size} values for a grid with {self.grid.n_nodes} nodes")

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "Field":
        """Sample ``fn(r, theta)`` at the nodes (``fn(x)`` on the interval)."""
        if grid.kind == "interval":
            return cls(grid, fn(grid.node_r))
        return cls(grid, fn(grid.node_r, grid.node_theta))

    @property
    def table(self) -> np.ndarray:
        """Values as a (M_r, M_theta) array (a view)."""
        return self.values.reshape(self.grid.shape)

    def with_values(self, values, zero_average=None) -> "Field":
        return Field(self.grid, values, zero_average)

    def __mul__(self, c):
        if isinstance(c, Field):
            _same_grid(self, c)
            return Field(self.grid, self.values * c.values)
        za = self.zero_average if c != 0 else True
        return Field(self.grid, self.values * c, za)

    __rmul__ = __mul__

    def __add__(self, other):
        if isinstance(other, Field):
            _same_grid(self, other)
            za = True if (self.zero_average and other.zero_average) else None
            return Field(self.grid, self.values + other.values, za)
        return Field(self.grid, self.values + other)

    def __sub__(self, other):
        return self + (-1.0) * other

    def __neg__(self):
        return Field(self.grid, -self.values, self.zero_average)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))


def _same_grid(f: Field, g: Field) -> None:
    if f.grid is not g.grid:
        raise GridMismatchError("fields live on different grids")


def integrate(f: Field) -> float:
    return float(f.grid.mass @ f.values)


def lp_norm(f: Field, p: float) -> float:
    if p < 1:
        raise ParameterError(f"L^p norm needs p >= 1, got {p}")
    a = np.abs(f.values)
    scale = a.max()
    if scale == 0.0:
        return 0.0
    # scaling keeps |u|**p finite for large p
    return float(scale * (f.grid.mass @ (a / scale) ** p) ** (1.0 / p))


def dirichlet_form(f: Field, g: Field, *, dirichlet: bool = False) -> float:
    """Discrete bilinear form a(f, g) (edge sum)."""
    _same_grid(f, g)
    grid = f.grid
    da = f.values[grid.edge_a] - f.values[grid.edge_b]
    db = g.values[grid.edge_a] - g.values[grid.edge_b]
    val = float(np.dot(grid.edge_w * da, db))
    if dirichlet:
        val += float(np.dot(grid.dirichlet_w * f.values, g.values))
    return val


def dirichlet_energy(f: Field, *, dirichlet: bool = False) -> float:
    """Discrete counterpart of the integral of |grad f|^2.

    With ``dirichlet=True`` the field is taken to vanish on the outer boundary
    (half a cell beyond the last radial node).
    """
    return dirichlet_form(f, f, dirichlet=dirichlet)


def project_zero_average(f: Field) -> Field:
    mean = integrate(f) / f.grid.volume
    return Field(f.grid, f.values - mean, True)


def is_zero_average(f: Field, rtol: float = 1e-12) -> bool:
    scale = float(f.grid.mass.sum()) * f.max_abs()
    return abs(integrate(f)) <= rtol * scale


def apply_laplacian(f: Field) -> Field:
    """Node-wise discrete -Delta f with homogeneous Neumann closure.

    Defined as M^{-1} K f with K the stiffness of the edge form and M the
    diagonal of cell volumes, so that integrate(g * apply_laplacian(f)) equals
    dirichlet_form(f, g) up to round-off.
    """
    return Field(f.grid, (f.grid.stiffness @ f.values) / f.grid.mass)


def reflect(f: Field, sigma: ReflectionPermutation) -> Field:
    return Field(f.grid, sigma.apply(f.values), f.zero_average)


# -- derivatives -------------------------------------------------------------


def _theta_derivative(grid: Grid, table: np.ndarray) -> np.ndarray:
    """Spectral d/dtheta along each ring.

    The disc chart is periodic.  Axisymmetric charts are extended evenly
    across both poles, which gives a 2 pi periodic sequence on 2 M_theta
    equispaced angles.
    """
    if grid.kind == "disc-full":
        ext = table
    else:
        ext = np.concatenate([table, table[:, ::-1]], axis=1)
    n = ext.shape[1]
    k = scipy.fft.rfftfreq(n, d=1.0 / n)
    coef = scipy.fft.rfft(ext, axis=1) * (1j * k)
    if n % 2 == 0:
        coef[:, -1] = 0.0
    d = scipy.fft.irfft(coef, n=n, axis=1)
    if grid.kind != "disc-full":
        d = d[:, : grid.M_theta]
    return d


def _radial_derivative(grid: Grid, table: np.ndarray) -> np.ndarray:
    """Second-order d/dr; one-sided at the outer (and inner annulus) boundary.

    On ball charts the first interior node uses the value at the antipodal
    node, which is the field just across the centre.
    """
    r = grid.r
    d = np.gradient(table, r, axis=0, edge_order=2)
    if grid.rho == 0.0:
        if grid.kind == "disc-full":
            half = grid.M_theta // 2
            across = np.roll(table[0], -half)
        else:
            across = table[0, ::-1]
        # nodes -r0, r0, r1 on a straight line through the origin
        x = np.array([-r[0], r[0], r[1]])
        y0, y1, y2 = across, table[0], table[1]
        h0, h1 = x[1] - x[0], x[2] - x[1]
        d[0] = (-h1 / (h0 * (h0 + h1))) * y0 + ((h1 - h0) / (h0 * h1)) * y1 + (h0 / (h1 * (h0 + h1))) * y2
    return d


def polar_derivatives(f: Field) -> tuple[np.ndarray, np.ndarray]:
    """Tables (u_r, u_theta)."""
    grid = f.grid
    if not grid.is_chart:
        raise ParameterError("polar derivatives need a chart grid")
    t = f.table
    return _radial_derivative(grid, t), _theta_derivative(grid, t)


def cartesian_partials(f: Field) -> tuple[Field, Field]:
    """Axial and transverse partial derivatives (d_e f, d_tau f).

    The axis e points along theta = 0 and tau is the in-chart direction
    theta = pi / 2.
    """
    grid = f.grid
    if grid.kind == "interval":
        d = np.gradient(f.values, grid.r, edge_order=2)
        return Field(grid, d), Field(grid, np.zeros_like(d))
    ur, ut = polar_derivatives(f)
    c = np.cos(grid.theta)[None, :]
    s = np.sin(grid.theta)[None, :]
    rr = grid.r[:, None]
    d_e = c * ur - s * ut / rr
    d_tau = s * ur + c * ut / rr
    return Field(grid, d_e), Field(grid, d_tau)


# -- rotations (disc only) -------------------------------------------------


def rotate(f: Field, angle: float) -> Field:
    """Rotate a disc field by ``angle``: the result at theta equals f at theta - angle.

    Integer multiples of dtheta are exact index shifts; other angles use
    trigonometric interpolation on every ring, which commutes with the
    discrete Dirichlet form for fields without a Nyquist component (that mode
    has no sine partner on the grid and is scaled by cos(M angle / 2)).
    """
    grid = f.grid
    if grid.kind != "disc-full":
        raise ParameterError("rotations are only defined on the full disc chart")
    M = grid.M_theta
    shift = angle / grid.dtheta
    k = round(shift)
    if abs(shift - k) < 1e-12:
        return Field(grid, np.roll(f.table, k, axis=1), f.zero_average)
    coef = scipy.fft.rfft(f.table, axis=1)
    freq = scipy.fft.rfftfreq(M, d=1.0 / M)
    coef *= np.exp(-1j * freq * angle)[None, :]
    if M % 2 == 0:
        coef[:, -1] = coef[:, -1].real
    return Field(grid, scipy.fft.irfft(coef, n=M, axis=1), f.zero_average)


# -- persistence -----------------------------------------------------------


def write_field_csv(f: Field, path) -> None:
    """Rows (r, theta, value), radial index outermost."""
    grid = f.grid
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["r", "theta", "value"])
        for rr, tt, v in zip(grid.node_r, grid.node_theta, f.values):
            w.writerow([repr(float(rr)), repr(float(tt)), repr(float(v))])


def read_field_csv(path, grid: Grid) -> Field:
    """Load a field dumped by ``write_field_csv`` after checking it matches ``grid``."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if len(rows) != grid.n_nodes:
        raise GridMismatchError(f"{path}: {len(rows)} rows, grid has {grid.n_nodes} nodes")
    r = np.array([float(row["r"]) for row in rows])
    th = np.array([float(row["theta"]) for row in rows])
    if not (np.allclose(r, grid.node_r, rtol=0, atol=1e-12) and np.allclose(th, grid.node_theta, rtol=0, atol=1e-12)):
        raise GridMismatchError(f"{path}: node coordinates do not match the grid")
    return Field(grid, np.array([float(row["value"]) for row in rows]))


def angular_cell(grid: Grid) -> float:
    return grid.dtheta if grid.is_chart else math.nan

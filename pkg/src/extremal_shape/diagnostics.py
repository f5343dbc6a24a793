"""Symmetry diagnostics for computed minimizers."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import DegenerateInputError, ParameterError
from .fields import Field, cartesian_partials, rotate
from .geometry import Grid, equatorial_reflection

NODAL_BAND = 1e-4


@dataclass
class Axis:
    e: np.ndarray
    angle: float
    method: str  # "moment" or "boundary-max"
    defined: bool
    agrees: bool | None = None  # moment and boundary max within one angular cell


def _require_nonconstant(u: Field) -> None:
    v = u.values
    if np.ptp(v) == 0.0:
        raise DegenerateInputError("field is constant")


def _boundary_max_angle(u: Field) -> float:
    grid = u.grid
    t = u.table
    j = int(np.argmax(t[-1]))
    return float(grid.theta[j])


def axis_info(u: Field) -> Axis:
    """First-moment axis with a boundary-maximum fallback."""
    _require_nonconstant(u)
    grid = u.grid
    m = (grid.mass * u.values) @ grid.coords
    scale = math.sqrt(float(grid.mass @ (u.values * u.values)) * grid.volume)
    norm = float(np.hypot(*m))
    if grid.kind == "interval":
        if norm < 1e-8 * scale:
            angle = 0.0 if u.values[-1] >= u.values[0] else math.pi
            return Axis(np.array([math.cos(angle), 0.0]), angle, "boundary-max", False)
        angle = 0.0 if m[0] > 0 else math.pi
        return Axis(np.array([math.cos(angle), 0.0]), angle, "moment", True)
    bmax = _boundary_max_angle(u)
    if norm < 1e-8 * scale:
        if grid.is_axisym:
            bmax = 0.0 if bmax < math.pi / 2 else math.pi
        return Axis(np.array([math.cos(bmax), math.sin(bmax)]), bmax, "boundary-max", False)
    angle = math.atan2(m[1], m[0])
    if grid.is_axisym:
        # the chart plane's second coordinate is the distance to the axis
        angle = 0.0 if m[0] > 0 else math.pi
    diff = abs((angle - bmax + math.pi) % (2 * math.pi) - math.pi)
    return Axis(np.array([math.cos(angle), math.sin(angle)]), angle, "moment", True,
                agrees=bool(diff <= grid.dtheta * (1 + 1e-9)))


def detect_axis(u: Field) -> np.ndarray:
    """Unit vector e (in the chart plane) along which u is largest."""
    return axis_info(u).e


def _axis_angle(e) -> float:
    e = np.asarray(e, dtype=float)
    n = float(np.hypot(e[0], e[1] if e.size > 1 else 0.0))
    if not n > 0:
        raise ParameterError("axis vector must be nonzero")
    return math.atan2(e[1] if e.size > 1 else 0.0, e[0])


def align(u: Field, e) -> Field:
    """Return u expressed in a chart whose theta = 0 direction is e.

    Disc fields are rotated (exact index shift for grid angles, trigonometric
    interpolation otherwise); axisymmetric and interval fields only admit
    e = +-axis, where the opposite axis is handled by the equatorial reflection.
    """
    grid = u.grid
    angle = _axis_angle(e)
    if grid.kind == "disc-full":
        if angle == 0.0:
            return u
        return rotate(u, -angle)
    if abs(angle) < 1e-9:
        return u
    if abs(abs(angle) - math.pi) < 1e-9:
        return Field(grid, equatorial_reflection(grid).apply(u.values), u.zero_average)
    raise ParameterError(f"{grid.kind} grids only support the chart axis, got angle {angle}")


def _require_chart(grid: Grid, what: str) -> None:
    if not grid.is_chart:
        raise ParameterError(f"{what} needs a polar chart grid")


def theta_monotonicity(u: Field, e=None) -> float:
    """Largest increase of u along theta away from the axis, relative to max|u|.

    Differences between angular neighbours are checked on the half-plane
    0 < theta < pi and, on the full disc, mirrored on pi < theta < 2 pi.
    """
    grid = u.grid
    _require_chart(grid, "theta_monotonicity")
    if e is None:
        e = detect_axis(u)
    t = align(u, e).table
    scale = float(np.max(np.abs(t)))
    if scale == 0.0:
        raise DegenerateInputError("field is identically zero")
    if grid.kind == "disc-full":
        M = grid.M_theta
        d = np.roll(t, -1, axis=1) - t  # edge j -> j+1, centred at theta_j + dtheta/2
        mid = grid.theta + 0.5 * grid.dtheta
        upper = mid < math.pi - 1e-12
        lower = mid > math.pi + 1e-12
        viol = max(float(np.max(d[:, upper], initial=0.0)), float(np.max(-d[:, lower], initial=0.0)))
        assert M == t.shape[1]
    else:
        d = np.diff(t, axis=1)
        viol = float(np.max(d, initial=0.0))
    return max(viol, 0.0) / scale


def _pole_mask(grid: Grid) -> np.ndarray:
    """Nodes within one cell (in chart indices) of the points +-e on a boundary sphere."""
    M_r, M_t = grid.shape
    i = np.arange(M_r)[:, None]
    j = np.arange(M_t)[None, :]
    if grid.kind == "disc-full":
        dj = np.minimum(np.minimum(j, M_t - j), np.abs(j - M_t // 2))
    else:
        dj = np.minimum(j, M_t - 1 - j)
    near_outer = (M_r - 1 - i) <= 1
    near_inner = (i <= 1) if grid.rho > 0 else np.zeros_like(near_outer)
    return ((near_outer | near_inner) & (dj <= 1)).ravel()


def axial_positivity(u: Field, e=None) -> float:
    """Minimum of the axial derivative d_e u over nodes away from the poles, relative to max|grad u|."""
    grid = u.grid
    _require_chart(grid, "axial_positivity")
    if e is None:
        e = detect_axis(u)
    d_e, d_tau = cartesian_partials(align(u, e))
    keep = ~_pole_mask(grid)
    scale = float(np.max(np.hypot(d_e.values, d_tau.values)))
    if scale == 0.0:
        raise DegenerateInputError("field has vanishing gradient")
    return float(np.min(d_e.values[keep])) / scale


def _chart_graph(n_r: int, n_t: int, periodic: bool):
    idx = np.arange(n_r * n_t).reshape(n_r, n_t)
    a = [idx[:-1].ravel()]
    b = [idx[1:].ravel()]
    if periodic:
        a.append(idx.ravel())
        b.append(np.roll(idx, -1, axis=1).ravel())
    else:
        a.append(idx[:, :-1].ravel())
        b.append(idx[:, 1:].ravel())
    return np.concatenate(a), np.concatenate(b)


def nodal_count(v: Field, zero_band: float = NODAL_BAND, parity: str = "even") -> int:
    """Number of connected components of {v > band} and {v < -band}.

    band = zero_band * max|v|.  Components are 4-neighbour connected in the
    chart, with angular wrap-around.  The innermost ring is itself a cycle, so
    no edges cross the centre (opposite quadrants touch only there).  On
    axisymmetric charts the count is taken in the full meridian plane, whose
    second half is the mirror image of the chart with the given ``parity``
    (``"odd"`` for transverse derivatives).
    """
    grid = v.grid
    vmax = v.max_abs()
    band = zero_band * vmax
    if vmax == 0.0 or not np.any(np.abs(v.values) > band):
        raise DegenerateInputError("all nodes lie within the zero band")
    if grid.kind == "interval":
        t = v.values[:, None]
        a, b = _chart_graph(t.shape[0], 1, False)
    elif grid.kind == "disc-full":
        t = v.table
        a, b = _chart_graph(grid.M_r, grid.M_theta, True)
    else:
        if parity not in ("even", "odd"):
            raise ParameterError("parity must be 'even' or 'odd'")
        s = 1.0 if parity == "even" else -1.0
        t = np.concatenate([v.table, s * v.table[:, ::-1]], axis=1)
        a, b = _chart_graph(grid.M_r, t.shape[1], True)
    flat = t.ravel()
    count = 0
    for mask in (flat > band, flat < -band):
        keep = mask[a] & mask[b]
        n = flat.size
        g = sp.coo_matrix((np.ones(int(keep.sum())), (a[keep], b[keep])), shape=(n, n))
        _, labels = connected_components(g, directed=False)
        count += np.unique(labels[mask]).size
    return int(count)


def _l2(grid: Grid, v: np.ndarray) -> float:
    return math.sqrt(float(grid.mass @ (v * v)))


def antisymmetry_defect(u: Field, e=None) -> float:
    """||u + u o sigma||_2 / (2 ||u||_2) for the reflection across the hyperplane orthogonal to e."""
    grid = u.grid
    if e is None:
        e = detect_axis(u)
    w = align(u, e).values
    nu = _l2(grid, w)
    if nu == 0.0:
        raise DegenerateInputError("field is identically zero")
    sigma = equatorial_reflection(grid)
    return _l2(grid, w + sigma.apply(w)) / (2.0 * nu)


def rank1_defect(u: Field, e=None) -> float:
    """sqrt(1 - s_1^2 / sum s_k^2) for the measure-weighted (r, theta) value matrix."""
    grid = u.grid
    _require_chart(grid, "rank1_defect")
    if e is None:
        e = detect_axis(u)
    t = align(u, e).table
    w = grid.weights
    row = w.sum(axis=1)
    col = w.sum(axis=0) / w.sum()
    A = np.sqrt(row)[:, None] * t * np.sqrt(col)[None, :]
    s = np.linalg.svd(A, compute_uv=False)
    tot = float(np.sum(s * s))
    if tot == 0.0:
        raise DegenerateInputError("field is identically zero")
    return math.sqrt(max(0.0, 1.0 - float(s[0] ** 2) / tot))


@dataclass
class SymmetryReport:
    axis: list
    axis_method: str
    axis_defined: bool
    theta_monotonicity_max_violation: float
    axial_derivative_min: float
    antisymmetry_defect: float
    nodal_count_u: int
    nodal_count_dtau: int
    rank1_defect: float
    mu_p_abs: float
    p: float

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def full_report(u: Field, p: float, zero_band: float = NODAL_BAND) -> SymmetryReport:
    from .variational import el_residual

    ax = axis_info(u)
    aligned = align(u, ax.e)
    _, d_tau = cartesian_partials(aligned)
    return SymmetryReport(
        axis=[float(x) for x in ax.e],
        axis_method=ax.method,
        axis_defined=ax.defined,
        theta_monotonicity_max_violation=theta_monotonicity(aligned, (1.0, 0.0)),
        axial_derivative_min=axial_positivity(aligned, (1.0, 0.0)),
        antisymmetry_defect=antisymmetry_defect(aligned, (1.0, 0.0)),
        nodal_count_u=nodal_count(aligned, zero_band),
        nodal_count_dtau=nodal_count(d_tau, zero_band, parity="odd"),
        rank1_defect=rank1_defect(aligned, (1.0, 0.0)),
        mu_p_abs=abs(el_residual(u, p).mu_p),
        p=float(p),
    )

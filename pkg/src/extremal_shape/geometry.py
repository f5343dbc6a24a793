"""Discrete domains: unit ball, annulus and interval.

Every grid is a cell-centred finite-volume discretization.  A grid carries
nodal quadrature weights (cell volumes) and an edge list whose weights define
the discrete Dirichlet form

    a(u, u) = sum_e w_e (u[a_e] - u[b_e])**2 .

Node values are stored as a flat array with index ``i * M_theta + j`` where
``i`` is the radial index and ``j`` the angular index.  The interval uses
``M_theta = 1`` and stores the coordinate ``x`` in ``r``.

Angles are measured from the chart axis: ``theta = 0`` is the direction the
solver aligns the symmetry axis ``e`` with.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.special import gamma

from .errors import ParameterError, SymmetryMismatchError, UnsupportedDimensionError

KINDS = ("ball-axisym", "disc-full", "annulus-axisym", "interval")

_ANGLE_TOL = 1e-9


def sphere_measure(k: int) -> float:
    """Surface measure of the unit k-sphere in R^(k+1) (2 for k = 0)."""
    return 2.0 * math.pi ** ((k + 1) / 2) / gamma((k + 1) / 2)


def ball_volume(N: int) -> float:
    return math.pi ** (N / 2) / gamma(N / 2 + 1)


@dataclass(frozen=True, eq=False)
class Grid:
    """Immutable discrete domain.

    Attributes
    ----------
    kind : one of ``KINDS``
    N : ambient dimension
    rho : inner radius (0 for the ball and the interval)
    r, theta : node coordinates (radial and angular)
    r_faces : radial cell faces, ``len(r) + 1`` entries
    weights : cell volumes, shape ``(M_r, M_theta)``
    edge_a, edge_b, edge_w : edges and their Dirichlet-form weights
    dirichlet_w : per-node coupling to a homogeneous Dirichlet value on the
        outer boundary (used only by the half-ball Dirichlet problem)
    measure : volume of the continuum domain
    """

    kind: str
    N: int
    rho: float
    r: np.ndarray
    theta: np.ndarray
    r_faces: np.ndarray
    weights: np.ndarray
    edge_a: np.ndarray
    edge_b: np.ndarray
    edge_w: np.ndarray
    dirichlet_w: np.ndarray
    measure: float
    grading: float = 1.0
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def M_r(self) -> int:
        return len(self.r)

    @property
    def M_theta(self) -> int:
        return len(self.theta)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.M_r, self.M_theta)

    @property
    def n_nodes(self) -> int:
        return self.M_r * self.M_theta

    @property
    def is_chart(self) -> bool:
        return self.kind != "interval"

    @property
    def is_axisym(self) -> bool:
        return self.kind in ("ball-axisym", "annulus-axisym")

    @cached_property
    def mass(self) -> np.ndarray:
        return self.weights.ravel()

    @cached_property
    def volume(self) -> float:
        """Discrete measure of the domain (sum of the quadrature weights)."""
        return float(self.mass.sum())

    @cached_property
    def dtheta(self) -> float:
        if self.kind == "disc-full":
            return 2.0 * math.pi / self.M_theta
        if self.is_axisym:
            return math.pi / self.M_theta
        return 0.0

    @cached_property
    def stiffness(self) -> sp.csr_matrix:
        """Symmetric positive semidefinite matrix K with u^T K u = a(u, u)."""
        n = self.n_nodes
        a, b, w = self.edge_a, self.edge_b, self.edge_w
        off = sp.coo_matrix((np.concatenate([-w, -w]), (np.concatenate([a, b]), np.concatenate([b, a]))), shape=(n, n))
        diag = np.bincount(a, weights=w, minlength=n) + np.bincount(b, weights=w, minlength=n)
        return (off + sp.diags(diag)).tocsr()

    @cached_property
    def stiffness_dirichlet(self) -> sp.csr_matrix:
        """Stiffness with homogeneous Dirichlet data on the outer boundary."""
        return (self.stiffness + sp.diags(self.dirichlet_w)).tocsr()

    @cached_property
    def node_r(self) -> np.ndarray:
        return np.repeat(self.r, self.M_theta)

    @cached_property
    def node_theta(self) -> np.ndarray:
        return np.tile(self.theta, self.M_r)

    @cached_property
    def coords(self) -> np.ndarray:
        """Cartesian coordinates in the chart plane, shape (n, 2).

        Column 0 is the axial coordinate ``x_e = r cos(theta)`` and column 1 the
        transverse ``x_tau = r sin(theta)``.  For the interval column 0 is x.
        """
        if self.kind == "interval":
            return np.column_stack([self.node_r, np.zeros(self.n_nodes)])
        return np.column_stack([self.node_r * np.cos(self.node_theta), self.node_r * np.sin(self.node_theta)])

    def index(self, i, j):
        return np.asarray(i) * self.M_theta + np.asarray(j)

    def metadata(self) -> dict:
        return {
            "kind": self.kind,
            "N": self.N,
            "rho": self.rho,
            "M_r": self.M_r,
            "M_theta": self.M_theta,
            "grading": self.grading,
        }

    def write_node_table(self, path) -> None:
        """CSV with columns i, j, r, theta, weight (one row per node)."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["i", "j", "r", "theta", "weight"])
            for i in range(self.M_r):
                for j in range(self.M_theta):
                    writer.writerow([i, j, repr(float(self.r[i])), repr(float(self.theta[j])), repr(float(self.weights[i, j]))])


def _check_resolution(M_r: int, M_theta: int) -> None:
    if int(M_r) != M_r or int(M_theta) != M_theta:
        raise ParameterError("resolutions must be integers")
    if M_r < 8 or M_theta < 8:
        raise ParameterError(f"need M_r, M_theta >= 8, got {M_r}, {M_theta}")


def _radial_faces(r0: float, r1: float, M_r: int, grading: float) -> np.ndarray:
    if grading <= 0:
        raise ParameterError("grading factor must be positive")
    if grading == 1.0:
        return np.linspace(r0, r1, M_r + 1)
    # geometric cell widths; grading < 1 refines toward the outer boundary
    widths = grading ** np.arange(M_r)
    faces = np.concatenate([[0.0], np.cumsum(widths)])
    return r0 + (r1 - r0) * faces / faces[-1]


def _chart_grid(kind: str, N: int, rho: float, M_r: int, M_theta: int, grading: float, measure: float) -> Grid:
    faces = _radial_faces(rho, 1.0, M_r, grading)
    r = 0.5 * (faces[:-1] + faces[1:])
    dr = np.diff(faces)
    if kind == "disc-full":
        dth = 2.0 * math.pi / M_theta
        theta = dth * np.arange(M_theta)
        omega = 1.0
        sin_nodes = np.ones(M_theta)
        sin_faces = np.ones(M_theta)  # face j sits between j and j+1 (wrapping)
    else:
        dth = math.pi / M_theta
        theta = dth * (np.arange(M_theta) + 0.5)
        omega = sphere_measure(N - 2)
        sin_nodes = np.sin(theta) ** (N - 2)
        sin_faces = np.sin(dth * np.arange(1, M_theta + 1)) ** (N - 2)
        # symmetrize so that theta -> pi - theta is an exact symmetry in floating point
        sin_nodes = 0.5 * (sin_nodes + sin_nodes[::-1])
        sin_faces[:-1] = 0.5 * (sin_faces[:-1] + sin_faces[-2::-1])
    weights = omega * np.outer(r ** (N - 1) * dr, sin_nodes * dth)

    idx = np.arange(M_r * M_theta).reshape(M_r, M_theta)
    # radial edges (i, j) -- (i+1, j)
    dist = np.diff(r)
    w_rad = omega * np.outer(faces[1:-1] ** (N - 1) / dist, sin_nodes * dth)
    ra, rb, rw = idx[:-1, :].ravel(), idx[1:, :].ravel(), w_rad.ravel()
    # angular edges (i, j) -- (i, j+1); across the pole the face weight vanishes
    if kind == "disc-full":
        ja = idx.ravel()
        jb = np.roll(idx, -1, axis=1).ravel()
        w_ang = omega * np.outer(r ** (N - 3) * dr, sin_faces / dth)
    else:
        ja = idx[:, :-1].ravel()
        jb = idx[:, 1:].ravel()
        w_ang = omega * np.outer(r ** (N - 3) * dr, sin_faces[:-1] / dth)
    edge_a = np.concatenate([ra, ja]).astype(np.int64)
    edge_b = np.concatenate([rb, jb]).astype(np.int64)
    edge_w = np.concatenate([rw, w_ang.ravel()])

    dirichlet = np.zeros((M_r, M_theta))
    dirichlet[-1, :] = omega * sin_nodes * dth / (0.5 * dr[-1])
    return Grid(
        kind=kind, N=N, rho=float(rho), r=r, theta=theta, r_faces=faces, weights=weights,
        edge_a=edge_a, edge_b=edge_b, edge_w=edge_w, dirichlet_w=dirichlet.ravel(),
        measure=measure, grading=float(grading),
    )


def build_ball_grid(N: int, M_r: int, M_theta: int, kind: str | None = None, grading: float = 1.0) -> Grid:
    """Unit ball in R^N.

    N = 2 defaults to the full disc (``disc-full``, theta uniform on [0, 2 pi)
    with a node on theta = 0); N >= 3 uses the axisymmetric meridian chart
    ``ball-axisym`` (theta cell-centred on [0, pi]).
    """
    if int(N) != N or N < 2:
        raise UnsupportedDimensionError(f"ball grids need N >= 2, got {N}")
    kind = kind or ("disc-full" if N == 2 else "ball-axisym")
    if kind not in ("disc-full", "ball-axisym"):
        raise ParameterError(f"not a ball chart: {kind}")
    if kind == "disc-full" and N != 2:
        raise UnsupportedDimensionError("disc-full is the N = 2 chart")
    _check_resolution(M_r, M_theta)
    if kind == "disc-full" and M_theta % 4:
        raise ParameterError(f"disc-full needs M_theta divisible by 4, got {M_theta}")
    return _chart_grid(kind, int(N), 0.0, int(M_r), int(M_theta), grading, ball_volume(N))


def build_annulus_grid(N: int, rho: float, M_r: int, M_theta: int, grading: float = 1.0) -> Grid:
    """Annulus rho < |x| < 1 in the axisymmetric chart."""
    if int(N) != N or N < 2:
        raise UnsupportedDimensionError(f"annulus grids need N >= 2, got {N}")
    if not 0.0 < rho < 1.0:
        raise ParameterError(f"inner radius must lie in (0, 1), got {rho}")
    _check_resolution(M_r, M_theta)
    measure = ball_volume(N) * (1.0 - rho**N)
    return _chart_grid("annulus-axisym", int(N), float(rho), int(M_r), int(M_theta), grading, measure)


def build_interval_grid(M: int) -> Grid:
    """Uniform cell-centred grid on (-1, 1); M even so that x -> -x permutes nodes."""
    if int(M) != M or M < 16:
        raise ParameterError(f"need M >= 16, got {M}")
    if M % 2:
        raise ParameterError(f"interval resolution must be even, got {M}")
    M = int(M)
    h = 2.0 / M
    faces = np.linspace(-1.0, 1.0, M + 1)
    x = -1.0 + h * (np.arange(M) + 0.5)
    idx = np.arange(M)
    dirichlet = np.zeros(M)
    dirichlet[0] = dirichlet[-1] = 2.0 / h
    return Grid(
        kind="interval", N=1, rho=0.0, r=x, theta=np.zeros(1), r_faces=faces,
        weights=np.full((M, 1), h), edge_a=idx[:-1].copy(), edge_b=idx[1:].copy(),
        edge_w=np.full(M - 1, 1.0 / h), dirichlet_w=dirichlet, measure=2.0,
    )


def grid_from_metadata(meta: dict) -> Grid:
    kind = meta["kind"]
    if kind == "interval":
        return build_interval_grid(meta["M_r"])
    if kind == "annulus-axisym":
        return build_annulus_grid(meta["N"], meta["rho"], meta["M_r"], meta["M_theta"], meta.get("grading", 1.0))
    return build_ball_grid(meta["N"], meta["M_r"], meta["M_theta"], kind=kind, grading=meta.get("grading", 1.0))


@dataclass(frozen=True)
class HalfSpace:
    """Closed half-space {x : x . h >= 0} through the origin.

    ``angle`` is the polar angle of the interior normal h in the chart plane
    (for the interval, 0 means {x >= 0} and pi means {x <= 0}).
    """

    angle: float

    @property
    def normal(self) -> np.ndarray:
        return np.array([math.cos(self.angle), math.sin(self.angle)])


EQUATOR = HalfSpace(0.0)


@dataclass(frozen=True, eq=False)
class ReflectionPermutation:
    """Node permutation induced by the reflection across the boundary of ``halfspace``.

    ``side`` is +1 on nodes interior to the half-space, -1 on the complement and
    0 on nodes lying on the reflecting hyperplane (the fixed nodes).
    """

    halfspace: HalfSpace
    perm: np.ndarray
    side: np.ndarray

    @property
    def fixed(self) -> np.ndarray:
        return np.flatnonzero(self.side == 0)

    def apply(self, values: np.ndarray) -> np.ndarray:
        return values[self.perm]


def _angle_mod(a: float, period: float) -> float:
    return a - period * math.floor(a / period + 0.5)


def reflection_permutation(grid: Grid, H: HalfSpace | float) -> ReflectionPermutation:
    """Exact reflection permutation for a half-space compatible with ``grid``.

    On the full disc the reflection x -> x - 2 (x.h) h maps theta to
    2 beta + pi - theta (beta the normal angle), which permutes nodes iff
    (2 beta + pi) / dtheta is an integer.  Axisymmetric charts and the
    interval only admit the equatorial hyperplane.
    """
    if not isinstance(H, HalfSpace):
        H = HalfSpace(float(H))
    beta = H.angle
    if grid.kind == "disc-full":
        M = grid.M_theta
        k_real = (2.0 * beta + math.pi) / grid.dtheta
        k = round(k_real)
        if abs(k_real - k) > _ANGLE_TOL * max(1.0, abs(k_real)):
            raise SymmetryMismatchError(f"normal angle {beta!r} is not compatible with M_theta={M}")
        j = np.arange(M)
        jmap = (k - j) % M
        perm = grid.index(np.arange(grid.M_r)[:, None], jmap[None, :]).ravel()
        c = np.cos(grid.theta - beta)
        side_row = np.where(c > _ANGLE_TOL, 1, np.where(c < -_ANGLE_TOL, -1, 0))
        side_row[(2 * j - k) % M == 0] = 0
        side = np.tile(side_row, grid.M_r).astype(np.int8)
        return ReflectionPermutation(H, perm, side)

    if abs(_angle_mod(beta, math.pi)) > _ANGLE_TOL:
        raise SymmetryMismatchError(f"{grid.kind} grids only admit the equatorial reflection, got normal angle {beta!r}")
    sign = 1 if abs(_angle_mod(beta, 2 * math.pi)) < _ANGLE_TOL else -1
    if grid.kind == "interval":
        M = grid.M_r
        perm = np.arange(M)[::-1].copy()
        side = (sign * np.sign(grid.r)).astype(np.int8)
        return ReflectionPermutation(H, perm, side)
    M = grid.M_theta
    if M % 2:
        raise SymmetryMismatchError("equatorial reflection needs an even M_theta")
    jmap = M - 1 - np.arange(M)
    perm = grid.index(np.arange(grid.M_r)[:, None], jmap[None, :]).ravel()
    side_row = np.where(grid.theta < math.pi / 2, sign, -sign)
    side = np.tile(side_row, grid.M_r).astype(np.int8)
    return ReflectionPermutation(H, perm, side)


def compatible_halfspaces(grid: Grid) -> list[HalfSpace]:
    """All half-spaces whose reflection is an exact node permutation.

    On the disc the normal angles k pi / M_theta (k = 0 .. 2 M_theta - 1) give
    M_theta reflection lines, each with both orientations.
    """
    if grid.kind == "disc-full":
        M = grid.M_theta
        return [HalfSpace(k * math.pi / M) for k in range(2 * M)]
    return [HalfSpace(0.0), HalfSpace(math.pi)]


def equatorial_reflection(grid: Grid) -> ReflectionPermutation:
    """Reflection across the hyperplane orthogonal to the chart axis (theta -> pi - theta)."""
    return reflection_permutation(grid, EQUATOR)


def save_grid_metadata(grid: Grid, path) -> None:
    import json

    Path(path).write_text(json.dumps(grid.metadata(), indent=2))

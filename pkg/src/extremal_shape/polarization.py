"""Two-point rearrangement with respect to half-spaces through the origin."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError
from .fields import Field, dirichlet_energy
from .geometry import HalfSpace, compatible_halfspaces, reflection_permutation


def polarize(u: Field, H: HalfSpace | float) -> Field:
    """max(u, u o sigma) inside H, min outside, unchanged on the hyperplane."""
    sigma = reflection_permutation(u.grid, H)
    v = u.values
    w = v[sigma.perm]
    out = np.where(sigma.side > 0, np.maximum(v, w), np.where(sigma.side < 0, np.minimum(v, w), v))
    return Field(u.grid, out, u.zero_average)


def classify(u: Field, H: HalfSpace | float, tol: float = 1e-8) -> str:
    """Compare u with its reflection inside H, node-wise up to tol * max|u|."""
    sigma = reflection_permutation(u.grid, H)
    inside = sigma.side > 0
    w = (u.values - u.values[sigma.perm])[inside]
    t = tol * u.max_abs()
    if np.all(np.abs(w) <= t):
        return "symmetric"
    if np.all(w >= -t):
        return "strict-above"
    if np.all(w <= t):
        return "strict-below"
    return "mixed"


@dataclass
class PolarizationReport:
    halfspace: float
    delta_integral: float
    delta_signed_power: float
    delta_pnorm: float
    energy_before: float
    energy_after: float
    case: str

    @property
    def energy_defect(self) -> float:
        return self.energy_before - self.energy_after

    def to_dict(self) -> dict:
        return {
            "halfspace_angle": self.halfspace,
            "delta_integral": self.delta_integral,
            "delta_signed_power": self.delta_signed_power,
            "delta_pnorm": self.delta_pnorm,
            "energy_before": self.energy_before,
            "energy_after": self.energy_after,
            "energy_defect": self.energy_defect,
            "case": self.case,
        }


def _rel(a: float, b: float, scale: float) -> float:
    return abs(a - b) / scale if scale > 0 else abs(a - b)


def polarization_identities(u: Field, H: HalfSpace | float, p: float) -> PolarizationReport:
    """Relative changes of the integrals of u, |u|^(p-2) u and |u|^p, and the energy pair.

    The scales are the integrals of |u|, |u|^(p-1) and |u|^p, so the deltas
    measure round-off in the rearranged sums.
    """
    if not isinstance(H, HalfSpace):
        H = HalfSpace(float(H))
    uh = polarize(u, H)
    m = u.grid.mass
    a, b = np.abs(u.values), np.abs(uh.values)
    d_int = _rel(float(m @ uh.values), float(m @ u.values), float(m @ a))
    sp_u = float(m @ (a ** (p - 1) * np.sign(u.values)))
    sp_h = float(m @ (b ** (p - 1) * np.sign(uh.values)))
    d_sp = _rel(sp_h, sp_u, float(m @ a ** (p - 1)))
    d_pn = _rel(float(m @ b**p), float(m @ a**p), float(m @ a**p))
    return PolarizationReport(
        halfspace=H.angle,
        delta_integral=d_int,
        delta_signed_power=d_sp,
        delta_pnorm=d_pn,
        energy_before=dirichlet_energy(u),
        energy_after=dirichlet_energy(uh),
        case=classify(u, H),
    )


def foliated_schwarz_defect(u: Field, e=None) -> float:
    """max over compatible H with e inside H of ||u_H - u||_2 / ||u||_2.

    The field is first expressed in a chart with e along theta = 0.
    """
    from .diagnostics import align, detect_axis

    grid = u.grid
    if not np.any(u.values):
        raise DegenerateInputError("field is identically zero")
    if e is None:
        e = detect_axis(u)
    w = align(u, e)
    m = grid.mass
    nu = math.sqrt(float(m @ (w.values**2)))
    worst = 0.0
    for H in compatible_halfspaces(grid):
        if math.cos(H.angle) <= 1e-12:
            continue
        d = polarize(w, H).values - w.values
        worst = max(worst, math.sqrt(float(m @ (d * d))) / nu)
    return worst

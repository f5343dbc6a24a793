"""Independent reference solutions.

* first nontrivial Neumann mode g(r) cos(theta) on the ball and annulus, by
  shooting on the radial ODE
  ``g'' + (N-1)/r g' + (Lambda - (N-1)/r^2) g = 0``;
* a Bessel-function evaluation of the same eigenvalue on the ball, used only
  as a cross-check of the shooting;
* the best Sobolev constant and the quotient of boundary-centred
  Aubin-Talenti bubbles (critical exponent);
* the extremal problem on the interval (-1, 1).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline
from scipy.optimize import brentq
from scipy.special import betainc, beta as beta_fn, gamma, jv, jvp

from .errors import NumericalFailureError, ParameterError, ResolutionError, UnsupportedDimensionError
from .geometry import ball_volume, sphere_measure

SHOOT_START = 1e-6


@dataclass
class RadialMode:
    """Radial profile g of the eigenfunction g(r) cos(theta) with eigenvalue ``Lambda``."""

    Lambda: float
    r: np.ndarray
    g: np.ndarray
    gp: np.ndarray
    N: int
    rho: float = 0.0

    @property
    def domain(self) -> str:
        return "ball" if self.rho == 0.0 else "annulus"

    def __call__(self, r):
        """Interpolated g at arbitrary radii (odd continuation below the first sample)."""
        spline = CubicHermiteSpline(self.r, self.g, self.gp)
        r = np.asarray(r, dtype=float)
        out = spline(np.clip(r, self.r[0], self.r[-1]))
        if self.rho == 0.0:
            small = r < self.r[0]
            out = np.where(small, r * self.gp[0], out)
        return out

    def derivative(self, r):
        spline = CubicHermiteSpline(self.r, self.g, self.gp)
        return spline.derivative()(np.clip(np.asarray(r, dtype=float), self.r[0], self.r[-1]))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["r", "g", "g_prime"])
            for row in zip(self.r, self.g, self.gp):
                w.writerow([repr(float(v)) for v in row])

    def to_dict(self) -> dict:
        return {"Lambda": self.Lambda, "N": self.N, "rho": self.rho, "domain": self.domain}


def _rhs(N):
    def f(r, y, lam):
        g, gp = y
        return [gp, -(N - 1) / r * gp - (lam - (N - 1) / r**2) * g]

    return f


def _shoot(N, lam, r0, y0, tol, dense=False):
    sol = solve_ivp(_rhs(N), (r0, 1.0), y0, args=(lam,), method="DOP853", rtol=tol, atol=tol * 1e-2, dense_output=dense)
    if not sol.success:
        raise NumericalFailureError(f"radial ODE integration failed at Lambda={lam}: {sol.message}")
    return sol


def _first_root(F, step=0.25, lam_max=200.0, tol=1e-13):
    lo, flo = 0.0, F(0.0)
    lam = step
    while lam <= lam_max:
        f = F(lam)
        if np.sign(f) != np.sign(flo):
            return brentq(F, lo, lam, xtol=tol, rtol=4 * np.finfo(float).eps)
        lo, flo = lam, f
        lam += step
    raise NumericalFailureError(f"no eigenvalue bracketed below {lam_max}")


def _mode(N, rho, tol, n_samples):
    if rho == 0.0:
        r0, y0 = SHOOT_START, [SHOOT_START, 1.0]
    else:
        r0, y0 = rho, [1.0, 0.0]

    def F(lam):
        return _shoot(N, lam, r0, y0, tol).y[1, -1]

    lam = _first_root(F)
    sol = _shoot(N, lam, r0, y0, tol, dense=True)
    r = np.linspace(r0, 1.0, n_samples)
    g, gp = sol.sol(r)
    scale = np.max(np.abs(g))
    return RadialMode(Lambda=float(lam), r=r, g=g / scale, gp=gp / scale, N=int(N), rho=float(rho))


def neumann_mode_ball(N: int, tol: float = 1e-12, n_samples: int = 2001) -> RadialMode:
    """Shooting from r = 1e-6 with the regular behaviour g ~ r; bisection/secant on Lambda until g'(1) = 0."""
    if int(N) != N or N < 2:
        raise UnsupportedDimensionError(f"need N >= 2, got {N}")
    return _mode(int(N), 0.0, tol, n_samples)


def neumann_mode_annulus(N: int, rho: float, tol: float = 1e-12, n_samples: int = 2001) -> RadialMode:
    """Shooting from r = rho with g(rho) = 1, g'(rho) = 0 to the first zero of g'(1)."""
    if int(N) != N or N < 2:
        raise UnsupportedDimensionError(f"need N >= 2, got {N}")
    if not 0.0 < rho < 1.0:
        raise ParameterError(f"inner radius must lie in (0, 1), got {rho}")
    return _mode(int(N), float(rho), tol, n_samples)


def bessel_ball_eigenvalue(N: int) -> float:
    """First nontrivial Neumann eigenvalue of the unit ball from Bessel functions.

    The radial profile is r^(1 - N/2) J_{N/2}(k r); the Neumann condition is
    (1 - N/2) J_{N/2}(k) + k J'_{N/2}(k) = 0.  Returns k^2 of the first root.
    """
    nu = N / 2.0

    def F(k):
        return (1.0 - nu) * jv(nu, k) + k * jvp(nu, k)

    ks = np.linspace(0.1, 10.0, 400)
    vals = F(ks)
    i = np.flatnonzero(np.sign(vals[1:]) != np.sign(vals[:-1]))[0]
    k = brentq(F, ks[i], ks[i + 1], xtol=1e-15)
    return float(k * k)


def f_profile(mode: RadialMode) -> tuple[np.ndarray, np.ndarray]:
    """Samples of f(r) = r^N g'(r) - r^(N-1) g(r)."""
    if mode.rho != 0.0:
        raise ParameterError("f is defined for the ball mode")
    N, r = mode.N, mode.r
    return r, r**N * mode.gp - r ** (N - 1) * mode.g


def f_monotonicity(mode: RadialMode) -> float:
    """Maximum of f over the sampled radial interval (negative on (0, 1])."""
    _, f = f_profile(mode)
    return float(f.max())


# -- Sobolev constant and instantons ----------------------------------------


def sobolev_constant(N: int) -> float:
    """Best constant S = pi N (N-2) (Gamma(N/2) / Gamma(N))^(2/N)."""
    if int(N) != N or N < 3:
        raise ParameterError(f"the Sobolev constant needs N >= 3, got {N}")
    return float(math.pi * N * (N - 2) * (gamma(N / 2) / gamma(N)) ** (2.0 / N))


def critical_exponent(N: int) -> float:
    if N < 3:
        raise ParameterError("critical exponent is finite only for N >= 3")
    return 2.0 * N / (N - 2)


def critical_bound(N: int) -> float:
    """S / 2^(2/N), the ceiling for the critical-exponent quotient on any smooth domain."""
    return sobolev_constant(N) / 2.0 ** (2.0 / N)


@dataclass(frozen=True)
class InstantonSpec:
    """Bubble of scale ``eps`` centred at a boundary point of the unit ball."""

    N: int
    eps: float
    x0: tuple = None
    resolution: int = 24

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 3:
            raise ParameterError(f"instantons need N >= 3, got {self.N}")
        if not self.eps > 0:
            raise ParameterError(f"eps must be positive, got {self.eps}")
        if self.x0 is None:
            object.__setattr__(self, "x0", tuple([0.0] * (self.N - 1) + [1.0]))
        if len(self.x0) != self.N or abs(np.linalg.norm(self.x0) - 1.0) > 1e-12:
            raise ParameterError("centre must be a unit vector in R^N")
        if self.resolution < 4:
            raise ParameterError("resolution must be >= 4")


def _bubble(N, eps, s):
    c = (N * (N - 2)) ** ((N - 2) / 4.0)
    q = eps * eps + s * s
    u = c * eps ** ((N - 2) / 2.0) / q ** ((N - 2) / 2.0)
    du = c * eps ** ((N - 2) / 2.0) * (N - 2) * s / q ** (N / 2.0)
    return u, du


def _cap_measure(N, s):
    """Measure of directions w on S^(N-1) with x0 + s w inside the unit ball.

    |x0 + s w| < 1 iff the angle b between w and -x0 satisfies cos b > s / 2.
    """
    m = N - 2
    phi = np.arccos(np.clip(s / 2.0, 0.0, 1.0))
    # int_0^phi sin^m b db for phi <= pi / 2 via the regularized incomplete beta function
    part = 0.5 * beta_fn((m + 1) / 2.0, 0.5) * betainc((m + 1) / 2.0, 0.5, np.sin(phi) ** 2)
    return sphere_measure(N - 2) * part


def _graded_nodes(eps, n_per_panel):
    edges = np.concatenate([[0.0], np.geomspace(eps * 1e-3, 2.0, 40)])
    t, w = np.polynomial.legendre.leggauss(n_per_panel)
    a, b = edges[:-1, None], edges[1:, None]
    s = 0.5 * (b - a) * t[None, :] + 0.5 * (a + b)
    ws = 0.5 * (b - a) * w[None, :]
    return s.ravel(), ws.ravel()


def _instanton_integrals_radial(N, eps, n):
    s, ws = _graded_nodes(eps, n)
    u, du = _bubble(N, eps, s)
    dens = ws * s ** (N - 1) * _cap_measure(N, s)
    return u, du, dens


def _instanton_integrals_direct(N, eps, n):
    """Two-dimensional (s, b) tensor quadrature without the closed-form cap measure."""
    s, ws = _graded_nodes(eps, n)
    t, w = np.polynomial.legendre.leggauss(4 * n)
    phi = np.arccos(np.clip(s / 2.0, 0.0, 1.0))
    b = 0.5 * phi[:, None] * (t[None, :] + 1.0)
    wb = 0.5 * phi[:, None] * w[None, :]
    cap = sphere_measure(N - 2) * np.sum(wb * np.sin(b) ** (N - 2), axis=1)
    u, du = _bubble(N, eps, s)
    return u, du, ws * s ** (N - 1) * cap


def _quotient_from(N, u, du, dens):
    p = critical_exponent(N)
    energy = float(np.sum(du**2 * dens))
    mean = float(np.sum(u * dens)) / ball_volume(N)
    lp = float(np.sum(np.abs(u - mean) ** p * dens)) ** (1.0 / p)
    return energy / lp**2


def instanton_quotient(spec: InstantonSpec, method: str = "radial", rtol: float = 1e-9) -> float:
    """Quotient of v = u_eps - mean(u_eps) on the unit ball, u_eps centred at ``spec.x0``.

    ``method="radial"`` integrates in the distance s to the centre using the
    closed-form measure of the cap of admissible directions; ``"direct"`` is
    a two-dimensional quadrature in (s, angle) kept as a cross-check.  Both
    use Gauss-Legendre panels graded geometrically toward the centre.  The
    result is compared with a run at doubled resolution; disagreement above
    ``rtol`` raises ResolutionError.
    """
    integrals = {"radial": _instanton_integrals_radial, "direct": _instanton_integrals_direct}[method]
    N, eps, n = spec.N, spec.eps, spec.resolution
    q1 = _quotient_from(N, *integrals(N, eps, n))
    q2 = _quotient_from(N, *integrals(N, eps, 2 * n))
    if abs(q1 - q2) > rtol * abs(q2):
        raise ResolutionError(
            f"instanton quadrature unresolved for eps={eps}: {q1!r} vs {q2!r}", trace=[q1, q2]
        )
    return q2


@dataclass
class IntervalExtremal:
    """Extremal of the quotient on (-1, 1) from a multi-start descent."""

    p: float
    Lambda: float
    u: object
    oddness_defect: float
    converged: bool
    starts: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "Lambda": self.Lambda,
            "oddness_defect": self.oddness_defect,
            "converged": self.converged,
            "starts": self.starts,
        }


def oddness_defect(u) -> float:
    """||u + u(-x)||_2 / ||u||_2 on an interval field."""
    v = u.values
    w = u.grid.mass
    return float(math.sqrt(np.dot(w, (v + v[::-1]) ** 2) / np.dot(w, v * v)))


def interval_extremal(p: float, M: int = 256, seed: int = 0, n_random: int = 3, max_iters: int = 20000,
                      tol_residual: float = 1e-9) -> IntervalExtremal:
    """Minimize ||u'||^2 / ||u||_p^2 over zero-average u on (-1, 1).

    Runs the same descent as the N-dimensional solver from the odd profile
    sin(pi x / 2) with seeded even perturbations; the smallest quotient wins.
    """
    from .solver import ProblemSpec, minimize_multistart

    if p < 2:
        raise ParameterError(f"need p >= 2, got {p}")
    spec = ProblemSpec(domain="interval", M_r=M, p=p, seed=seed, max_iters=max_iters,
                       tol_residual=tol_residual, init="oracle")
    best, runs = minimize_multistart(spec, n_random=n_random, perturbation="even")
    return IntervalExtremal(
        p=float(p),
        Lambda=best.Lambda,
        u=best.u,
        oddness_defect=oddness_defect(best.u),
        converged=best.converged,
        starts=[{"seed": r.seed, "Lambda": r.Lambda, "converged": r.converged} for r in runs],
    )


def interval_oddness_threshold(level: float = 0.01, p_lo: float = 3.0, p_hi: float = 10.0, p_tol: float = 0.05,
                               M: int = 256, seed: int = 0) -> tuple[float, list]:
    """Smallest p (to ``p_tol``) where the interval oddness defect exceeds ``level``, by bisection."""
    table = []

    def above(p):
        res = interval_extremal(p, M=M, seed=seed)
        table.append((p, res.oddness_defect))
        return res.oddness_defect > level

    if above(p_lo) or not above(p_hi):
        raise NumericalFailureError("oddness threshold not bracketed", trace=table)
    lo, hi = p_lo, p_hi
    while hi - lo > p_tol:
        mid = 0.5 * (lo + hi)
        if above(mid):
            hi = mid
        else:
            lo = mid
    return hi, table

"""Minimization of the quotient ||grad u||^2 / ||u||_p^2 over discrete subspaces.

The descent direction is the Sobolev gradient: the Euclidean gradient of the
quotient mapped through the inverse of the discrete Neumann Laplacian (a
bordered system carrying the zero-average constraint).  With unit step and
||grad u|| = 1 the update reduces to the nonlinear inverse iteration

    u <- lambda K^+ M |u|^(p-2) u,

which is the exact inverse power method at p = 2.  A backtracking Armijo
search on the quotient keeps the trace monotone.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import BracketError, InitError, ParameterError
from .fields import Field, rotate
from .geometry import (
    Grid,
    build_annulus_grid,
    build_ball_grid,
    build_interval_grid,
    equatorial_reflection,
)
from .variational import signed_power

DOMAINS = ("disc", "ball", "annulus", "interval")
SUBSPACES = ("full", "antisymmetric", "dirichlet-half", "radial")
INITS = ("oracle", "random", "supplied")
_SUBSPACE_ALIASES = {"antisym": "antisymmetric", "as": "antisymmetric"}


@dataclass(frozen=True)
class ProblemSpec:
    """Everything needed to reproduce one minimization."""

    domain: str = "disc"
    N: int = 2
    rho: float = 0.5
    M_r: int = 64
    M_theta: int = 64
    p: float = 2.0
    subspace: str = "full"
    init: str = "oracle"
    noise: float = 0.01
    tol_quotient: float = 1e-12
    tol_residual: float = 1e-8
    max_iters: int = 5000
    stagnation_window: int = 3
    seed: int = 0
    sup_ceiling: float = 1e3

    def __post_init__(self):
        sub = _SUBSPACE_ALIASES.get(self.subspace, self.subspace)
        object.__setattr__(self, "subspace", sub)
        if self.domain == "interval":
            object.__setattr__(self, "N", 1)
        elif self.domain == "disc":
            object.__setattr__(self, "N", 2)
        self.validate()

    @property
    def critical_exponent(self) -> float:
        return math.inf if self.N <= 2 else 2.0 * self.N / (self.N - 2)

    def validate(self) -> None:
        if self.domain not in DOMAINS:
            raise ParameterError(f"unknown domain {self.domain!r}")
        if self.subspace not in SUBSPACES:
            raise ParameterError(f"unknown subspace {self.subspace!r}")
        if self.init not in INITS:
            raise ParameterError(f"unknown init {self.init!r}")
        if self.domain in ("ball", "annulus") and self.N < 2:
            raise ParameterError(f"{self.domain} needs N >= 2")
        if not (self.p >= 2.0):
            raise ParameterError(f"exponent must satisfy p >= 2, got {self.p}")
        if self.N >= 3 and self.p > self.critical_exponent + 1e-12:
            raise ParameterError(f"p = {self.p} exceeds the critical exponent {self.critical_exponent:g} for N = {self.N}")
        if not math.isfinite(self.p):
            raise ParameterError("p must be finite")
        if self.subspace == "radial" and self.domain == "interval":
            raise ParameterError("radial subspace is meaningless on the interval")
        if self.max_iters < 1:
            raise ParameterError("max_iters must be positive")
        if self.tol_residual <= 0 or self.tol_quotient <= 0:
            raise ParameterError("tolerances must be positive")

    def build_grid(self) -> Grid:
        return _grid_for(self.domain, self.N, self.rho, self.M_r, self.M_theta)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ProblemSpec":
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ParameterError(f"unknown problem fields: {sorted(unknown)}")
        return cls(**data)


_GRID_CACHE: dict = {}


def _grid_for(domain, N, rho, M_r, M_theta) -> Grid:
    key = (domain, N, rho if domain == "annulus" else 0.0, M_r, M_theta if domain != "interval" else 1)
    grid = _GRID_CACHE.get(key)
    if grid is None:
        if domain == "interval":
            grid = build_interval_grid(M_r)
        elif domain == "annulus":
            grid = build_annulus_grid(N, rho, M_r, M_theta)
        else:
            grid = build_ball_grid(N, M_r, M_theta)
        _GRID_CACHE[key] = grid
    return grid


@dataclass
class SolveResult:
    """Normalized minimizer (||grad u|| = 1) and its multipliers.

    ``Lambda`` is the restricted infimum for the requested subspace; for the
    half-ball Dirichlet problem it is the half-ball quotient, i.e. the
    antisymmetric extension's quotient divided by 2^(1 - 2/p).
    """

    spec: ProblemSpec
    u: Field
    Lambda: float
    quotient: float
    lambda_p: float
    mu_p: float
    residual_l2: float
    iterations: int
    converged: bool
    trace: list
    flags: list = field(default_factory=list)
    seed: int = 0

    def to_dict(self, include_trace: bool = True) -> dict:
        out = {
            "config": self.spec.to_dict(),
            "seed": self.seed,
            "Lambda": self.Lambda,
            "quotient": self.quotient,
            "lambda_p": self.lambda_p,
            "mu_p": self.mu_p,
            "residual_l2": self.residual_l2,
            "iterations": self.iterations,
            "converged": self.converged,
            "flags": list(self.flags),
            "sup_norm": float(np.max(np.abs(self.u.values))),
        }
        if include_trace:
            out["quotient_trace"] = list(self.trace)
        return out


# -- linear algebra ------------------------------------------------------------


def _operator(grid: Grid, dirichlet: bool):
    return grid.stiffness_dirichlet if dirichlet else grid.stiffness


def _bordered_solver(grid: Grid, dirichlet: bool):
    """Factorization of [[K, m], [m^T, 0]]; solutions have zero average."""
    key = ("bordered", dirichlet)
    lu = grid._cache.get(key)
    if lu is None:
        K = _operator(grid, dirichlet)
        m = grid.mass[:, None]
        A = sp.bmat([[K, sp.csr_matrix(m)], [sp.csr_matrix(m.T), None]], format="csc")
        lu = splu(A)
        grid._cache[key] = lu
    n = grid.n_nodes

    def solve(rhs):
        return lu.solve(np.append(rhs, 0.0))[:n]

    return solve


class _Subspace:
    def __init__(self, grid: Grid, name: str):
        self.grid = grid
        self.name = name
        self.dirichlet = name == "dirichlet-half"
        self.sigma = equatorial_reflection(grid) if name in ("antisymmetric", "dirichlet-half") else None

    def project(self, v: np.ndarray) -> np.ndarray:
        g = self.grid
        if self.sigma is not None:
            v = 0.5 * (v - v[self.sigma.perm])
        elif self.name == "radial":
            t = v.reshape(g.shape)
            w = g.weights
            ring = (t * w).sum(axis=1) / w.sum(axis=1)
            v = np.repeat(ring, g.M_theta)
        return v - (g.mass @ v) / g.volume


def _energy(K, v):
    return float(v @ (K @ v))


def _pnorm_sq(mass, v, p):
    a = np.abs(v)
    s = a.max()
    return (s * (mass @ (a / s) ** p) ** (1.0 / p)) ** 2


# -- initial fields ----------------------------------------------------------------


def oracle_field(grid: Grid) -> np.ndarray:
    """The p = 2 extremal sampled on ``grid`` (axis along theta = 0)."""
    from .oracles import neumann_mode_annulus, neumann_mode_ball

    if grid.kind == "interval":
        return np.sin(0.5 * math.pi * grid.node_r)
    mode = neumann_mode_annulus(grid.N, grid.rho) if grid.kind == "annulus-axisym" else neumann_mode_ball(grid.N)
    return (mode(grid.r)[:, None] * np.cos(grid.theta)[None, :]).ravel()


def _initial(spec: ProblemSpec, grid: Grid, init_field, rng) -> np.ndarray:
    if spec.init == "supplied" or init_field is not None:
        if init_field is None:
            raise InitError("init='supplied' needs an initial field")
        v = np.array(init_field.values if isinstance(init_field, Field) else init_field, dtype=float).ravel()
        if v.size != grid.n_nodes:
            raise InitError("supplied field does not match the grid")
        return v
    if spec.init == "random":
        return rng.standard_normal(grid.n_nodes)
    v = oracle_field(grid)
    if spec.noise:
        v = v + spec.noise * np.max(np.abs(v)) * rng.standard_normal(grid.n_nodes)
    return v


# -- descent ------------------------------------------------------------------------


@dataclass
class _State:
    u: np.ndarray
    Q: float
    residual: float
    lam: float
    mu: float
    iterations: int
    converged: bool
    trace: list


def _residual(grid, K, u, p):
    """Scaled node-wise EL residual at ||grad u|| = 1; returns (res, lambda, mu, Q)."""
    mass = grid.mass
    nsq = _pnorm_sq(mass, u, p)
    Q = _energy(K, u) / nsq
    lam = Q ** (p / 2.0)
    phi = signed_power(u, p)
    mu = -lam * float(mass @ phi) / grid.volume
    r = (K @ u) / mass - lam * phi - mu
    scale = lam * math.sqrt(float(mass @ (phi * phi)))
    return math.sqrt(float(mass @ (r * r))) / scale, lam, mu, Q


def _descend(u, grid, p, sub: _Subspace, spec: ProblemSpec, max_iters: int, trace: list) -> _State:
    K = _operator(grid, sub.dirichlet)
    solve = _bordered_solver(grid, sub.dirichlet)
    mass = grid.mass

    def normalized(v):
        v = sub.project(v)
        e = _energy(K, v)
        if not e > 0 or not np.all(np.isfinite(v)):
            raise InitError("field vanishes after subspace projection")
        return v / math.sqrt(e)

    u = normalized(u)
    Q = 1.0 / _pnorm_sq(mass, u, p)
    trace.append(Q)
    it = 0
    res = lam = mu = math.nan
    converged = False
    while True:
        res, lam, mu, Q = _residual(grid, K, u, p)
        window = spec.stagnation_window
        stagnant = len(trace) > window and abs(trace[-1 - window] - trace[-1]) <= spec.tol_quotient * abs(trace[-1])
        if res <= spec.tol_residual and (stagnant or res <= 1e-3 * spec.tol_residual):
            converged = True
            break
        if it >= max_iters:
            break
        # half the Euclidean gradient of Q, up to the factor Q: K u - lambda M phi
        g = K @ u - lam * mass * signed_power(u, p)
        d = sub.project(solve(g))
        slope = 2.0 * Q * float(g @ d)
        if not slope > 0:
            break
        t = 1.0
        while True:
            trial = normalized(u - t * d)
            Qt = 1.0 / _pnorm_sq(mass, trial, p)
            if Qt <= Q - 1e-4 * t * slope or t < 1e-12:
                break
            if t == 1.0 and Qt <= Q * (1.0 + 1e-14):
                # quotient flat to round-off: take the inverse-iteration step
                break
            t *= 0.5
        it += 1
        if Qt > Q * (1.0 + 1e-14):
            # no descent possible at round-off level: stop, keep current iterate
            break
        u = trial
        trace.append(Qt)
    return _State(u=u, Q=Q, residual=res, lam=lam, mu=mu, iterations=it, converged=converged, trace=trace)


def _axis_angle(grid: Grid, u: np.ndarray) -> float:
    x = grid.coords
    m = grid.mass * u
    return math.atan2(float(m @ x[:, 1]), float(m @ x[:, 0]))


def _orient(grid: Grid, u: np.ndarray) -> np.ndarray:
    """Sign convention: the first moment along the chart axis is nonnegative."""
    if float((grid.mass * u) @ grid.coords[:, 0]) < 0:
        return -u
    return u


def minimize(spec: ProblemSpec, init_field=None, *, grid: Grid | None = None) -> SolveResult:
    """Minimize the quotient over the subspace in ``spec``.

    Non-convergence within ``max_iters`` is reported through ``converged`` and
    is not an exception.  On the full disc the minimizer is finally rotated so
    that its axis lies along theta = 0 and the descent is resumed.
    """
    grid = grid or spec.build_grid()
    rng = np.random.default_rng(spec.seed)
    sub = _Subspace(grid, spec.subspace)
    u0 = _initial(spec, grid, init_field, rng)
    trace: list = []
    state = _descend(u0, grid, spec.p, sub, spec, spec.max_iters, trace)
    if grid.kind == "disc-full" and spec.subspace == "full":
        angle = _axis_angle(grid, state.u)
        if abs(angle) > 1e-14:
            rotated = rotate(Field(grid, state.u), -angle).values
            budget = max(spec.max_iters - state.iterations, 50)
            first = state.iterations
            state = _descend(rotated, grid, spec.p, sub, spec, budget, trace)
            state.iterations += first
    u = _orient(grid, state.u)
    flags = []
    sup = float(np.max(np.abs(u)))
    if sup > spec.sup_ceiling:
        flags.append("concentration")
    if not state.converged:
        flags.append("not-converged")
    Lam = state.Q
    if spec.subspace == "dirichlet-half":
        Lam = state.Q * 2.0 ** (2.0 / spec.p - 1.0)
    return SolveResult(
        spec=spec,
        u=Field(grid, u, True),
        Lambda=float(Lam),
        quotient=float(state.Q),
        lambda_p=float(state.lam),
        mu_p=float(state.mu),
        residual_l2=float(state.residual),
        iterations=int(state.iterations),
        converged=bool(state.converged),
        trace=[float(q) for q in state.trace],
        flags=flags,
        seed=spec.seed,
    )


def _even_perturbation(grid: Grid, rng, amplitude=0.3) -> np.ndarray:
    """Smooth perturbation symmetric under the equatorial reflection."""
    a = rng.uniform(-1.0, 1.0, size=3)
    if grid.kind == "interval":
        x = grid.node_r
        return amplitude * sum(a[k] * np.cos((k + 1) * math.pi * x) for k in range(3))
    r, th = grid.node_r, grid.node_theta
    return amplitude * (a[0] * r * r + a[1] * (r * np.sin(th)) ** 2 + a[2] * r**2 * np.cos(2 * th))


def minimize_multistart(spec: ProblemSpec, n_random: int = 3, perturbation: str = "random", extra_inits=(),
                        grid: Grid | None = None):
    """Run the oracle start plus ``n_random`` seeded starts; smallest quotient wins.

    ``perturbation="random"`` starts from seeded white noise;
    ``"even"`` adds a seeded smooth perturbation, symmetric under the
    equatorial reflection, to the p = 2 extremal.  ``extra_inits`` are
    additional supplied fields.  Ties within 1e-10 go to the earlier start.
    """
    grid = grid or spec.build_grid()
    runs = [minimize(replace(spec, init="oracle"), grid=grid)]
    for k in range(1, n_random + 1):
        seed = spec.seed + k
        if perturbation == "even":
            rng = np.random.default_rng(seed)
            v = oracle_field(grid) + _even_perturbation(grid, rng)
            runs.append(minimize(replace(spec, init="supplied", seed=seed), v, grid=grid))
        else:
            runs.append(minimize(replace(spec, init="random", seed=seed), grid=grid))
    for j, v in enumerate(extra_inits):
        runs.append(minimize(replace(spec, init="supplied", seed=spec.seed + n_random + 1 + j), v, grid=grid))
    best = runs[0]
    for r in runs[1:]:
        if r.Lambda < best.Lambda - 1e-10 * abs(best.Lambda):
            best = r
    return best, runs


def sweep_p(spec: ProblemSpec, p_values, warm_start: bool = True) -> list:
    """Solve at each p in ascending order.

    With ``warm_start`` each entry starts from the previous minimizer plus the
    spec's seeded noise; otherwise every entry uses the spec's own init.
    """
    p_values = [float(p) for p in p_values]
    if any(b < a for a, b in zip(p_values, p_values[1:])):
        raise ParameterError("p values must be ascending")
    for p in p_values:
        replace(spec, p=p)  # validates the range
    grid = spec.build_grid()
    results = []
    prev = None
    for p in p_values:
        s = replace(spec, p=p)
        if warm_start and prev is not None:
            # seeded noise lets the descent leave a branch that has become a saddle
            rng = np.random.default_rng(s.seed)
            v = prev.u.values
            v = v + s.noise * np.max(np.abs(v)) * rng.standard_normal(v.size)
            res = minimize(replace(s, init="supplied"), v, grid=grid)
        else:
            res = minimize(s, grid=grid)
        results.append(res)
        prev = res
    return results


@dataclass
class BreakResult:
    p_star: float
    bracket: tuple
    gap_tol: float
    table: list

    def to_dict(self) -> dict:
        return {"p_star": self.p_star, "bracket": list(self.bracket), "gap_tol": self.gap_tol, "table": self.table}


def antisymmetry_gap(spec: ProblemSpec, p: float, n_random: int = 3, grid: Grid | None = None) -> dict:
    """Lambda_p (multi-start, full space) against Lambda'_p (antisymmetric subspace)."""
    grid = grid or spec.build_grid()
    s = replace(spec, p=p)
    anti = minimize(replace(s, subspace="antisymmetric", init="oracle"), grid=grid)
    rng = np.random.default_rng(spec.seed + 1000)
    warm = anti.u.values + spec.noise * rng.standard_normal(grid.n_nodes) * np.max(np.abs(anti.u.values))
    best, runs = minimize_multistart(replace(s, subspace="full"), n_random=n_random, extra_inits=[warm], grid=grid)
    return {
        "p": float(p),
        "Lambda": best.Lambda,
        "Lambda_antisym": anti.Lambda,
        "gap": anti.Lambda - best.Lambda,
        "converged": bool(best.converged and anti.converged),
        "best_seed": best.seed,
        "starts": [r.Lambda for r in runs],
        "_full": best,
        "_anti": anti,
    }


def find_antisymmetry_break(spec: ProblemSpec, p_lo: float = 2.0, p_hi: float = 64.0, gap_tol: float = 1e-6,
                            p_tol: float = 0.05, n_random: int = 3) -> BreakResult:
    """Bisection on the sign of Lambda'_p - Lambda_p - gap_tol over [p_lo, p_hi].

    Returns the upper end of the final bracket (the smallest probed p whose gap
    exceeds ``gap_tol``).  The gap table rows omit the fields themselves.
    """
    if spec.N != 2 or spec.domain not in ("disc", "ball"):
        raise ParameterError("the antisymmetry-breaking search is implemented for the disc only")
    if p_lo < 2 or p_hi <= p_lo:
        raise ParameterError("need 2 <= p_lo < p_hi")
    grid = spec.build_grid()
    table = []

    def probe(p):
        row = antisymmetry_gap(spec, p, n_random=n_random, grid=grid)
        table.append({k: v for k, v in row.items() if not k.startswith("_")})
        return row["gap"] > gap_tol

    if probe(p_lo) or not probe(p_hi):
        raise BracketError(f"no sign change of the gap in [{p_lo}, {p_hi}]", trace=table)
    lo, hi = p_lo, p_hi
    while hi - lo > p_tol:
        mid = math.sqrt(lo * hi) if hi / lo > 1.5 else 0.5 * (lo + hi)
        if probe(mid):
            hi = mid
        else:
            lo = mid
    table.sort(key=lambda row: row["p"])
    return BreakResult(p_star=hi, bracket=(lo, hi), gap_tol=gap_tol, table=table)


def results_to_jsonl(results, path) -> None:
    with open(path, "w") as fh:
        for r in results:
            fh.write(json.dumps(r.to_dict(include_trace=False), sort_keys=True) + "\n")

"""Quotient, auxiliary functional, Nehari scaling, Euler-Lagrange residual, second variation."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh, splu

from .errors import ConstraintError, DegenerateInputError, GridMismatchError, NumericalFailureError, ParameterError
from .fields import Field, dirichlet_energy, dirichlet_form, integrate, is_zero_average, lp_norm

HESSIAN_FLOOR = 1e-30


def signed_power(values: np.ndarray, p: float) -> np.ndarray:
    """|u|^(p-2) u, equal to u itself at p = 2."""
    if p == 2:
        return values.copy()
    return np.abs(values) ** (p - 1) * np.sign(values)


def _require_nonzero(u: Field) -> None:
    if not np.any(u.values):
        raise DegenerateInputError("field is identically zero")


def _require_zero_average(u: Field, rtol: float = 1e-10) -> None:
    if u.zero_average is False or (u.zero_average is None and not is_zero_average(u, rtol)):
        raise ConstraintError(f"field does not have zero average (integral {integrate(u):.3e})")


def rayleigh_quotient(u: Field, p: float, *, dirichlet: bool = False) -> float:
    """||grad u||_2^2 / ||u||_p^2 on zero-average u."""
    _require_nonzero(u)
    if not dirichlet:
        _require_zero_average(u)
    return dirichlet_energy(u, dirichlet=dirichlet) / lp_norm(u, p) ** 2


def g_functional(u: Field, p: float) -> float:
    """G(u) = 1/2 ||grad u||^2 - 1/p ||u||_p^p, used for p > 2 only."""
    if p <= 2:
        raise ParameterError(f"G is defined here for p > 2, got {p}")
    return 0.5 * dirichlet_energy(u) - np.sum(u.grid.mass * np.abs(u.values) ** p) / p


def nehari_scale(u: Field, p: float) -> float:
    if p <= 2:
        raise ParameterError(f"the Nehari manifold needs p > 2, got {p}")
    _require_nonzero(u)
    num = dirichlet_energy(u)
    den = float(np.sum(u.grid.mass * np.abs(u.values) ** p))
    return (num / den) ** (1.0 / (p - 2))


def nehari_project(u: Field, p: float) -> Field:
    """Scale u onto {||grad u||^2 = ||u||_p^p}."""
    return Field(u.grid, nehari_scale(u, p) * u.values, u.zero_average)


def normalize_energy(u: Field, *, dirichlet: bool = False) -> Field:
    """Scale to ||grad u||_2 = 1."""
    _require_nonzero(u)
    e = dirichlet_energy(u, dirichlet=dirichlet)
    if e <= 0:
        raise DegenerateInputError("field has zero Dirichlet energy")
    return Field(u.grid, u.values / math.sqrt(e), u.zero_average)


@dataclass
class ELResidual:
    """Multipliers and residual of -Delta u = lambda |u|^(p-2) u + mu at ||grad u|| = 1."""

    lambda_p: float
    mu_p: float
    residual_l2: float
    Lambda: float = float("nan")

    def to_dict(self) -> dict:
        return asdict(self)


def el_residual(u: Field, p: float, *, dirichlet: bool = False) -> ELResidual:
    """Normalize u, then evaluate the Euler-Lagrange equation node-wise.

    lambda = Q^(p/2) with Q the quotient, mu = -(lambda / |Omega|) * int |u|^(p-2) u,
    and the residual ||-Delta u - lambda |u|^(p-2) u - mu||_2 is divided by
    ||lambda |u|^(p-2) u||_2 so that tolerances do not depend on p.
    """
    _require_nonzero(u)
    grid = u.grid
    u = normalize_energy(u, dirichlet=dirichlet)
    Q = 1.0 / lp_norm(u, p) ** 2
    lam = Q ** (p / 2.0)
    phi = signed_power(u.values, p)
    mu = -lam * float(grid.mass @ phi) / grid.volume
    K = grid.stiffness_dirichlet if dirichlet else grid.stiffness
    res = (K @ u.values) / grid.mass - lam * phi - mu
    scale = lam * math.sqrt(float(grid.mass @ (phi * phi)))
    r = math.sqrt(float(grid.mass @ (res * res))) / scale
    return ELResidual(lambda_p=float(lam), mu_p=float(mu), residual_l2=float(r), Lambda=float(Q))


def hessian_form(u: Field, v: Field, w: Field, p: float) -> float:
    """G''(u)(v, w) = a(v, w) - (p - 1) int |u|^(p-2) v w."""
    if p < 2:
        raise ParameterError(f"need p >= 2, got {p}")
    if not (u.grid is v.grid is w.grid):
        raise GridMismatchError("hessian_form arguments live on different grids")
    weight = np.maximum(np.abs(u.values), HESSIAN_FLOOR) ** (p - 2)
    return dirichlet_form(v, w) - (p - 1) * float(u.grid.mass @ (weight * v.values * w.values))


@dataclass
class HessianProbe:
    p: float
    min_rayleigh: float
    constraint_residuals: tuple
    mu_hat: float
    iterations: int
    v: Field = field(repr=False, default=None)

    def to_dict(self) -> dict:
        return {
            "p": self.p,
            "min_rayleigh": self.min_rayleigh,
            "constraint_residuals": list(self.constraint_residuals),
            "mu_hat": self.mu_hat,
            "iterations": self.iterations,
        }


def tangent_operator(u: Field, p: float, *, dirichlet: bool = False):
    """Stiffness K and potential diag for G''(u) after scaling u onto the Nehari set.

    For ||grad u|| = 1 the Nehari scaling c satisfies c^(p-2) = lambda_p, hence
    the potential is (p - 1) lambda_p |u|^(p-2); this expression extends to p = 2.
    """
    grid = u.grid
    u = normalize_energy(u, dirichlet=dirichlet)
    lam = (1.0 / lp_norm(u, p) ** 2) ** (p / 2.0)
    weight = lam * np.maximum(np.abs(u.values), HESSIAN_FLOOR) ** (p - 2)
    K = grid.stiffness_dirichlet if dirichlet else grid.stiffness
    return u, K, (p - 1) * weight


def _antisymmetric_basis(grid) -> sp.csr_matrix:
    """Columns e_a - e_sigma(a) for nodes a strictly inside the equatorial half-space."""
    from .geometry import equatorial_reflection

    sigma = equatorial_reflection(grid)
    a = np.flatnonzero(sigma.side > 0)
    b = sigma.perm[a]
    k = a.size
    rows = np.concatenate([a, b])
    cols = np.concatenate([np.arange(k), np.arange(k)])
    vals = np.concatenate([np.ones(k), -np.ones(k)])
    return sp.csr_matrix((vals, (rows, cols)), shape=(grid.n_nodes, k))


def min_hessian_on_tangent(u: Field, p: float, *, dirichlet: bool = False, antisymmetric: bool = False,
                           n_vectors: int = 3, tol: float = 1e-10, maxiter: int = 5000,
                           seed: int = 0) -> HessianProbe:
    """Smallest value of G''(u)(v, v) / ||v||_2^2 over v with int v = 0 and (u, v)_{H^1} = 0.

    With ``antisymmetric=True`` v is further restricted to fields that are odd
    under the equatorial reflection, the second-order condition for minimizers
    of the restricted problem.  Shift-invert Lanczos on the constrained pencil
    (A, M): each solve uses a bordered system carrying the constraints, with
    the shift placed below the spectrum (A >= -max(potential) M since K is
    positive semidefinite).
    """
    if p < 2:
        raise ParameterError(f"need p >= 2, got {p}")
    grid = u.grid
    u, K, pot = tangent_operator(u, p, dirichlet=dirichlet)
    mass = grid.mass
    A_full = (K - sp.diags(pot * mass)).tocsr()
    C = np.column_stack([mass, K @ u.values])
    if antisymmetric:
        P = _antisymmetric_basis(grid)
    else:
        P = sp.identity(grid.n_nodes, format="csr")
    A = (P.T @ A_full @ P).tocsc()
    Msp = (P.T @ sp.diags(mass) @ P).tocsc()
    C = P.T @ C
    # constraints already implied by the subspace reduce to zero columns
    norms = np.linalg.norm(C, axis=0)
    C = C[:, norms > 1e-12 * max(norms.max(), 1e-300)]
    n, nc = A.shape[0], C.shape[1]
    sigma = -float(np.max(pot)) - 1.0
    border = sp.bmat([[A - sigma * Msp, sp.csc_matrix(C)], [sp.csc_matrix(C.T), None]], format="csc")
    lu = splu(border)
    calls = [0]

    def opinv(z):
        calls[0] += 1
        return lu.solve(np.concatenate([np.asarray(z).ravel(), np.zeros(nc)]))[:n]

    OP = LinearOperator((n, n), matvec=opinv, dtype=float)
    rng = np.random.default_rng(seed)
    v0 = opinv(Msp @ rng.standard_normal(n))
    try:
        vals, vecs = eigsh(A, k=n_vectors, M=Msp, sigma=sigma, which="LM", OPinv=OP, v0=v0, tol=tol,
                           maxiter=maxiter)
    except ArpackNoConvergence as exc:
        raise NumericalFailureError("eigensolver did not converge on the tangent space",
                                    trace=[float(x) for x in exc.eigenvalues]) from exc
    k = int(np.argmin(vals))
    v = P @ vecs[:, k]
    A = A_full
    v = v / math.sqrt(float(mass @ (v * v)))
    c1 = abs(float(mass @ v)) / math.sqrt(grid.volume)
    c2 = abs(float(u.values @ (K @ v))) / math.sqrt(max(float(v @ (K @ v)), 1e-300))
    if max(c1, c2) > 1e-8:
        raise NumericalFailureError(f"tangent constraints violated ({c1:.2e}, {c2:.2e})", trace=[c1, c2])
    value = float(v @ (A @ v))
    mu_hat = -float(mass @ (pot / (p - 1) * v)) / grid.volume
    return HessianProbe(p=float(p), min_rayleigh=value, constraint_residuals=(c1, c2), mu_hat=mu_hat,
                        iterations=calls[0], v=Field(grid, v))

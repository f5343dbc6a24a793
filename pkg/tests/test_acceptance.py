import json
import math
import time
from functools import lru_cache

import numpy as np
import pytest

from extremal_shape.cli import main
from extremal_shape.diagnostics import (
    antisymmetry_defect,
    axial_positivity,
    nodal_count,
    rank1_defect,
    theta_monotonicity,
)
from extremal_shape.fields import Field, cartesian_partials, project_zero_average, reflect
from extremal_shape.geometry import build_ball_grid, compatible_halfspaces, reflection_permutation
from extremal_shape.oracles import (
    InstantonSpec,
    critical_bound,
    instanton_quotient,
    interval_extremal,
    interval_oddness_threshold,
    neumann_mode_annulus,
    neumann_mode_ball,
)
from extremal_shape.polarization import foliated_schwarz_defect, polarization_identities, polarize
from extremal_shape.solver import ProblemSpec, antisymmetry_gap, find_antisymmetry_break, minimize
from extremal_shape.variational import el_residual, min_hessian_on_tangent

pytestmark = pytest.mark.slow

DISC = dict(domain="disc", M_r=64, M_theta=64)
HESSIAN_FLOOR = -1e-6


@lru_cache(maxsize=None)
def disc_min(p):
    return minimize(ProblemSpec(p=p, **DISC))


@lru_cache(maxsize=None)
def disc_anti(p):
    return minimize(ProblemSpec(p=p, subspace="antisymmetric", **DISC))


@lru_cache(maxsize=None)
def break_search():
    spec = ProblemSpec(domain="disc", M_r=48, M_theta=48)
    return spec, find_antisymmetry_break(spec)


@pytest.mark.criterion(1, "Neumann eigenvalue against the shooting oracle")
@pytest.mark.parametrize(
    "label,spec,mode",
    [
        ("disc", ProblemSpec(domain="disc", M_r=128, M_theta=128, p=2.0), lambda: neumann_mode_ball(2)),
        ("ball N=3", ProblemSpec(domain="ball", N=3, M_r=128, M_theta=128, p=2.0), lambda: neumann_mode_ball(3)),
        ("annulus rho=0.5", ProblemSpec(domain="annulus", N=2, rho=0.5, M_r=128, M_theta=128, p=2.0),
         lambda: neumann_mode_annulus(2, 0.5)),
    ],
    ids=["disc", "ball3", "annulus"],
)
def test_c01_eigenvalue_oracle(label, spec, mode, note):
    t0 = time.perf_counter()
    res = minimize(spec)
    elapsed = time.perf_counter() - t0
    ref = mode().Lambda
    rel = abs(res.Lambda - ref) / ref
    note(1, f"{label}: Lambda={res.Lambda:.6f} oracle={ref:.6f} rel={rel:.1e} time={elapsed:.1f}s")
    assert res.converged
    assert rel <= 1e-3
    assert elapsed <= 60


@pytest.mark.criterion(2, "Euler-Lagrange consistency on the disc")
@pytest.mark.parametrize("p", [2.0, 2.5, 3.0, 4.0])
def test_c02_euler_lagrange(p, note):
    res = disc_min(p)
    el = el_residual(res.u, p)
    rel = abs(el.lambda_p - res.Lambda ** (p / 2)) / el.lambda_p
    note(2, f"p={p}: residual={el.residual_l2:.1e} lambda rel={rel:.1e}")
    assert res.converged
    assert el.residual_l2 <= 1e-6
    assert rel <= 1e-8


@pytest.mark.criterion(3, "polarization identities and energy non-increase")
def test_c03_polarization_suite(note):
    t0 = time.perf_counter()
    grid = build_ball_grid(2, 8, 16)
    halfspaces = compatible_halfspaces(grid)
    rng = np.random.default_rng(2024)
    worst = 0.0
    checks = 0
    for k in range(200):
        p = 2.0 + 6.0 * rng.random()
        u = project_zero_average(Field(grid, rng.standard_normal(grid.n_nodes)))
        for H in halfspaces:
            rep = polarization_identities(u, H, p)
            worst = max(worst, rep.delta_integral, rep.delta_signed_power, rep.delta_pnorm)
            assert rep.energy_after <= rep.energy_before * (1 + 1e-12)
            uh = polarize(u, H)
            assert np.array_equal(polarize(uh, H).values, uh.values)
            sigma = reflection_permutation(grid, H)
            assert np.array_equal(reflect(reflect(u, sigma), sigma).values, u.values)
            checks += 1
    elapsed = time.perf_counter() - t0
    note(3, f"{checks} field/half-space pairs, worst identity defect {worst:.1e}, time={elapsed:.1f}s")
    assert worst <= 1e-12
    assert elapsed <= 30


@pytest.mark.criterion(4, "foliated Schwarz symmetry of disc minimizers")
@pytest.mark.parametrize("p", [2.5, 3.0, 4.0])
def test_c04_foliated_schwarz(p, note):
    res = disc_min(p)
    bound = 10 * res.spec.tol_residual
    fs = foliated_schwarz_defect(res.u)
    tm = theta_monotonicity(res.u)
    note(4, f"p={p}: schwarz defect={fs:.1e} theta violation={tm:.1e}")
    assert res.converged
    assert fs <= bound
    assert tm <= bound


@pytest.mark.criterion(5, "axial positivity and nodal counts")
@pytest.mark.parametrize("p", [2.5, 3.0, 4.0])
def test_c05_axial_and_nodal(p, note):
    u = disc_min(p).u
    ax = axial_positivity(u)
    n_u = nodal_count(u)
    n_tau = nodal_count(cartesian_partials(u)[1])
    note(5, f"p={p}: axial min={ax:.3e} nodal(u)={n_u} nodal(d_tau u)={n_tau}")
    assert ax > 0
    assert n_u == 2
    assert n_tau == 4


@pytest.mark.criterion(6, "antisymmetry near p = 2")
def test_c06_antisymmetry_near_two(note):
    ps = [2.4, 2.2, 2.1, 2.05]
    runs = [disc_min(p) for p in ps]
    defects = [antisymmetry_defect(r.u) for r in runs]
    note(6, "defects " + ", ".join(f"p={p}: {d:.2e}" for p, d in zip(ps, defects)))
    note(6, f"|mu| at p=2.05: {abs(runs[-1].mu_p):.1e}")
    assert all(r.converged for r in runs)
    assert defects[-1] <= 1e-3
    assert abs(runs[-1].mu_p) <= 1e-6
    assert all(a > b for a, b in zip(defects, defects[1:]))


@pytest.mark.criterion(7, "antisymmetry breaking on the disc")
def test_c07_break(note):
    spec, res = break_search()
    note(7, f"p* = {res.p_star:.4f} (bracket {res.bracket[0]:.4f}, {res.bracket[1]:.4f}) on 48x48")
    assert math.isfinite(res.p_star) and 2 < res.p_star <= 64
    for row in res.table:
        assert row["Lambda"] <= row["Lambda_antisym"] * (1 + 1e-9)
        if row["p"] >= res.p_star:
            assert row["Lambda"] < row["Lambda_antisym"] - res.gap_tol
    lams = [disc_anti(p).Lambda for p in (4.0, 8.0, 16.0, 32.0)]
    note(7, "Lambda' at p=4,8,16,32: " + ", ".join(f"{x:.4f}" for x in lams))
    assert all(a > b > 0 for a, b in zip(lams, lams[1:]))
    row = antisymmetry_gap(spec, 8.0, n_random=1)
    assert row["Lambda"] < row["Lambda_antisym"] - res.gap_tol


@pytest.mark.criterion(8, "critical exponent below the boundary-bubble bound")
def test_c08_critical(note):
    bound = critical_bound(3)
    q = {eps: instanton_quotient(InstantonSpec(N=3, eps=eps)) for eps in (0.05, 0.02, 0.01)}
    deficit = {eps: (bound - v) / bound for eps, v in q.items()}
    res = minimize(ProblemSpec(domain="ball", N=3, M_r=64, M_theta=64, p=6.0))
    note(8, f"bound={bound:.6f} solver Lambda_6={res.Lambda:.6f} flags={res.flags}")
    note(8, "deficits " + ", ".join(f"eps={e}: {d:.4f}" for e, d in deficit.items()))
    assert q[0.02] < bound
    assert res.converged and "concentration" not in res.flags
    assert res.Lambda < bound
    assert deficit[0.01] > deficit[0.05]


@pytest.mark.criterion(9, "one-dimensional oddness crossover")
def test_c09_interval(note):
    t0 = time.perf_counter()
    odd = {p: interval_extremal(p).oddness_defect for p in (3.0, 5.0, 8.0, 10.0)}
    p_cross, _ = interval_oddness_threshold(p_lo=5.5, p_hi=6.5)
    elapsed = time.perf_counter() - t0
    note(9, "oddness " + ", ".join(f"p={p}: {d:.1e}" for p, d in odd.items()))
    note(9, f"crossover at p={p_cross:.3f}, time={elapsed:.1f}s")
    assert odd[3.0] <= 1e-3 and odd[5.0] <= 1e-3
    assert odd[8.0] > 0.05 and odd[10.0] > 0.05
    assert 5.5 <= p_cross <= 6.5
    assert elapsed <= 20


@pytest.mark.criterion(10, "second variation at minimizers and at a radial saddle")
def test_c10_second_variation(note):
    probes = []
    for p in (2.0, 2.5, 3.0, 4.0, 2.4, 2.2, 2.1, 2.05):
        res = disc_min(p)
        if res.converged:
            probes.append((f"full p={p}", min_hessian_on_tangent(res.u, p).min_rayleigh))
    for p in (4.0, 8.0, 16.0, 32.0):
        res = disc_anti(p)
        if res.converged:
            probes.append((f"antisym p={p}", min_hessian_on_tangent(res.u, p, antisymmetric=True).min_rayleigh))
    worst = min(probes, key=lambda t: t[1])
    note(10, f"{len(probes)} minimizers, smallest Hessian {worst[1]:.2e} ({worst[0]})")
    assert len(probes) == 12
    assert worst[1] >= HESSIAN_FLOOR
    radial = minimize(ProblemSpec(p=2.0, subspace="radial", **DISC))
    h = min_hessian_on_tangent(radial.u, 2.0).min_rayleigh
    note(10, f"radial critical point: Hessian {h:.3f}")
    assert h < 0


@pytest.mark.criterion(11, "separability ordering")
def test_c11_rank1(note):
    d2 = rank1_defect(disc_min(2.0).u)
    d4 = rank1_defect(disc_anti(4.0).u)
    note(11, f"rank-1 defect p=2: {d2:.1e}, antisymmetric p=4: {d4:.2e}")
    assert d2 <= 1e-6
    assert d4 >= 1e-3
    assert d2 < d4


@pytest.mark.criterion(12, "determinism of records")
def test_c12_determinism(tmp_path, note):
    spec = ProblemSpec(p=3.0, init="random", seed=7, domain="disc", M_r=32, M_theta=32)
    a = json.dumps(minimize(spec).to_dict(), sort_keys=True)
    b = json.dumps(minimize(spec).to_dict(), sort_keys=True)
    assert a == b
    argv = ["solve", "--p", "3", "--mr", "32", "--mtheta", "32", "--seed", "7"]
    for d in ("x", "y"):
        assert main([*argv, "--out", str(tmp_path / d)]) == 0
    for name in ("result.json", "field.csv", "report.json"):
        assert (tmp_path / "x" / name).read_bytes() == (tmp_path / "y" / name).read_bytes()
    note(12, "in-process records and CLI outputs byte-identical")

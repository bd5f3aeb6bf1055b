import math

import numpy as np
import pytest

from capcmk import (
    CapField,
    CapGrid,
    CapParams,
    ContinuationStall,
    NewtonFailure,
    Schedule,
    ell_field,
    homotopy_rhs,
    homotopy_values,
    jacobian_fd_error,
    linearize,
    newton_solve,
    phi_q,
    random_capillary_field,
    residual,
    run_continuation,
    solve_path,
    structural_hypothesis_check,
)
from conftest import THETA, manufactured_phi, manufactured_reference


def positive_even_phi(grid, seed=7):
    bb, pp = np.meshgrid(grid.beta_all, grid.phi, indexing="ij")
    vals = 1.0 + 0.2 * (1.0 - np.cos(bb)) + 0.04 * np.cos(2.0 * pp) * np.sin(bb) ** 2
    return CapField(grid, vals, even=False).project_even()


def test_phi_q_endpoints(params_k1, grid_16):
    phi = positive_even_phi(grid_16)
    at_p = phi_q(phi, params_k1.p, params_k1)
    assert np.array_equal(at_p.values, phi.values)
    at_1 = phi_q(phi, 1.0, params_k1)
    e = params_k1.k / (params_k1.p + params_k1.k - 1.0)
    assert np.allclose(at_1.values, phi.values**e, rtol=0.0, atol=0.0)


def test_homotopy_endpoints_are_exact(params_k1, grid_16):
    phi = positive_even_phi(grid_16)
    q0, h0 = homotopy_rhs(0.0, phi, params_k1)
    assert q0 == 1.0
    assert np.all(h0.values == 1.0)
    q1, h1 = homotopy_rhs(1.0, phi, params_k1)
    assert q1 == params_k1.p
    assert np.array_equal(h1.values, phi.values)


def test_homotopy_branches_meet_at_one_half(params_k1, grid_16):
    phi = positive_even_phi(grid_16)
    q_lo, h_lo = homotopy_rhs(0.5, phi, params_k1)
    assert q_lo == 1.0
    # the t > 1/2 branch at q = 1 is phi^{k/(p+k-1)}
    h_hi = phi_q(phi, 1.0, params_k1)
    assert np.max(np.abs(h_lo.values - h_hi.values)) < 1e-14


def test_homotopy_q_stays_in_range(params_k1, grid_16):
    phi = positive_even_phi(grid_16)
    for t in np.linspace(0.0, 1.0, 21):
        q, _ = homotopy_rhs(float(t), phi, params_k1)
        assert 1.0 <= q <= params_k1.p


def test_homotopy_rejects_bad_inputs(params_k1):
    phi = np.full(4, 2.0)
    with pytest.raises(ValueError):
        homotopy_values(-0.1, phi, params_k1)
    with pytest.raises(ValueError):
        homotopy_values(1.1, phi, params_k1)
    with pytest.raises(ValueError):
        homotopy_values(0.3, np.array([1.0, 0.0]), params_k1)


def test_residual_vanishes_on_manufactured_solution_to_h2(params_k1):
    sup = {}
    for nbeta in (16, 32):
        g = CapGrid(nbeta, 2 * nbeta, THETA)
        phi = manufactured_phi(g, params_k1, r=1.3)
        ref = manufactured_reference(g, params_k1, r=1.3)
        fint, gbd = residual(ref, params_k1.p, phi, params_k1)
        sup[nbeta] = max(float(np.max(np.abs(fint))), float(np.max(np.abs(gbd))))
    assert sup[16] < 1e-3
    assert sup[16] / sup[32] > 3.5


def test_newton_converges_at_the_constant_problem(params_k1, grid_16):
    ones = CapField(grid_16, np.ones((17, 32)), even=True)
    start = params_k1.cnk ** (-1.0) * ell_field(grid_16)
    s, info = newton_solve(start, 1.0, ones, params_k1, Schedule())
    assert info["res_norm"] <= 1e-9
    assert info["lam1min"] > 0.0
    assert s.is_even(tol=0.0)
    assert np.min(s.values) > 0.0


def test_newton_failure_outside_the_cone(params_k1, grid_16):
    ones = CapField(grid_16, np.ones((17, 32)), even=True)
    rough = CapField(
        grid_16,
        1.0 + 0.5 * np.cos(4.0 * grid_16.phi)[None, :] * np.ones((17, 32)),
        even=True,
    )
    with pytest.raises(NewtonFailure, match="cone"):
        newton_solve(rough, 1.0, ones, params_k1, Schedule())


def test_newton_failure_on_exhausted_budget(params_k1, grid_16):
    ones = CapField(grid_16, np.ones((17, 32)), even=True)
    start = 5.0 * ell_field(grid_16)
    with pytest.raises(NewtonFailure, match="0 iterations"):
        newton_solve(start, 1.0, ones, params_k1, Schedule(newton_max=0))


def test_translation_fields_are_a_discrete_near_kernel(params_k1):
    """At q = 1 the linearization annihilates the odd fields <a, zeta>.

    The analytic kernel shows up as |J v| -> 0 under refinement while a
    generic even field of the same size keeps |J w| = O(1); this is the
    singularity the even-subspace restriction removes.
    """
    norms = {}
    for nbeta in (16, 32):
        g = CapGrid(nbeta, 2 * nbeta, THETA)
        bb, pp = np.meshgrid(g.beta_all, g.phi, indexing="ij")
        v = CapField(g, np.sin(bb) * np.cos(pp))
        w = CapField(g, np.sin(bb) ** 2 * np.cos(2.0 * pp), even=True)
        ones = CapField(g, np.ones_like(bb), even=True)
        s0 = params_k1.cnk ** (-1.0) * ell_field(g)
        jac = linearize(s0, 1.0, ones, params_k1)
        norms[nbeta] = (
            float(np.max(np.abs(jac @ v.flat))),
            float(np.max(np.abs(jac @ w.flat))),
        )
    assert norms[16][0] / norms[32][0] > 1.7
    assert norms[32][0] < 0.05 * norms[32][1]


def test_jacobian_matches_finite_differences(params_k1, grid_16):
    rng = np.random.default_rng(11)
    for _ in range(3):
        s = random_capillary_field(grid_16, rng)
        q = 1.0 + (params_k1.p - 1.0) * rng.uniform()
        rhs = phi_q(positive_even_phi(grid_16), q, params_k1)
        v = CapField(grid_16, rng.standard_normal((17, 32)))
        assert jacobian_fd_error(s, q, rhs, params_k1, v) < 1e-5


def test_continuation_hits_the_branch_point_exactly(params_k1, grid_16):
    phi = positive_even_phi(grid_16)
    s, report = solve_path(phi, params_k1)
    assert report.converged
    assert 0.5 in report.t_steps
    assert report.t_steps[0] == 0.0 and report.t_steps[-1] == 1.0


def test_continuation_stall_carries_the_partial_report():
    calls = {"n": 0}

    def newton_fn(s, q, rhs):
        calls["n"] += 1
        if calls["n"] == 1:
            return s, {"iters": 1, "res_norm": 0.0, "robin_norm": 0.0,
                       "lam1min": 1.0, "smin": 1.0, "smax": 1.0}
        raise NewtonFailure("forced")

    with pytest.raises(ContinuationStall) as err:
        run_continuation(newton_fn, lambda t: (1.0, None), object(),
                         Schedule(dt0=0.1, dt_min=0.05))
    assert err.value.t == 0.0
    assert err.value.report.t_steps == [0.0]
    assert not err.value.report.converged


def test_solve_path_validates_inputs(params_k1, grid_16):
    phi = positive_even_phi(grid_16)
    with pytest.raises(ValueError):
        solve_path(phi, CapParams(n=3, k=1, p=1.5, theta=THETA))
    neg = CapField(grid_16, phi.values - 2.0, even=True)
    with pytest.raises(ValueError):
        solve_path(neg, params_k1)
    bb, pp = np.meshgrid(grid_16.beta_all, grid_16.phi, indexing="ij")
    odd = CapField(grid_16, 1.0 + 0.3 * np.cos(pp) * np.sin(bb))
    with pytest.raises(ValueError):
        solve_path(odd, params_k1)


def test_solve_path_report_invariants(solved_32, params_k1):
    s, report, phi = solved_32
    assert report.converged
    assert report.residual_norms[-1] <= Schedule().tol_solve
    assert report.robin_norms[-1] <= Schedule().tol_solve
    assert min(report.lam1min_trace) > 0.0
    assert min(report.smin_trace) > 0.0
    assert s.is_even(tol=0.0)
    fint, gbd = residual(s, params_k1.p, phi, params_k1)
    assert float(np.max(np.abs(fint))) <= Schedule().tol_solve
    assert float(np.max(np.abs(gbd))) <= Schedule().tol_solve


def test_solve_report_serialization_omits_wall_time(solved_32):
    _, report, _ = solved_32
    d = report.to_dict()
    assert "wall_time" not in d
    assert d["converged"] is True
    timed = report.to_dict(include_timing=True)
    assert timed["wall_time"] > 0.0


def test_manufactured_solve_is_second_order(params_k1):
    errs = {}
    for nbeta in (16, 32):
        g = CapGrid(nbeta, 2 * nbeta, THETA)
        phi = manufactured_phi(g, params_k1, r=1.3)
        s, _ = solve_path(phi, params_k1)
        ref = manufactured_reference(g, params_k1, r=1.3)
        errs[nbeta] = float(np.max(np.abs(s.values - ref.values)))
    assert errs[32] < 2.5e-4
    assert errs[16] / errs[32] > 3.5


def test_structural_hypothesis_check_on_admissible_data(params_k1, grid_16):
    ones = CapField(grid_16, np.ones((17, 32)), even=True)
    rec = structural_hypothesis_check(ones, params_k1)
    assert rec["pass"] and rec["interior_pass"] and rec["boundary_pass"]
    assert rec["interior_min_eigenvalue"] > 0.0

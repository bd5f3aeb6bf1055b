"""Release gate: one test per shipping criterion, tolerances pinned.

Each test is a single pass/fail line under pytest -v.  The criteria are
end-to-end: manufactured-solution recovery with a convergence order, exact
homotopy endpoints, agreement with the independent 1-D oracle, the closed-form
identity battery, the a priori estimate audit over the default parameter
sweep, uniqueness under perturbed starts, Jacobian consistency, and the
negative controls on the command line.
"""

import json
import math
import time

import numpy as np

from capcmk import (
    CapField,
    CapGrid,
    CapParams,
    af_inequality_check,
    boundary_tau_identity_residual,
    cross_check_gap,
    ell_field,
    homotopy_rhs,
    jacobian_fd_error,
    load_field,
    make_capillary_test_function,
    mixed_volume,
    phi_q,
    random_capillary_field,
    random_neumann_factor,
    save_field,
    solve_path,
    solve_rotsym,
    steiner_sigma_check,
    tau_sharp,
    mixed_volume_repeated,
)
from capcmk.cli import main as cli_main

from conftest import manufactured_phi, manufactured_reference


def test_manufactured_cap_recovery_is_second_order():
    # exact solution r ell with r = 1.3; sup error <= 5e-4 on the fine grid
    # and a 32 -> 64 error ratio >= 3.5; both solves inside 60 s
    theta = math.pi / 3
    params = CapParams(n=2, k=1, p=1.5, theta=theta)
    tick = time.perf_counter()
    errs = {}
    for nbeta in (32, 64):
        grid = CapGrid(nbeta, 2 * nbeta, theta)
        phi = manufactured_phi(grid, params, r=1.3)
        s, report = solve_path(phi, params)
        assert report.converged
        ref = manufactured_reference(grid, params, r=1.3)
        errs[nbeta] = float(np.max(np.abs(s.values - ref.values)))
    elapsed = time.perf_counter() - tick
    assert errs[64] <= 5e-4
    assert errs[32] / errs[64] >= 3.5
    assert elapsed <= 60.0


def test_homotopy_endpoints_are_exact_and_branches_meet(grid_32, params_k1):
    vals = 1.0 + 0.4 * (1.0 - np.cos(grid_32.beta_all))[:, None] * np.ones(grid_32.nphi)
    phi = CapField(grid_32, vals, even=True)

    q0, h0 = homotopy_rhs(0.0, phi, params_k1)
    assert q0 == 1.0
    assert np.all(h0.values == 1.0)

    q1, h1 = homotopy_rhs(1.0, phi, params_k1)
    assert q1 == params_k1.p
    assert np.array_equal(h1.values, phi.values)

    # the interpolation branch at t = 1/2 against the exponent branch there
    qm, hm = homotopy_rhs(0.5, phi, params_k1)
    assert qm == 1.0
    upper = phi_q(phi, 1.0, params_k1)
    assert float(np.max(np.abs(hm.values - upper.values))) <= 1e-14


def test_solver_agrees_with_the_rotational_oracle():
    theta = math.pi / 4
    params = CapParams(n=2, k=1, p=1.5, theta=theta)
    tick = time.perf_counter()
    grid = CapGrid(64, 128, theta)
    vals = 1.0 + 0.3 * (1.0 - np.cos(grid.beta_all))
    phi = CapField(grid, np.broadcast_to(vals[:, None], (65, 128)).copy(), even=True)
    s2d, report = solve_path(phi, params)
    assert report.converged
    profile, oracle_report = solve_rotsym(
        lambda b: 1.0 + 0.3 * (1.0 - np.cos(b)), params, n_cells=512
    )
    assert oracle_report.converged
    elapsed = time.perf_counter() - tick
    assert cross_check_gap(profile, s2d) <= 1e-3
    assert elapsed <= 120.0


def test_closed_form_identity_suite():
    theta = math.pi / 3
    params = CapParams(n=2, k=1, p=1.5, theta=theta)
    params_k2 = CapParams(n=2, k=2, p=2.0, theta=theta)
    tick = time.perf_counter()

    # model endomorphism is the identity, second order in the grid
    for nbeta, tol in ((64, 1e-3), (128, 2.6e-4)):
        g = CapGrid(nbeta, 2 * nbeta, theta)
        tau = tau_sharp(ell_field(g))
        dev = max(
            float(np.max(np.abs(tau.a11 - 1.0))),
            float(np.max(np.abs(tau.a12))),
            float(np.max(np.abs(tau.a22 - 1.0))),
        )
        assert dev <= tol

    # rim identity residual decreasing under refinement, 20 seeded fields
    coarse, fine = CapGrid(32, 64, theta), CapGrid(64, 128, theta)
    for seed in range(20):
        rng = np.random.default_rng(seed)
        v = random_neumann_factor(theta, rng)
        rc = boundary_tau_identity_residual(make_capillary_test_function(coarse, v))
        rf = boundary_tau_identity_residual(make_capillary_test_function(fine, v))
        assert rf < rc

    # parallel-shift binomial expansion, relative error <= 1e-9
    for seed in range(5):
        rng = np.random.default_rng(seed)
        s = random_capillary_field(fine, rng)
        for t in (0.1, 0.5, 1.0):
            assert steiner_sigma_check(s, t, params)["pass"]

    # mixed-volume slot permutation and the repeated-argument form, 20 triples
    for seed in range(20):
        rng = np.random.default_rng(seed)
        f0 = random_capillary_field(coarse, rng)
        f1 = random_capillary_field(coarse, rng)
        f2 = random_capillary_field(coarse, rng)
        a = mixed_volume([f0, f1, f2], params_k2)
        b = mixed_volume([f0, f2, f1], params_k2)
        assert abs(a - b) <= 1e-8 * max(1.0, abs(a))
        va = mixed_volume([f0, f1, f1], params_k2)
        vb = mixed_volume_repeated(f0, f1, params_k2)
        assert abs(va - vb) <= 1e-8 * max(1.0, abs(va))
        va = mixed_volume([f0, f1], params)
        vb = mixed_volume_repeated(f0, f1, params)
        assert abs(va - vb) <= 1e-8 * max(1.0, abs(va))

    # quadratic mixed-volume inequality on 100 seeded pairs, tight on multiples
    for seed in range(100):
        rng = np.random.default_rng(seed)
        s1 = random_capillary_field(coarse, rng)
        s2 = random_capillary_field(coarse, rng)
        assert af_inequality_check(s1, s2, params)["rel_margin"] >= -1e-8
    rng = np.random.default_rng(0)
    s1 = random_capillary_field(coarse, rng)
    assert abs(af_inequality_check(s1, 0.6 * s1, params)["rel_margin"]) <= 1e-10

    assert time.perf_counter() - tick <= 120.0


def test_default_sweep_satisfies_the_estimates(tmp_path):
    cfg = tmp_path / "sweep.cfg"
    cfg.write_text("n = 2\nk = 1\np = 1.5\ntheta = pi/4\n")
    out = tmp_path / "out"
    assert cli_main(["sweep", "--config", str(cfg), "--out", str(out), "--quiet"]) == 0
    summary = json.loads((out / "sweep_summary.json").read_text())
    assert summary["all_ok"]
    assert len(summary["members"]) == 9
    for member in summary["members"]:
        assert member["exit"] == 0
        assert member["max_bound_margin"] > 0.0
        assert member["slope_pass"]
        assert member["path_lam1min"] > 0.0
        assert member["height"] > 0.0
    assert summary["min_height"] is not None and summary["min_height"] > 0.0
    assert summary["min_path_lam1min"] > 0.0


def test_perturbed_initializations_converge_to_one_solution():
    theta = math.pi / 4
    params = CapParams(n=2, k=1, p=1.5, theta=theta)
    grid = CapGrid(32, 64, theta)
    vals = 1.0 + 0.3 * (1.0 - np.cos(grid.beta_all))
    phi = CapField(grid, np.broadcast_to(vals[:, None], (33, 64)).copy(), even=True)
    base = params.cnk ** (-1.0 / params.k) * ell_field(grid)
    s_lo, rep_lo = solve_path(phi, params, s0=0.9 * base)
    s_hi, rep_hi = solve_path(phi, params, s0=1.1 * base)
    assert rep_lo.converged and rep_hi.converged
    assert float(np.max(np.abs(s_lo.values - s_hi.values))) <= 1e-7


def test_assembled_jacobian_matches_finite_differences(grid_32, params_k1):
    q = 1.0 + (params_k1.p - 1.0)
    shape = (grid_32.nbeta + 1, grid_32.nphi)
    rhs = phi_q(CapField(grid_32, np.full(shape, 1.2), even=True), q, params_k1)
    worst = 0.0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        s = random_capillary_field(grid_32, rng)
        v = CapField(grid_32, rng.standard_normal(shape))
        worst = max(worst, jacobian_fd_error(s, q, rhs, params_k1, v))
    assert worst <= 1e-5


def test_negative_controls_are_rejected(tmp_path):
    good = ("n = 2\nk = 1\np = 1.5\ntheta = pi/3\n"
            "grid.nbeta = 16\ngrid.nphi = 32\n"
            "phi.kind = cap_manufactured\nphi.r = 1.3\n")

    # parameter ranges: each violating config exits 1
    violations = [
        good.replace("p = 1.5", "p = 3.0"),        # p outside (1, k+1)
        good.replace("p = 1.5", "p = 1.0"),        # endpoint excluded
        good.replace("theta = pi/3", "theta = pi"),  # contact angle out of range
        good.replace("k = 1", "k = 3"),            # k exceeds n
        good.replace("n = 2", "n = 1"),            # dimension too small
    ]
    for i, text in enumerate(violations):
        bad = tmp_path / f"bad{i}.cfg"
        bad.write_text(text)
        assert cli_main(["solve", "--config", str(bad),
                         "--out", str(tmp_path / "o"), "--quiet"]) == 1

    # corrupted stored solution: one flipped value exits 3 under verify
    cfg = tmp_path / "good.cfg"
    cfg.write_text(good)
    out = tmp_path / "out"
    assert cli_main(["solve", "--config", str(cfg), "--out", str(out), "--quiet"]) == 0
    assert cli_main(["verify", "--config", str(cfg),
                     "--solution", str(out / "solution.csv"),
                     "--out", str(tmp_path / "v0"), "--quiet"]) == 0
    s = load_field(out / "solution.csv")
    s.values[8, 3] = -s.values[8, 3]
    mutated = tmp_path / "mutated.csv"
    save_field(s, mutated)
    assert cli_main(["verify", "--config", str(cfg),
                     "--solution", str(mutated),
                     "--out", str(tmp_path / "v1"), "--quiet"]) == 3

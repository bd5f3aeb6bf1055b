"""Homotopy-continuation Newton solver for sigma_k(tau_sharp[s]) = s^{q-1} phi_q.

The path in t runs the data from the exactly solvable constant problem to the
target pair (p, phi):

    t <= 1/2 : q = 1,  H(t) = ((1-2t) + 2t phi^{-1/(p+k-1)})^{-k}
    t >= 1/2 : q(t) = 1 + (p-1)(2t-1),  H(t) = phi^{(q+k-1)/(p+k-1)}

so H(0) = 1, H(1) = phi, and both branches give phi^{k/(p+k-1)} at t = 1/2.
At t = 0 the solution is the scaled model function C(n,k)^{-1/k} ell (up to
the O(h^2) discrete correction that the first Newton solve supplies).

Newton systems pair the interior rows sigma_k^{ij}(tau v)_{ij} - (q-1)s^{q-2} rhs v
with the Robin rows d_beta v - cot(theta) v, and are solved restricted to the
even subspace: at q = 1 the odd horizontal-translation fields <a, zeta> are an
exact kernel of the pair (they are capillary and tau[<a, zeta>] = 0), so the
full-space matrix is singular by design and the even restriction is what makes
the problem well-posed, matching the even solution class.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .fields import CapField, CapGrid, robin_residual, tau_sharp
from .geometry import CapParams, ell_field
from .symfunc import SymEndo, sigma_k, sigma_k_grad

__all__ = [
    "Schedule",
    "SolveReport",
    "ContinuationStall",
    "NewtonFailure",
    "phi_q",
    "homotopy_rhs",
    "residual",
    "linearize",
    "newton_solve",
    "solve_path",
    "structural_hypothesis_check",
    "jacobian_fd_error",
    "run_continuation",
]


@dataclass
class Schedule:
    """Continuation and Newton controls with the pinned default tolerances."""

    dt0: float = 0.25
    dt_min: float = 1e-4
    dt_max: float = 0.25
    grow: float = 1.6
    shrink: float = 0.5
    fast_iters: int = 5
    newton_max: int = 30
    backtrack_max: int = 40
    tol_solve: float = 1e-9
    delta_cone: float = 1e-10


@dataclass
class SolveReport:
    """Trace of one continuation run; everything needed to audit the path."""

    t_steps: list = field(default_factory=list)
    newton_iters: list = field(default_factory=list)
    residual_norms: list = field(default_factory=list)
    robin_norms: list = field(default_factory=list)
    lam1min_trace: list = field(default_factory=list)
    smin_trace: list = field(default_factory=list)
    smax_trace: list = field(default_factory=list)
    converged: bool = False
    stalled_at: float | None = None
    structural: dict | None = None
    wall_time: float = 0.0

    def record(self, t, info):
        self.t_steps.append(float(t))
        self.newton_iters.append(int(info["iters"]))
        self.residual_norms.append(float(info["res_norm"]))
        self.robin_norms.append(float(info["robin_norm"]))
        self.lam1min_trace.append(float(info["lam1min"]))
        self.smin_trace.append(float(info["smin"]))
        self.smax_trace.append(float(info["smax"]))

    def to_dict(self, include_timing=False):
        """JSON payload; wall time is volatile and excluded by default so that
        identical inputs produce bit-identical report files."""
        d = {
            "t_steps": self.t_steps,
            "newton_iters": self.newton_iters,
            "residual_norms": self.residual_norms,
            "robin_norms": self.robin_norms,
            "lam1min_trace": self.lam1min_trace,
            "smin_trace": self.smin_trace,
            "smax_trace": self.smax_trace,
            "converged": self.converged,
            "stalled_at": self.stalled_at,
            "structural": self.structural,
        }
        if include_timing:
            d["wall_time"] = self.wall_time
        return d


class NewtonFailure(RuntimeError):
    """A Newton corrector did not converge (line search or iteration budget)."""


class ContinuationStall(RuntimeError):
    """dt fell below dt_min; carries the partial report for diagnostics."""

    def __init__(self, t, dt, report):
        self.t = t
        self.dt = dt
        self.report = report
        super().__init__(
            f"continuation stalled at t = {t:.6f} (dt = {dt:.2e} < dt_min); "
            f"last lam1min = {report.lam1min_trace[-1] if report.lam1min_trace else None}"
        )


# -- homotopy data ---------------------------------------------------------------


def _phi_q_values(phi, q, params):
    e = (q + params.k - 1.0) / (params.p + params.k - 1.0)
    if np.min(phi) <= 0.0:
        raise ValueError("phi must be strictly positive")
    return phi.copy() if e == 1.0 else phi**e


def phi_q(phi: CapField, q: float, params: CapParams) -> CapField:
    """phi_q = phi^{(q+k-1)/(p+k-1)}; phi_1 = phi^{k/(p+k-1)}, phi_p = phi."""
    return CapField(phi.grid, _phi_q_values(phi.values, q, params), even=phi.even)


def homotopy_values(t, phi, params):
    """Array-level homotopy data (q(t), H(t, .)) for any discretization."""
    p, k = params.p, params.k
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"homotopy parameter t must lie in [0, 1], got {t}")
    if np.min(phi) <= 0.0:
        raise ValueError("phi must be strictly positive")
    if t <= 0.5:
        base = (1.0 - 2.0 * t) + 2.0 * t * phi ** (-1.0 / (p + k - 1.0))
        return 1.0, base ** (-float(k))
    q = 1.0 + (p - 1.0) * (2.0 * t - 1.0)
    return q, _phi_q_values(phi, q, params)


def homotopy_rhs(t: float, phi: CapField, params: CapParams):
    """(q(t), H(t, .)); H(0) = 1 and H(1) = phi exactly, branches meet at 1/2."""
    q, vals = homotopy_values(t, phi.values, params)
    return q, CapField(phi.grid, vals, even=phi.even)


# -- residual and linearization ----------------------------------------------------


def _endo(tau):
    return SymEndo(tau.a11, tau.a12, tau.a22)


def residual(s: CapField, q: float, rhs: CapField, params: CapParams):
    """Interior residual sigma_k(tau_sharp[s]) - s^{q-1} rhs and Robin residual."""
    tau = tau_sharp(s)
    sk = sigma_k(_endo(tau), params.k)
    fint = sk - s.interior ** (q - 1.0) * rhs.interior
    return fint, robin_residual(s)


def linearize(s: CapField, q: float, rhs: CapField, params: CapParams, tau=None):
    """Stacked sparse Jacobian [interior rows; Robin rows] of the residual pair.

    Interior: sigma_k^{ij}(tau_sharp[s]) (tau_sharp[v])_{ij} - (q-1) s^{q-2} rhs v,
    assembled from the same operators that evaluate the residual, so the matrix
    is the exact derivative of the discrete map.
    """
    g = s.grid
    ops = g.ops()
    if tau is None:
        tau = tau_sharp(s)
    grad = sigma_k_grad(_endo(tau), params.k)
    jint = (
        sp.diags(grad.a11.ravel()) @ ops["a11"]
        + sp.diags(2.0 * grad.a12.ravel()) @ ops["a12"]
        + sp.diags(grad.a22.ravel()) @ ops["a22"]
    )
    if q != 1.0:
        zer = (q - 1.0) * s.interior ** (q - 2.0) * rhs.interior
        jint = jint - sp.diags(zer.ravel()) @ ops["pint"]
    return sp.vstack([jint, ops["robin"]], format="csr")


def _even_solve(grid: CapGrid, jac, stacked_res):
    """Solve J delta = -res restricted to the even subspace, return full delta."""
    ops = grid.ops()
    rows = ops["even_rows"]
    jh = (jac[rows] @ ops["even_p"]).tocsc()
    dh = spsolve(jh, -stacked_res[rows])
    return ops["even_p"] @ dh


def newton_solve(s0: CapField, q: float, rhs: CapField, params: CapParams, sched: Schedule):
    """Damped Newton in the even subspace with positivity and cone guards.

    Returns (s, info); raises NewtonFailure if the line search or the iteration
    budget gives out.  Accepted iterates always satisfy min s > 0 and
    lam1min > delta_cone.
    """
    g = s0.grid
    s = s0 if s0.even else s0.project_even()
    fint, gbd = residual(s, q, rhs, params)
    rn = max(float(np.max(np.abs(fint))), float(np.max(np.abs(gbd))))
    history = [rn]
    tau = tau_sharp(s)

    def info(iters):
        return {
            "iters": iters,
            "res_norm": float(np.max(np.abs(fint))),
            "robin_norm": float(np.max(np.abs(gbd))),
            "lam1min": tau.lam1min,
            "smin": float(np.min(s.values)),
            "smax": float(np.max(s.values)),
            "history": history,
        }

    for it in range(sched.newton_max):
        if rn <= sched.tol_solve:
            return s, info(it)
        if tau.lam1min <= sched.delta_cone:
            raise NewtonFailure(f"iterate left the cone: lam1min = {tau.lam1min:.3e}")
        jac = linearize(s, q, rhs, params, tau=tau)
        delta = _even_solve(g, jac, np.concatenate([fint.ravel(), gbd]))
        step = delta.reshape(s.values.shape)

        alpha, accepted = 1.0, False
        for _ in range(sched.backtrack_max):
            s_try = CapField(g, s.values + alpha * step, even=True)
            if np.min(s_try.values) > 0.0:
                tau_try = tau_sharp(s_try)
                if tau_try.lam1min > sched.delta_cone:
                    fint_try, gbd_try = residual(s_try, q, rhs, params)
                    rn_try = max(float(np.max(np.abs(fint_try))), float(np.max(np.abs(gbd_try))))
                    if rn_try <= (1.0 - 1e-4 * alpha) * rn:
                        accepted = True
                        break
            alpha *= 0.5
        if not accepted:
            raise NewtonFailure(f"line search failed at Newton iteration {it} (res = {rn:.3e})")
        s, tau, fint, gbd, rn = s_try, tau_try, fint_try, gbd_try, rn_try
        history.append(rn)

    if rn <= sched.tol_solve:
        return s, info(sched.newton_max)
    raise NewtonFailure(f"no convergence in {sched.newton_max} iterations (res = {rn:.3e})")


# -- continuation driver -----------------------------------------------------------


def run_continuation(newton_fn, rhs_fn, s_init, sched: Schedule, t_end: float = 1.0):
    """Adaptive predictor-corrector walk of t from 0 to t_end.

    newton_fn(s, q, rhs) -> (s, info) raising NewtonFailure; rhs_fn(t) -> (q, rhs).
    The previous solution is the predictor; dt halves on failure and grows on
    fast correctors; the branch point t = 1/2 is always hit exactly.  Raises
    ContinuationStall when dt underflows dt_min.
    """
    report = SolveReport()
    tick = time.perf_counter()
    q, rhs = rhs_fn(0.0)
    s, info = newton_fn(s_init, q, rhs)
    report.record(0.0, info)

    t, dt = 0.0, sched.dt0
    while t < t_end:
        t_next = min(t + dt, t_end)
        if t < 0.5 < t_next and t_end > 0.5:
            t_next = 0.5
        q, rhs = rhs_fn(t_next)
        try:
            s_new, info = newton_fn(s, q, rhs)
        except NewtonFailure:
            dt *= sched.shrink
            if dt < sched.dt_min:
                report.wall_time = time.perf_counter() - tick
                report.stalled_at = t
                raise ContinuationStall(t, dt, report) from None
            continue
        s = s_new
        t = t_next
        report.record(t, info)
        if info["iters"] <= sched.fast_iters:
            dt = min(dt * sched.grow, sched.dt_max)
    report.converged = True
    report.wall_time = time.perf_counter() - tick
    return s, report


def solve_path(phi: CapField, params: CapParams, sched: Schedule | None = None,
               t_end: float = 1.0, s0: CapField | None = None):
    """Continuation solve of sigma_k(tau_sharp[s]) = s^{q-1} phi_q up to t_end.

    Starts at the scaled model function C(n,k)^{-1/k} ell; returns the solution
    field and the SolveReport (structural-hypothesis report included,
    informational only).  Raises ContinuationStall with the partial report on
    a stalled path.
    """
    if params.n != 2:
        raise ValueError("full-field solves are restricted to n = 2; use the rotsym oracle")
    sched = sched or Schedule()
    grid = phi.grid
    if np.min(phi.values) <= 0.0:
        raise ValueError("phi must be strictly positive")
    if not phi.is_even(tol=1e-12 * max(1.0, float(np.max(np.abs(phi.values))))):
        raise ValueError("phi must be even (invariant under phi -> phi + pi)")
    phi = phi if phi.even else phi.project_even()

    if s0 is None:
        s0 = params.cnk ** (-1.0 / params.k) * ell_field(grid)

    def newton_fn(s, q, rhs):
        return newton_solve(s, q, rhs, params, sched)

    def rhs_fn(t):
        return homotopy_rhs(t, phi, params)

    s, report = run_continuation(newton_fn, rhs_fn, s0, sched, t_end=t_end)
    report.structural = structural_hypothesis_check(phi, params)
    return s, report


# -- checks -------------------------------------------------------------------------


def structural_hypothesis_check(phi: CapField, params: CapParams) -> dict:
    """Discrete test of the sufficient structural hypotheses on phi.

    Interior: tau[phi^{-1/(p+k-1)}] >= 0 (min eigenvalue over interior rings);
    boundary: cot(theta) w - d_beta w >= 0 for w = phi^{-1/(p+k-1)}.
    Informational: the hypotheses are sufficient, not necessary.
    """
    g = phi.grid
    e = -1.0 / (params.p + params.k - 1.0)
    w = CapField(g, phi.values**e, even=phi.even)
    lam1 = tau_sharp(w).lam1min
    ops = g.ops()
    ct = math.cos(g.theta) / math.sin(g.theta)
    bmargin = float(np.min(ct * w.boundary - ops["dbd"] @ w.flat))
    return {
        "interior_min_eigenvalue": lam1,
        "interior_pass": bool(lam1 >= 0.0),
        "boundary_margin": bmargin,
        "boundary_pass": bool(bmargin >= 0.0),
        "pass": bool(lam1 >= 0.0 and bmargin >= 0.0),
    }


def jacobian_fd_error(s: CapField, q: float, rhs: CapField, params: CapParams,
                      v: CapField, eps: float = 1e-6) -> float:
    """Relative gap between the assembled Jacobian action and central differences."""
    jac = linearize(s, q, rhs, params)
    jv = jac @ v.flat
    fp, gp = residual(CapField(s.grid, s.values + eps * v.values), q, rhs, params)
    fm, gm = residual(CapField(s.grid, s.values - eps * v.values), q, rhs, params)
    fd = (np.concatenate([fp.ravel(), gp]) - np.concatenate([fm.ravel(), gm])) / (2.0 * eps)
    scale = max(1.0, float(np.max(np.abs(jv))))
    return float(np.max(np.abs(jv - fd))) / scale

"""Rotationally symmetric 1-D reduction: the independent oracle for the solver.

For rotationally symmetric s(beta) on the cap the endomorphism tau_sharp[s]
has the two-eigenvalue structure

    lam_r = s'' + s            (radial direction, multiplicity 1)
    lam_t = s' cot(beta) + s   (tangential directions, multiplicity n-1)

so for any dimension n

    sigma_j = C(n-1, j) lam_t^j + C(n-1, j-1) lam_r lam_t^{j-1}.

The reduction is a two-point boundary value problem on beta in [0, theta] with
the smooth-pole condition s'(0) = 0 (even extension through the pole; the
beta -> 0 limit of lam_t is s''(0) + s(0) by l'Hopital, and the discrete
lam_t - lam_r gap at the first ring vanishes under refinement) and the same
Robin row s'(theta) = cot(theta) s(theta) at the rim.  Discretization mirrors
the 2-D conventions: cell-centered rings plus a rim node, second order
throughout, 4-point nonuniform second derivative next to the rim.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .fields import fd_weights
from .geometry import CapParams, ell
from .solver import (
    NewtonFailure,
    Schedule,
    homotopy_values,
    run_continuation,
)

__all__ = [
    "RotGrid",
    "RotProfile",
    "sigma_rot",
    "rotsym_sigma_k",
    "solve_rotsym",
    "reconstruct_rot",
    "barrier_height_check",
    "cross_check_gap",
    "save_profile",
]


class RotGrid:
    """1-D cell-centered grid on [0, theta] plus the rim node."""

    def __init__(self, n_cells: int, theta: float):
        if n_cells < 8:
            raise ValueError(f"need at least 8 cells, got {n_cells}")
        if not (0.0 < theta < math.pi / 2):
            raise ValueError(f"theta must lie in (0, pi/2), got {theta!r}")
        self.n_cells = int(n_cells)
        self.theta = float(theta)
        self.dbeta = self.theta / self.n_cells
        self.beta_cells = (np.arange(self.n_cells) + 0.5) * self.dbeta
        self.beta_all = np.concatenate([self.beta_cells, [self.theta]])
        self._ops = None

    def __eq__(self, other):
        return (
            isinstance(other, RotGrid)
            and self.n_cells == other.n_cells
            and self.theta == other.theta
        )

    def __hash__(self):
        return hash((self.n_cells, self.theta))

    def ops(self):
        """Sparse d/dbeta, d2/dbeta2 on cells and the rim derivative row.

        The mirror closure s(-beta) = s(beta) (rotational symmetry plus the
        across-pole chart identity) feeds the first ring's central stencils.
        """
        if self._ops is not None:
            return self._ops
        n, db = self.n_cells, self.dbeta
        ntot = n + 1
        rows, cols, data = [], [], []

        def put(r, c, v):
            rows.append(r)
            cols.append(c)
            data.append(v)

        # d/dbeta: mirror makes the first ring (f1 - f0)/(2 db)
        put(0, 0, -0.5 / db)
        put(0, 1, 0.5 / db)
        for i in range(1, n - 1):
            put(i, i - 1, -0.5 / db)
            put(i, i + 1, 0.5 / db)
        w = fd_weights([-db, 0.0, 0.5 * db], 1)
        for c, wc in zip((n - 2, n - 1, n), w):
            put(n - 1, c, wc)
        d1 = sp.csr_matrix((data, (rows, cols)), shape=(n, ntot))
        rows, cols, data = [], [], []

        # d2/dbeta2: mirror makes the first ring (f1 - f0)/db^2
        put(0, 0, -1.0 / db**2)
        put(0, 1, 1.0 / db**2)
        for i in range(1, n - 1):
            put(i, i - 1, 1.0 / db**2)
            put(i, i, -2.0 / db**2)
            put(i, i + 1, 1.0 / db**2)
        w = fd_weights([-2.0 * db, -db, 0.0, 0.5 * db], 2)
        for c, wc in zip((n - 3, n - 2, n - 1, n), w):
            put(n - 1, c, wc)
        d2 = sp.csr_matrix((data, (rows, cols)), shape=(n, ntot))
        rows, cols, data = [], [], []

        w = fd_weights([-1.5 * db, -0.5 * db, 0.0], 1)
        for c, wc in zip((n - 2, n - 1, n), w):
            put(0, c, wc)
        dbd = sp.csr_matrix((data, (rows, cols)), shape=(1, ntot))

        pcells = sp.eye(n, ntot, format="csr")
        self._ops = {"d1": d1, "d2": d2, "dbd": dbd, "pcells": pcells}
        return self._ops


@dataclass(eq=False)
class RotProfile:
    """Radial profile s(beta) with its derived curvature-radius eigenvalues."""

    grid: RotGrid
    s: np.ndarray

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=float)
        if self.s.shape != (self.grid.n_cells + 1,):
            raise ValueError(f"profile shape {self.s.shape} != {(self.grid.n_cells + 1,)}")

    @property
    def lam_r(self) -> np.ndarray:
        ops = self.grid.ops()
        return ops["d2"] @ self.s + self.s[: self.grid.n_cells]

    @property
    def lam_t(self) -> np.ndarray:
        ops = self.grid.ops()
        b = self.grid.beta_cells
        return (ops["d1"] @ self.s) * (np.cos(b) / np.sin(b)) + self.s[: self.grid.n_cells]

    def s_rim(self) -> float:
        return float(self.s[-1])

    def ds_rim(self) -> float:
        return float((self.grid.ops()["dbd"] @ self.s)[0])

    def robin_residual(self) -> float:
        ct = math.cos(self.grid.theta) / math.sin(self.grid.theta)
        return self.ds_rim() - ct * self.s_rim()


def sigma_rot(lam_r, lam_t, n: int, j: int):
    """sigma_j of the spectrum (lam_r once, lam_t with multiplicity n-1)."""
    if j == 0:
        return np.ones_like(np.asarray(lam_t, dtype=float))
    lead = math.comb(n - 1, j) * np.asarray(lam_t, dtype=float) ** j
    mixed = math.comb(n - 1, j - 1) * np.asarray(lam_r, dtype=float)
    if j >= 2:
        mixed = mixed * np.asarray(lam_t, dtype=float) ** (j - 1)
    return lead + mixed


def rotsym_sigma_k(profile: RotProfile, params: CapParams) -> np.ndarray:
    """sigma_k(tau_sharp[s]) along the profile's cell rings."""
    return sigma_rot(profile.lam_r, profile.lam_t, params.n, params.k)


def _sigma_rot_partials(lam_r, lam_t, n: int, k: int):
    """(d sigma_k / d lam_r, d sigma_k / d lam_t) for the two-eigenvalue structure."""
    dr = math.comb(n - 1, k - 1) * (lam_t ** (k - 1) if k >= 2 else np.ones_like(lam_t))
    dt = k * math.comb(n - 1, k) * lam_t ** (k - 1)
    if k >= 2:
        dt = dt + (k - 1) * math.comb(n - 1, k - 1) * lam_r * lam_t ** (k - 2)
    return dr, dt


def _residual(profile: RotProfile, q: float, rhs_cells: np.ndarray, params: CapParams):
    fint = rotsym_sigma_k(profile, params) - profile.s[: profile.grid.n_cells] ** (q - 1.0) * rhs_cells
    return fint, profile.robin_residual()


def _linearize(profile: RotProfile, q: float, rhs_cells: np.ndarray, params: CapParams):
    g = profile.grid
    ops = g.ops()
    b = g.beta_cells
    lr, lt = profile.lam_r, profile.lam_t
    dr, dt = _sigma_rot_partials(lr, lt, params.n, params.k)
    lam_r_op = ops["d2"] + ops["pcells"]
    lam_t_op = sp.diags(np.cos(b) / np.sin(b)) @ ops["d1"] + ops["pcells"]
    jint = sp.diags(dr) @ lam_r_op + sp.diags(dt) @ lam_t_op
    if q != 1.0:
        zer = (q - 1.0) * profile.s[: g.n_cells] ** (q - 2.0) * rhs_cells
        jint = jint - sp.diags(zer) @ ops["pcells"]
    ct = math.cos(g.theta) / math.sin(g.theta)
    robin = ops["dbd"] - ct * sp.csr_matrix(
        ([1.0], ([0], [g.n_cells])), shape=(1, g.n_cells + 1)
    )
    return sp.vstack([jint, robin], format="csr")


def _newton(profile: RotProfile, q: float, rhs_cells: np.ndarray, params: CapParams,
            sched: Schedule):
    s = profile
    fint, gbd = _residual(s, q, rhs_cells, params)
    rn = max(float(np.max(np.abs(fint))), abs(gbd))
    history = [rn]

    def lam1min(prof):
        return float(min(np.min(prof.lam_r), np.min(prof.lam_t)))

    def info(iters):
        return {
            "iters": iters,
            "res_norm": float(np.max(np.abs(fint))),
            "robin_norm": abs(gbd),
            "lam1min": lam1min(s),
            "smin": float(np.min(s.s)),
            "smax": float(np.max(s.s)),
            "history": history,
        }

    for it in range(sched.newton_max):
        if rn <= sched.tol_solve:
            return s, info(it)
        if lam1min(s) <= sched.delta_cone:
            raise NewtonFailure(f"profile left the cone: lam1min = {lam1min(s):.3e}")
        jac = _linearize(s, q, rhs_cells, params)
        delta = spsolve(jac.tocsc(), -np.concatenate([fint, [gbd]]))

        alpha, accepted = 1.0, False
        for _ in range(sched.backtrack_max):
            s_try = RotProfile(s.grid, s.s + alpha * delta)
            if np.min(s_try.s) > 0.0 and lam1min(s_try) > sched.delta_cone:
                fint_try, gbd_try = _residual(s_try, q, rhs_cells, params)
                rn_try = max(float(np.max(np.abs(fint_try))), abs(gbd_try))
                if rn_try <= (1.0 - 1e-4 * alpha) * rn:
                    accepted = True
                    break
            alpha *= 0.5
        if not accepted:
            raise NewtonFailure(f"1-D line search failed at iteration {it} (res = {rn:.3e})")
        s, fint, gbd, rn = s_try, fint_try, gbd_try, rn_try
        history.append(rn)

    if rn <= sched.tol_solve:
        return s, info(sched.newton_max)
    raise NewtonFailure(f"1-D Newton: no convergence in {sched.newton_max} iterations")


def solve_rotsym(phi, params: CapParams, sched: Schedule | None = None, n_cells: int = 512,
                 t_end: float = 1.0, s0: RotProfile | None = None):
    """Continuation solve of the 1-D reduction; the oracle for rotsym data.

    phi : callable phi(beta) > 0 or array of n_cells + 1 values (cells + rim).
    Returns (RotProfile, SolveReport); same stall semantics as solve_path.
    """
    sched = sched or Schedule()
    grid = RotGrid(n_cells, params.theta)
    if callable(phi):
        phi_vals = np.asarray(phi(grid.beta_all), dtype=float)
    else:
        phi_vals = np.asarray(phi, dtype=float)
    if phi_vals.shape != grid.beta_all.shape:
        raise ValueError(f"phi values shape {phi_vals.shape} != {grid.beta_all.shape}")
    if np.min(phi_vals) <= 0.0:
        raise ValueError("phi must be strictly positive")

    if s0 is None:
        scale = params.cnk ** (-1.0 / params.k)
        s0 = RotProfile(grid, scale * ell(params.theta, grid.beta_all))

    phi_cells = phi_vals[: grid.n_cells]

    def newton_fn(s, q, rhs_cells):
        return _newton(s, q, rhs_cells, params, sched)

    def rhs_fn(t):
        return homotopy_values(t, phi_cells, params)

    return run_continuation(newton_fn, rhs_fn, s0, sched, t_end=t_end)


# -- geometric audits -------------------------------------------------------------


def reconstruct_rot(profile: RotProfile):
    """(radius rho(beta), height X3(beta)) of the body, cells plus rim."""
    g = profile.grid
    ops = g.ops()
    ds_cells = ops["d1"] @ profile.s
    b = g.beta_cells
    rho = profile.s[: g.n_cells] * np.sin(b) + ds_cells * np.cos(b)
    x3 = profile.s[: g.n_cells] * np.cos(b) - ds_cells * np.sin(b)
    st, ct = math.sin(g.theta), math.cos(g.theta)
    rho_rim = profile.s_rim() * st + profile.ds_rim() * ct
    x3_rim = profile.s_rim() * ct - profile.ds_rim() * st
    return np.append(rho, rho_rim), np.append(x3, x3_rim)


def barrier_height_check(profile: RotProfile, params: CapParams) -> dict:
    """Audit H >= (Lambda^{1/n}/2) r_in^2 with Lambda = min det D^2 f.

    det D^2 f = sec^{n+2}(beta) / sigma_n(tau_sharp[s]) from the graph
    curvature relation K = det D^2 f / (1+|Df|^2)^{(n+2)/2} with |Df| = tan(beta)
    and K = 1/sigma_n of the curvature radii.
    """
    n = params.n
    rho, x3 = reconstruct_rot(profile)
    height = float(np.max(x3))
    r_in = float(rho[-1])
    b = profile.grid.beta_cells
    sigma_n = sigma_rot(profile.lam_r, profile.lam_t, n, n)
    det_d2f = (1.0 / np.cos(b)) ** (n + 2) / sigma_n
    lam = float(np.min(det_d2f))
    rhs = 0.5 * lam ** (1.0 / n) * r_in**2
    return {
        "name": "barrier_height",
        "statement": "H >= (Lambda^{1/n}/2) r_in^2, Lambda = min det D^2 f",
        "lhs": height,
        "rhs": rhs,
        "margin": height - rhs,
        "pass": bool(height >= rhs),
    }


def cross_check_gap(profile: RotProfile, field2d) -> float:
    """Max-norm gap between a 2-D solution and the 1-D oracle.

    The 2-D field is azimuthally averaged and compared on its own beta nodes
    against the (typically much finer) linearly interpolated profile.
    """
    mean2d = np.mean(field2d.values, axis=1)
    interp = np.interp(field2d.grid.beta_all, profile.grid.beta_all, profile.s)
    return float(np.max(np.abs(mean2d - interp)))


def save_profile(profile: RotProfile, params: CapParams, path):
    """Profile CSV (beta, s, lam_r, lam_t, sigma_k); rim row extrapolated."""
    g = profile.grid
    lr, lt = profile.lam_r, profile.lam_t
    sk = rotsym_sigma_k(profile, params)
    db = g.dbeta
    wv = fd_weights([-2.5 * db, -1.5 * db, -0.5 * db], 0)
    rim = [float(wv @ arr[-3:]) for arr in (lr, lt, sk)]
    lines = ["beta,s,lam_r,lam_t,sigma_k"]
    for i in range(g.n_cells):
        lines.append(
            f"{g.beta_cells[i]:.17g},{profile.s[i]:.17g},{lr[i]:.17g},{lt[i]:.17g},{sk[i]:.17g}"
        )
    lines.append(
        f"{g.theta:.17g},{profile.s[-1]:.17g},{rim[0]:.17g},{rim[1]:.17g},{rim[2]:.17g}"
    )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")

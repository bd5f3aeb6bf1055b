"""Geometric verification: body reconstruction, capillary mixed volumes, area
measures, parallel bodies, and the a priori estimate audit.

The body behind a strictly convex capillary support function s is recovered by
the inverse Gauss map

    X(beta, phi) = s u + (d_beta s) e_beta + (d_phi s / sin beta) e_phi

with u the unit normal and {e_beta, e_phi} the orthonormal chart frame.  The
Robin condition is equivalent to the rim lying in the plane {x_3 = 0}, so rim
planarity is a free consistency check on every reconstruction.

Volumes come from the divergence theorem with the vector field x_3 e_3 over
the closed surface (cap surface plus bottom disk): the disk sits in {x_3 = 0}
and contributes no flux, so

    vol = integral of X_3 cos(beta) sigma_n(tau_sharp[s]) dH

with sigma_n dH the surface area element in the Gauss-map parametrization.

Every audit is read-only and returns a plain record {name, statement, lhs,
rhs, margin, pass} (or a small dict of such), never an exception, except for
reconstruction itself which refuses non-convex input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fields import CapField, tau_sharp
from .geometry import CapParams, ell, ell_field
from .symfunc import SymEndo, polarize_qk, sigma_k

__all__ = [
    "BodyGeometry",
    "AreaMeasureField",
    "reconstruct",
    "surface_points",
    "volume",
    "parallel_body",
    "mixed_volume",
    "mixed_volume_repeated",
    "af_inequality_check",
    "area_measure",
    "steiner_sigma_check",
    "steiner_coefficients",
    "steiner_volume_check",
    "estimates_audit",
    "uniqueness_check",
    "save_embedding",
]


def _endo(tau) -> SymEndo:
    return SymEndo(tau.a11, tau.a12, tau.a22)


def _gradient_all_rows(s: CapField):
    """(d_beta s, d_phi s) on every node row, including the rim ring."""
    g = s.grid
    ops = g.ops()
    shape = (g.nbeta, g.nphi)
    sb = np.empty((g.nbeta + 1, g.nphi))
    sb[: g.nbeta] = (ops["dbeta"] @ s.flat).reshape(shape)
    sb[g.nbeta] = ops["dbd"] @ s.flat
    sp_ = np.empty_like(sb)
    sp_[: g.nbeta] = (ops["dphi"] @ s.flat).reshape(shape)
    rim = s.boundary
    sp_[g.nbeta] = (np.roll(rim, -1) - np.roll(rim, 1)) / (2.0 * g.dphi)
    return sb, sp_


def surface_points(s: CapField) -> np.ndarray:
    """Embedding points X per node, shape (Nbeta + 1, Nphi, 3)."""
    g = s.grid
    sb, sp_ = _gradient_all_rows(s)
    beta = g.beta_all[:, None]
    sinb, cosb = np.sin(beta), np.cos(beta)
    sinp, cosp = np.sin(g.phi)[None, :], np.cos(g.phi)[None, :]
    v = s.values
    azim = sp_ / sinb
    x1 = v * sinb * cosp + sb * cosb * cosp - azim * sinp
    x2 = v * sinb * sinp + sb * cosb * sinp + azim * cosp
    x3 = v * cosb - sb * sinb
    return np.stack([x1, x2, x3], axis=-1)


@dataclass(eq=False)
class BodyGeometry:
    """Reconstructed capillary body: embedding points and scalar summaries."""

    grid: object
    points: np.ndarray
    height: float
    r_in: float
    r_out: float
    rim_planarity: float
    slopes: np.ndarray
    lam1min: float

    @property
    def rim(self) -> np.ndarray:
        return self.points[-1]

    @property
    def slope_max(self) -> float:
        return float(np.max(self.slopes))


def reconstruct(s: CapField) -> BodyGeometry:
    """Recover the body from s; refuses non-convex input.

    Slopes are measured on the reconstructed surface itself: the discrete
    normal cross(d_beta X, d_phi X) has slope |N'|/N_3, which for an exact
    convex reconstruction equals tan(beta) at the node's normal.
    """
    tau = tau_sharp(s)
    if tau.lam1min <= 0.0:
        raise ValueError(
            f"reconstruction needs a strictly convex field; lam1min = {tau.lam1min:.6e}"
        )
    g = s.grid
    pts = surface_points(s)
    dxb = np.gradient(pts, g.beta_all, axis=0)
    dxp = (np.roll(pts, -1, axis=1) - np.roll(pts, 1, axis=1)) / (2.0 * g.dphi)
    nrm = np.cross(dxb, dxp)
    horiz = np.hypot(nrm[..., 0], nrm[..., 1])
    slopes = np.divide(
        horiz, nrm[..., 2], out=np.full(horiz.shape, np.inf), where=nrm[..., 2] > 0.0
    )
    rim = pts[-1]
    radii = np.hypot(rim[:, 0], rim[:, 1])
    return BodyGeometry(
        grid=g,
        points=pts,
        height=float(np.max(pts[..., 2])),
        r_in=float(np.min(radii)),
        r_out=float(np.max(radii)),
        rim_planarity=float(np.max(np.abs(rim[:, 2]))),
        slopes=slopes,
        lam1min=tau.lam1min,
    )


def volume(s: CapField) -> float:
    """Divergence-theorem volume of the reconstructed body (n = 2)."""
    g = s.grid
    x3 = surface_points(s)[: g.nbeta, :, 2]
    det = sigma_k(_endo(tau_sharp(s)), 2)
    cosb = np.cos(g.beta_cells)[:, None]
    return g.integrate(x3 * cosb * det)


def parallel_body(s: CapField, t: float) -> CapField:
    """Support function of the body fattened by the t-cap: s + t ell."""
    if t < 0.0:
        raise ValueError(f"parallel parameter must be >= 0, got {t}")
    return s + float(t) * ell_field(s.grid)


# -- mixed volumes ----------------------------------------------------------------


def mixed_volume(fields, params: CapParams) -> float:
    """V(s_0, ..., s_k, ell, ..., ell): weight s_0 against the polarized sigma_k.

    fields supplies the k+1 capillary arguments; the n-k remaining slots are
    the model cap, whose endomorphism is the identity, and the identity fill
    is what the Q_k normalization 1/C(n,k) encodes.
    """
    fields = list(fields)
    if len(fields) != params.k + 1:
        raise ValueError(f"mixed_volume needs k+1 = {params.k + 1} fields, got {len(fields)}")
    g = fields[0].grid
    for f in fields[1:]:
        if f.grid != g:
            raise ValueError("mixed_volume: grid mismatch between arguments")
    mats = [_endo(tau_sharp(f)) for f in fields[1:]]
    qk = polarize_qk(mats, params.n)
    return g.integrate(fields[0].interior * qk) / (params.n + 1.0)


def mixed_volume_repeated(s0: CapField, s: CapField, params: CapParams) -> float:
    """Repeated-argument mixed volume, direct form (1/(n+1)) int s_0 sigma_k / C(n,k)."""
    if s.grid != s0.grid:
        raise ValueError("mixed_volume_repeated: grid mismatch")
    sk = sigma_k(_endo(tau_sharp(s)), params.k)
    return s.grid.integrate(s0.interior * sk) / ((params.n + 1.0) * params.cnk)


def af_inequality_check(s1: CapField, s2: CapField, params: CapParams) -> dict:
    """Quadratic mixed-volume inequality for the pair, trailing slots at s1.

    B(f, g) = V(f, g, s1, ..., s1) and the inequality is
    B(s1, s2)^2 >= B(s1, s1) B(s2, s2), with equality iff s2 is a multiple
    of s1.  Returns the three values and the signed relative margin.
    """
    base = [s1] * (params.k - 1)
    b12 = mixed_volume([s1, s2] + base, params)
    b11 = mixed_volume([s1, s1] + base, params)
    b22 = mixed_volume([s2, s2] + base, params)
    margin = b12**2 - b11 * b22
    scale = max(1.0, b12**2, abs(b11 * b22))
    return {
        "name": "af_inequality",
        "statement": "V(s1,s2,...)^2 >= V(s1,s1,...) V(s2,s2,...)",
        "b12": b12,
        "b11": b11,
        "b22": b22,
        "margin": margin,
        "rel_margin": margin / scale,
        "pass": bool(margin / scale >= -1e-8),
    }


# -- area measures and Steiner identities ------------------------------------------


@dataclass(eq=False)
class AreaMeasureField:
    """Density ell sigma_k(tau_sharp[s]) / C(n,k) on the cell rings, plus its mass."""

    grid: object
    density: np.ndarray
    total: float


def area_measure(s: CapField, params: CapParams) -> AreaMeasureField:
    g = s.grid
    sk = sigma_k(_endo(tau_sharp(s)), params.k)
    density = ell(g.theta, g.beta_cells)[:, None] * sk / params.cnk
    return AreaMeasureField(grid=g, density=density, total=g.integrate(density))


def steiner_sigma_check(s: CapField, t: float, params: CapParams) -> dict:
    """Exact binomial expansion of sigma_k under the parallel shift.

    Adding t ell shifts tau_sharp by t times the identity, and

        sigma_k(A + t id) = sum_j C(n-j, k-j) t^{k-j} sigma_j(A)

    is a polynomial identity, so the two sides agree to roundoff; the shift is
    applied in exact endomorphism algebra rather than through the discrete
    tau of s + t ell, which would reintroduce the O(h^2) stencil error.
    """
    k, n = params.k, params.n
    a = _endo(tau_sharp(s))
    lhs = sigma_k(a + float(t) * SymEndo.identity(a.shape), k)
    rhs = np.zeros(a.shape)
    for j in range(k + 1):
        rhs = rhs + math.comb(n - j, k - j) * float(t) ** (k - j) * sigma_k(a, j)
    gap = float(np.max(np.abs(lhs - rhs)))
    scale = max(1.0, float(np.max(np.abs(lhs))))
    return {
        "name": "steiner_sigma",
        "statement": "sigma_k(tau + t id) = sum_j C(n-j,k-j) t^{k-j} sigma_j(tau)",
        "t": float(t),
        "lhs": float(np.max(np.abs(lhs))),
        "rhs": float(np.max(np.abs(rhs))),
        "margin": gap / scale,
        "pass": bool(gap / scale <= 1e-9),
    }


def steiner_coefficients(s: CapField, params: CapParams) -> np.ndarray:
    """Coefficients c_j with slab volume = sum_j c_j rho^{n+1-j}, j = 0..n.

    c_j = (1/(n+1-j)) int ell sigma_j(tau_sharp[s]) dH: the curvature-measure
    form of the slab volume after the change of variables to the cap, where
    the weight (1 - cos(theta) <nu, e_3>) becomes ell.
    """
    g = s.grid
    n = params.n
    a = _endo(tau_sharp(s))
    lc = ell(g.theta, g.beta_cells)[:, None]
    return np.array(
        [g.integrate(lc * sigma_k(a, j)) / (n + 1.0 - j) for j in range(n + 1)]
    )


def steiner_volume_check(s: CapField, rho: float, params: CapParams,
                         tol: float = 5e-3) -> dict:
    """Parallel-slab volume two ways: divergence theorem vs curvature measures.

    Left side: vol(body of s + rho ell) - vol(body of s).  Right side: the
    rho-polynomial with the steiner_coefficients.  Both sides are second-order
    quadratures of the same smooth quantity, so they agree to the combined
    discretization error, not to roundoff.
    """
    if params.n != 2:
        raise ValueError("volume audits are n = 2 only")
    lhs = volume(parallel_body(s, rho)) - volume(s)
    coeff = steiner_coefficients(s, params)
    rhs = float(sum(c * rho ** (params.n + 1 - j) for j, c in enumerate(coeff)))
    gap = abs(lhs - rhs)
    scale = max(1.0, abs(lhs), abs(rhs))
    return {
        "name": "steiner_volume",
        "statement": "vol(slab to s + rho ell) = sum_j rho^{n+1-j}/(n+1-j) int ell sigma_j",
        "rho": float(rho),
        "lhs": lhs,
        "rhs": rhs,
        "margin": gap / scale,
        "pass": bool(gap / scale <= tol),
    }


# -- estimate audit -----------------------------------------------------------------


def _record(name, statement, lhs, rhs, margin, ok):
    return {
        "name": name,
        "statement": statement,
        "lhs": lhs,
        "rhs": rhs,
        "margin": margin,
        "pass": ok,
    }


def estimates_audit(s: CapField, phi: CapField, params: CapParams,
                    slope_slack: float = 0.02) -> dict:
    """Audit the solution-independent bounds on a (claimed) solution field.

    Items: (a) lower bound on max s from min phi; (b) slope bound tan(theta)
    plus the stated discretization slack; (c) positive height and the
    even-body support bound s >= cos(theta) H; (d) strict convexity;
    (e) observed max sigma_1, report-only (the comparison constant is not
    explicit); (f) base inradius >= H / tan(theta).

    Non-convex input is flagged, not raised: geometry-dependent items fail
    with empty values.
    """
    k, n, p = params.k, params.n, params.p
    tau = tau_sharp(s)
    items = []

    phi0 = float(np.min(phi.values))
    bound = (phi0 / params.cnk) ** (1.0 / (k + 1.0 - p)) * (
        1.0 - math.cos(params.theta)
    ) ** (k / (k + 1.0 - p))
    smax = float(np.max(s.values))
    items.append(_record(
        "max_lower_bound",
        "max s >= (phi0/C(n,k))^{1/(k+1-p)} (1-cos theta)^{k/(k+1-p)}",
        smax, bound, smax - bound, bool(smax - bound > 0.0),
    ))

    convex = tau.lam1min > 0.0
    items.append(_record(
        "strict_convexity", "lam1(tau_sharp[s]) > 0",
        tau.lam1min, 0.0, tau.lam1min, bool(convex),
    ))

    geom = reconstruct(s) if convex else None
    tan_t = math.tan(params.theta)
    if geom is not None:
        items.append(_record(
            "slope_bound", "max |Df| <= tan(theta) + slack",
            geom.slope_max, tan_t + slope_slack,
            tan_t + slope_slack - geom.slope_max,
            bool(geom.slope_max <= tan_t + slope_slack),
        ))
        items.append(_record(
            "height_positive", "H > 0", geom.height, 0.0, geom.height,
            bool(geom.height > 0.0),
        ))
        smin = float(np.min(s.values))
        rhs = math.cos(params.theta) * geom.height
        items.append(_record(
            "support_height_bound", "s >= cos(theta) H (even bodies)",
            smin, rhs, smin - rhs, bool(smin >= rhs),
        ))
        rhs = geom.height / tan_t
        items.append(_record(
            "inradius_height", "r_in >= H / tan(theta)",
            geom.r_in, rhs, geom.r_in - rhs, bool(geom.r_in >= rhs),
        ))
        g = s.grid
        rhs = 10.0 * (g.dbeta**2 + (math.sin(params.theta) * g.dphi) ** 2) * max(1.0, smax)
        items.append(_record(
            "rim_planarity", "max |X_3| on the rim <= O(h^2) (Robin <=> planar rim)",
            geom.rim_planarity, rhs, rhs - geom.rim_planarity,
            bool(geom.rim_planarity <= rhs),
        ))
    else:
        for name, statement in (
            ("slope_bound", "max |Df| <= tan(theta) + slack"),
            ("height_positive", "H > 0"),
            ("support_height_bound", "s >= cos(theta) H (even bodies)"),
            ("inradius_height", "r_in >= H / tan(theta)"),
            ("rim_planarity", "max |X_3| on the rim <= O(h^2)"),
        ):
            items.append(_record(name, statement + " (skipped: not convex)",
                                 None, None, None, False))

    sig1max = float(np.max(sigma_k(_endo(tau), 1)))
    items.append(_record(
        "sigma1_observed", "max sigma_1 (reported; no explicit comparison constant)",
        sig1max, None, None, None,
    ))

    gated = [it["pass"] for it in items if it["pass"] is not None]
    return {"items": items, "all_passed": bool(all(gated))}


def uniqueness_check(s1: CapField, s2: CapField, phi: CapField, params: CapParams) -> dict:
    """Agreement measures for two solves of the same problem.

    Reports the sup-norm gap and the weighted-energy gap int s^p phi, whose
    equality is the scalar invariant behind the uniqueness argument.
    """
    g = s1.grid
    e1 = g.integrate(s1.interior ** params.p * phi.interior)
    e2 = g.integrate(s2.interior ** params.p * phi.interior)
    return {
        "sup_gap": float(np.max(np.abs(s1.values - s2.values))),
        "energy_1": e1,
        "energy_2": e2,
        "energy_gap": abs(e1 - e2) / max(1.0, abs(e1)),
    }


def save_embedding(s: CapField, path):
    """Point-cloud CSV (beta, phi, X1, X2, X3), row-major over the node grid."""
    g = s.grid
    pts = surface_points(s)
    lines = ["beta,phi,x1,x2,x3"]
    for i, b in enumerate(g.beta_all):
        for j, ph in enumerate(g.phi):
            x = pts[i, j]
            lines.append(f"{b:.17g},{ph:.17g},{x[0]:.17g},{x[1]:.17g},{x[2]:.17g}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")

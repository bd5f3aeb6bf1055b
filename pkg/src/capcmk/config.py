"""Plain key = value configuration files for the command-line front end.

Format: one `key = value` per line, `#` starts a comment, keys are dotted and
case-insensitive, duplicate or unknown keys are errors.  Angles accept plain
floats plus the forms `pi`, `pi/N`, and `X*pi` so contact angles stay exact
in the source text.

    n = 2
    k = 1
    p = 1.5
    theta = pi/3
    grid.nbeta = 64
    grid.nphi = 128
    phi.kind = cap_manufactured
    phi.r = 1.3

phi kinds: `constant` (phi.value), `cap_manufactured` (phi.r; data whose exact
solution is r times the model function), `rotsym_expr` (phi.coeffs c0,c1,...
meaning sum_i c_i (1 - cos beta)^i), and `file` (phi.path, a stored field;
2-D solves only).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .fields import CapField, CapGrid, load_field
from .geometry import CapParams, ell
from .solver import Schedule

__all__ = ["ConfigError", "RunConfig", "load_config"]


class ConfigError(ValueError):
    """Malformed configuration: parse failure, bad value, or range violation."""


_PHI_KINDS = ("constant", "cap_manufactured", "rotsym_expr", "file")

_KNOWN_KEYS = {
    "n", "k", "p", "theta",
    "grid.nbeta", "grid.nphi",
    "phi.kind", "phi.value", "phi.r", "phi.coeffs", "phi.path",
    "schedule.dt0", "schedule.dt_min", "schedule.dt_max", "schedule.grow",
    "schedule.shrink", "schedule.fast_iters", "schedule.newton_max",
    "schedule.backtrack_max", "schedule.tol_solve", "schedule.delta_cone",
    "oracle.cells",
    "audit.slope_slack", "audit.steiner_tol",
    "sweep.p_list", "sweep.theta_list",
}


def _parse_angle(text: str, key: str) -> float:
    t = text.strip().lower()
    if t == "pi":
        return math.pi
    m = re.fullmatch(r"pi\s*/\s*(\d+)", t)
    if m:
        return math.pi / int(m.group(1))
    m = re.fullmatch(r"([0-9.eE+-]+)\s*\*\s*pi", t)
    if m:
        return float(m.group(1)) * math.pi
    try:
        return float(t)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse angle {text!r}") from None


def parse_kv_text(text: str) -> dict:
    """Raw key -> value-string table; comments stripped, duplicates rejected."""
    table = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected `key = value`, got {raw_line!r}")
        key, value = line.split("=", 1)
        key = key.strip().lower()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in table:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        table[key] = value.strip()
    unknown = sorted(set(table) - _KNOWN_KEYS)
    if unknown:
        raise ConfigError(f"unknown keys: {', '.join(unknown)}")
    return table


def _take(table, key, conv, default=None, required=False):
    if key not in table:
        if required:
            raise ConfigError(f"missing required key {key!r}")
        return default
    text = table[key]
    try:
        return conv(text)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key}: bad value {text!r} ({exc})") from None


@dataclass
class RunConfig:
    """Typed configuration: problem, grid sizes, data specification, controls."""

    params: CapParams
    nbeta: int
    nphi: int
    phi_kind: str
    phi_value: float
    phi_r: float
    phi_coeffs: tuple
    phi_path: str | None
    schedule: Schedule
    oracle_cells: int
    slope_slack: float
    steiner_tol: float
    sweep_p: tuple
    sweep_theta: tuple

    def grid(self) -> CapGrid:
        return CapGrid(self.nbeta, self.nphi, self.params.theta)

    def phi_is_rotsym(self) -> bool:
        return self.phi_kind in ("constant", "cap_manufactured", "rotsym_expr")

    def _profile_values(self, beta):
        beta = np.asarray(beta, dtype=float)
        if self.phi_kind == "constant":
            return np.full(beta.shape, self.phi_value)
        if self.phi_kind == "cap_manufactured":
            pw = self.params.k + 1.0 - self.params.p
            return (
                self.params.cnk
                * self.phi_r**pw
                * ell(self.params.theta, beta) ** (1.0 - self.params.p)
            )
        if self.phi_kind == "rotsym_expr":
            x = 1.0 - np.cos(beta)
            out = np.zeros(beta.shape)
            for i, c in enumerate(self.phi_coeffs):
                out = out + c * x**i
            return out
        raise ConfigError(f"phi.kind = {self.phi_kind!r} has no closed-form profile")

    def phi_profile(self):
        """phi as a callable of beta; rejects the `file` kind."""
        if not self.phi_is_rotsym():
            raise ConfigError(
                f"the 1-D reduction needs a rotationally symmetric phi kind, got {self.phi_kind!r}"
            )
        return self._profile_values

    def phi_field(self, grid: CapGrid) -> CapField:
        if self.phi_kind == "file":
            f = load_field(self.phi_path)
            if f.grid != grid:
                raise ConfigError(
                    f"phi.path grid {f.grid!r} does not match the solve grid {grid!r}"
                )
            return f
        values = np.broadcast_to(
            self._profile_values(grid.beta_all)[:, None], (grid.nbeta + 1, grid.nphi)
        ).copy()
        return CapField(grid, values, even=True)

    def manufactured_reference(self, grid: CapGrid) -> CapField | None:
        """Exact solution r ell when phi.kind is cap_manufactured, else None."""
        if self.phi_kind != "cap_manufactured":
            return None
        values = self.phi_r * np.broadcast_to(
            ell(self.params.theta, grid.beta_all)[:, None], (grid.nbeta + 1, grid.nphi)
        ).copy()
        return CapField(grid, values, even=True)


def load_config(path) -> RunConfig:
    """Parse and validate a config file; any defect raises ConfigError."""
    with open(path) as fh:
        table = parse_kv_text(fh.read())

    n = _take(table, "n", int, required=True)
    k = _take(table, "k", int, required=True)
    p = _take(table, "p", float, required=True)
    theta = _take(table, "theta", lambda t: _parse_angle(t, "theta"), required=True)
    try:
        params = CapParams(n=n, k=k, p=p, theta=theta)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    phi_kind = _take(table, "phi.kind", str, default="constant")
    if phi_kind not in _PHI_KINDS:
        raise ConfigError(f"phi.kind must be one of {_PHI_KINDS}, got {phi_kind!r}")
    phi_value = _take(table, "phi.value", float, default=1.0)
    phi_r = _take(table, "phi.r", float, default=1.0)
    coeffs_text = _take(table, "phi.coeffs", str, default="1.0")
    try:
        phi_coeffs = tuple(float(c) for c in coeffs_text.split(","))
    except ValueError:
        raise ConfigError(f"phi.coeffs: bad list {coeffs_text!r}") from None
    phi_path = _take(table, "phi.path", str, default=None)
    if phi_kind == "file" and phi_path is None:
        raise ConfigError("phi.kind = file requires phi.path")
    if phi_kind == "constant" and phi_value <= 0.0:
        raise ConfigError(f"phi.value must be > 0, got {phi_value}")
    if phi_kind == "cap_manufactured" and phi_r <= 0.0:
        raise ConfigError(f"phi.r must be > 0, got {phi_r}")

    defaults = Schedule()
    sched = Schedule(
        dt0=_take(table, "schedule.dt0", float, default=defaults.dt0),
        dt_min=_take(table, "schedule.dt_min", float, default=defaults.dt_min),
        dt_max=_take(table, "schedule.dt_max", float, default=defaults.dt_max),
        grow=_take(table, "schedule.grow", float, default=defaults.grow),
        shrink=_take(table, "schedule.shrink", float, default=defaults.shrink),
        fast_iters=_take(table, "schedule.fast_iters", int, default=defaults.fast_iters),
        newton_max=_take(table, "schedule.newton_max", int, default=defaults.newton_max),
        backtrack_max=_take(table, "schedule.backtrack_max", int,
                            default=defaults.backtrack_max),
        tol_solve=_take(table, "schedule.tol_solve", float, default=defaults.tol_solve),
        delta_cone=_take(table, "schedule.delta_cone", float, default=defaults.delta_cone),
    )
    for name in ("dt0", "dt_min", "dt_max", "grow", "tol_solve", "delta_cone"):
        if getattr(sched, name) <= 0.0:
            raise ConfigError(f"schedule.{name} must be > 0")
    if not (0.0 < sched.shrink < 1.0):
        raise ConfigError(f"schedule.shrink must lie in (0, 1), got {sched.shrink}")

    nbeta = _take(table, "grid.nbeta", int, default=64)
    nphi = _take(table, "grid.nphi", int, default=128)
    oracle_cells = _take(table, "oracle.cells", int, default=512)
    slope_slack = _take(table, "audit.slope_slack", float, default=0.02)
    steiner_tol = _take(table, "audit.steiner_tol", float, default=5e-3)

    def angle_list(text):
        return tuple(_parse_angle(t, "sweep.theta_list") for t in text.split(","))

    sweep_p = _take(table, "sweep.p_list",
                    lambda t: tuple(float(c) for c in t.split(",")),
                    default=(1.2, 1.5, 1.8))
    sweep_theta = _take(table, "sweep.theta_list", angle_list,
                        default=(math.pi / 6, math.pi / 4, math.pi / 3))

    cfg = RunConfig(
        params=params,
        nbeta=nbeta,
        nphi=nphi,
        phi_kind=phi_kind,
        phi_value=phi_value,
        phi_r=phi_r,
        phi_coeffs=phi_coeffs,
        phi_path=phi_path,
        schedule=sched,
        oracle_cells=oracle_cells,
        slope_slack=slope_slack,
        steiner_tol=steiner_tol,
        sweep_p=sweep_p,
        sweep_theta=sweep_theta,
    )
    try:
        cfg.grid()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if oracle_cells < 8:
        raise ConfigError(f"oracle.cells must be >= 8, got {oracle_cells}")
    return cfg

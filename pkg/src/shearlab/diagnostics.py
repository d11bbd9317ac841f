"""Certification diagnostics for shear-flow histories.

Computes the energy ledger of a run — the running-sup-plus-integral
functionals E(t) and E1(t), the pointwise amplitude nu(t), the data
measures F(f) and V0(v0) — and turns the smallness, initial-energy and
hyperbolicity inequalities into machine-checkable flags.

All time derivatives use second-order differences, spatial integrals the
trapezoid rule over the full grid (boundary values of derivative fields
are reconstructed by one-sided second-order stencils; the fields
themselves vanish at the walls).  Summation orders are fixed, so identical
histories give bit-identical reports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import ConfigError
from .kernels import DampingFunction, RelaxationKernel, memory_remainder_weights, ramp_weight
from .solver import SolverResult, remainder_field, remainder_field_rate
from .volterra import time_derivative, trapezoid_convolve

__all__ = [
    "EnergyReport",
    "sobolev_constant",
    "energy",
    "nu",
    "strain_sup",
    "data_measures",
    "check_certificates",
    "build_report",
    "remainder_bounds",
    "slope_deviation_bound",
]


def sobolev_constant(length: float) -> float:
    """Explicit 1-D embedding constant: ||w||_inf^2 <= C^2 (||w||^2 + ||w'||^2)."""
    if not length > 0.0:
        raise ConfigError("interval length must be positive")
    return math.sqrt(max(2.0, 2.0 / length) + 1.0)


# ---------------------------------------------------------------------------
# full-grid derivative stencils (interior central, one-sided at the walls)
# ---------------------------------------------------------------------------


def _pad(field_rows: np.ndarray) -> np.ndarray:
    field_rows = np.asarray(field_rows, dtype=float)
    pad = [(0, 0)] * (field_rows.ndim - 1) + [(1, 1)]
    return np.pad(field_rows, pad)


def _d1(p: np.ndarray, dx: float) -> np.ndarray:
    out = np.empty_like(p)
    out[..., 1:-1] = (p[..., 2:] - p[..., :-2]) / (2.0 * dx)
    out[..., 0] = (-3.0 * p[..., 0] + 4.0 * p[..., 1] - p[..., 2]) / (2.0 * dx)
    out[..., -1] = (3.0 * p[..., -1] - 4.0 * p[..., -2] + p[..., -3]) / (2.0 * dx)
    return out


def _d2(p: np.ndarray, dx: float) -> np.ndarray:
    out = np.empty_like(p)
    out[..., 1:-1] = (p[..., 2:] - 2.0 * p[..., 1:-1] + p[..., :-2]) / dx**2
    out[..., 0] = (2.0 * p[..., 0] - 5.0 * p[..., 1] + 4.0 * p[..., 2] - p[..., 3]) / dx**2
    out[..., -1] = (2.0 * p[..., -1] - 5.0 * p[..., -2] + 4.0 * p[..., -3] - p[..., -4]) / dx**2
    return out


def _d3(p: np.ndarray, dx: float) -> np.ndarray:
    if p.shape[-1] < 6:
        raise ConfigError("third derivative needs at least 6 grid values")
    out = np.empty_like(p)
    out[..., 2:-2] = (
        -p[..., :-4] + 2.0 * p[..., 1:-3] - 2.0 * p[..., 3:-1] + p[..., 4:]
    ) / (2.0 * dx**3)
    c0 = (-2.5, 9.0, -12.0, 7.0, -1.5)
    c1 = (-1.5, 5.0, -6.0, 3.0, -0.5)
    out[..., 0] = sum(c * p[..., i] for i, c in enumerate(c0)) / dx**3
    out[..., 1] = sum(c * p[..., i] for i, c in enumerate(c1)) / dx**3
    out[..., -1] = -sum(c * p[..., -1 - i] for i, c in enumerate(c0)) / dx**3
    out[..., -2] = -sum(c * p[..., -1 - i] for i, c in enumerate(c1)) / dx**3
    return out


def _l2sq(rows: np.ndarray, dx: float) -> np.ndarray:
    """Squared spatial L^2 norm by the trapezoid rule, per time row."""
    sq = rows**2
    return dx * (np.sum(sq, axis=-1) - 0.5 * sq[..., 0] - 0.5 * sq[..., -1])


# ---------------------------------------------------------------------------
# energy functionals
# ---------------------------------------------------------------------------


def _require_history(history) -> tuple[np.ndarray, np.ndarray, float, float]:
    v = np.asarray(history.v, dtype=float)
    u = np.asarray(history.u, dtype=float)
    if v.shape[0] < 4:
        raise ConfigError("diagnostics need at least 3 time steps (second differences)")
    return v, u, float(history.dt), float(history.grid.dx)


def energy(history) -> tuple[np.ndarray, np.ndarray]:
    """The running certification energies (E(t), E1(t)) on the step grid.

    E(t) = sup_{s<=t} [ ||v||^2 + ||v_x||^2 + ||v_t||^2 + ||v_xx||^2
                        + ||v_xt||^2 + ||v_tt||^2 + ||u||^2 + ||u_x||^2
                        + ||u_xx||^2 + ||u_xxx||^2 ](s)
           + int_0^t [ the six v-terms ](s) ds,
    E1(t) drops the v_xx and u parts from the sup and v_xx, v_tt from the
    integral.  Both are non-decreasing by construction.
    """
    v, u, dt, dx = _require_history(history)
    vp, up = _pad(v), _pad(u)
    v_t = time_derivative(v, dt)
    v_tt = time_derivative(v_t, dt)
    vtp, vttp = _pad(v_t), _pad(v_tt)
    vx, vxx = _d1(vp, dx), _d2(vp, dx)
    vxt = _d1(vtp, dx)
    inst_v = (
        _l2sq(vp, dx)
        + _l2sq(vx, dx)
        + _l2sq(vtp, dx)
        + _l2sq(vxx, dx)
        + _l2sq(vxt, dx)
        + _l2sq(vttp, dx)
    )
    inst_u = (
        _l2sq(up, dx) + _l2sq(_d1(up, dx), dx) + _l2sq(_d2(up, dx), dx) + _l2sq(_d3(up, dx), dx)
    )
    total = np.maximum.accumulate(inst_v + inst_u) + cumulative_trapezoid(
        inst_v, dx=dt, initial=0.0
    )
    inst_1 = _l2sq(vp, dx) + _l2sq(vx, dx) + _l2sq(vtp, dx) + _l2sq(vxt, dx) + _l2sq(vttp, dx)
    rate_1 = _l2sq(vp, dx) + _l2sq(vx, dx) + _l2sq(vtp, dx) + _l2sq(vxt, dx)
    partial = np.maximum.accumulate(inst_1) + cumulative_trapezoid(rate_1, dx=dt, initial=0.0)
    return total, partial


def nu(history) -> np.ndarray:
    """Pointwise amplitude nu(t) = sup_{x, s<=t} sqrt(v^2 + v_x^2 + v_t^2)
    + sqrt( int_0^t sup_x v_x^2 ds )."""
    v, _, dt, dx = _require_history(history)
    vp = _pad(v)
    vx = _d1(vp, dx)
    vtp = _pad(time_derivative(v, dt))
    point = np.sqrt(np.max(vp**2 + vx**2 + vtp**2, axis=-1))
    vx_sup_sq = np.max(vx**2, axis=-1)
    return np.maximum.accumulate(point) + np.sqrt(
        cumulative_trapezoid(vx_sup_sq, dx=dt, initial=0.0)
    )


def strain_sup(history) -> np.ndarray:
    """sup_x |u_x(x, t)| per stored step (full grid, one-sided at walls)."""
    _, u, _, dx = _require_history(history)
    return np.max(np.abs(_d1(_pad(u), dx)), axis=-1)


# ---------------------------------------------------------------------------
# data measures
# ---------------------------------------------------------------------------


def _compensated_time_trapezoid(values: np.ndarray, dt: float) -> float:
    weights = np.full(values.shape[0], dt)
    weights[0] = weights[-1] = 0.5 * dt
    return math.fsum((weights * values).tolist())


def data_measures(history, forcing=None) -> tuple[float, float]:
    """(F, V0): the size functionals of the forcing and the initial datum.

    F = sup_t int [ f^2 + f_x^2 + f_t^2 + (int_0^t f)^2 + (int_0^t f_x)^2 ] dx
        + int_0^T int [ f^2 + f_x^2 + f_t^2 + f_tt^2 ] dx dt,
    evaluated over the simulated horizon with compensated time summation;
    V0 = ||v0||^2_{H^2} by difference quotients.
    """
    v, _, dt, dx = _require_history(history)
    grid = history.grid
    v0p = _pad(v[0])
    v_0 = _l2sq(v0p, dx) + _l2sq(_d1(v0p, dx), dx) + _l2sq(_d2(v0p, dx), dx)
    forcing = forcing if forcing is not None else getattr(history, "forcing", None)
    if forcing is None:
        return 0.0, float(v_0)
    x_full = np.concatenate([[0.0], grid.nodes, [grid.length]])
    times = dt * np.arange(v.shape[0])
    f_full = np.stack([np.asarray(forcing(x_full, t), dtype=float) for t in times])
    fx = _d1(f_full, dx)
    f_t = time_derivative(f_full, dt)
    f_tt = time_derivative(f_t, dt)
    running_f = cumulative_trapezoid(f_full, dx=dt, axis=0, initial=0.0)
    running_fx = cumulative_trapezoid(fx, dx=dt, axis=0, initial=0.0)
    sup_part = float(
        np.max(
            _l2sq(f_full, dx)
            + _l2sq(fx, dx)
            + _l2sq(f_t, dx)
            + _l2sq(running_f, dx)
            + _l2sq(running_fx, dx)
        )
    )
    rate = _l2sq(f_full, dx) + _l2sq(fx, dx) + _l2sq(f_t, dx) + _l2sq(f_tt, dx)
    return sup_part + _compensated_time_trapezoid(rate, dt), float(v_0)


# ---------------------------------------------------------------------------
# report assembly and certificates
# ---------------------------------------------------------------------------


@dataclass
class EnergyReport:
    """Per-step certification ledger of one run."""

    times: np.ndarray
    total_energy: np.ndarray  # E(t)
    partial_energy: np.ndarray  # E1(t)
    amplitude: np.ndarray  # nu(t)
    sup_strain: np.ndarray  # sup_x |u_x(., t)|
    forcing_measure: float  # F
    initial_measure: float  # V0
    sobolev: float  # C_Omega
    flags: dict = field(default_factory=dict)

    def rows(self):
        """Per-step rows for CSV streaming."""
        small = self.flags.get("smallness_flags")
        hyper = self.flags.get("hyperbolicity_flags")
        for i, t in enumerate(self.times):
            yield {
                "t": float(t),
                "total_energy": float(self.total_energy[i]),
                "partial_energy": float(self.partial_energy[i]),
                "amplitude": float(self.amplitude[i]),
                "sup_strain": float(self.sup_strain[i]),
                "smallness_ok": bool(small[i]) if small is not None else True,
                "hyperbolicity_ok": bool(hyper[i]) if hyper is not None else True,
            }


def build_report(history, c_omega: Optional[float] = None, forcing=None) -> EnergyReport:
    total, partial = energy(history)
    f_measure, v_measure = data_measures(history, forcing)
    return EnergyReport(
        times=history.dt * np.arange(np.asarray(history.v).shape[0]),
        total_energy=total,
        partial_energy=partial,
        amplitude=nu(history),
        sup_strain=strain_sup(history),
        forcing_measure=f_measure,
        initial_measure=v_measure,
        sobolev=sobolev_constant(history.grid.length) if c_omega is None else float(c_omega),
        flags={},
    )


def check_certificates(
    report: EnergyReport,
    theta: float,
    kernel_at_zero: float,
    damping_slope: float,
    e0_slack: float = 1e-6,
) -> dict:
    """Evaluate the three certification inequalities; flags stored on the report.

    * smallness:      E(t) <= theta^2 / (4 C_Omega^2) at every step,
    * initial energy: E(0) <= 2 [1 + a(0)^2 g'(0)^2] (F + V0),
    * hyperbolicity:  sup_x |u_x| <= theta / 2 at every step,
    plus the implication smallness-up-to-t => hyperbolicity-at-t.
    """
    c2 = report.sobolev**2
    smallness_bound = theta**2 / (4.0 * c2)
    smallness = report.total_energy <= smallness_bound
    e0_bound = 2.0 * (1.0 + kernel_at_zero**2 * damping_slope**2) * (
        report.forcing_measure + report.initial_measure
    )
    e0_value = float(report.total_energy[0])
    e0_ok = e0_value <= e0_bound * (1.0 + e0_slack) + e0_slack
    hyper = report.sup_strain <= 0.5 * theta
    small_so_far = np.logical_and.accumulate(smallness)
    implication = np.all(np.logical_or(~small_so_far, hyper))
    flags = {
        "smallness_ok": bool(np.all(smallness)),
        "hyperbolicity_ok": bool(np.all(hyper)),
        "E0_bound_ok": bool(e0_ok),
        "implication_ok": bool(implication),
        "smallness_bound": float(smallness_bound),
        "E0_value": e0_value,
        "E0_bound": float(e0_bound),
        "smallness_flags": smallness,
        "hyperbolicity_flags": hyper,
    }
    report.flags.update(flags)
    return flags


# ---------------------------------------------------------------------------
# memory-remainder certificates
# ---------------------------------------------------------------------------


def remainder_bounds(
    result: SolverResult,
    kernel: RelaxationKernel,
    damping: DampingFunction,
    at_steps: Optional[np.ndarray] = None,
) -> dict:
    """Pointwise envelope checks on the nonlinear memory remainder.

    Verifies, sample by sample,
        |G(x,t)|   <= K nu(t) (|v_xx(x,.)| * psi)(t)
        |G_t(x,t)| <= K nu(t) [ abar |v_xx(x,t)| + (|v_xx(x,.)| * psi)(t) ]
    with K the damping Lipschitz constant and abar, psi the ramp-weighted
    slope moments of the kernel.  Returns the arrays and boolean outcomes.
    """
    n_steps = result.steps
    if at_steps is None:
        at_steps = np.arange(n_steps + 1)
    at_steps = np.asarray(at_steps, dtype=int)
    g_field = remainder_field(result, kernel, damping, at_steps)
    g_rate = remainder_field_rate(result, kernel, damping, at_steps)
    amp = nu(result)
    weights = memory_remainder_weights(kernel, result.dt * np.arange(n_steps + 1))
    vxx_abs = np.abs(result.vxx())
    conv = trapezoid_convolve(weights.pointwise, vxx_abs, result.dt)
    big_k = float(damping.lipschitz_const)
    envelope_g = big_k * amp[at_steps, None] * conv[at_steps]
    envelope_rate = big_k * amp[at_steps, None] * (
        weights.total * vxx_abs[at_steps] + conv[at_steps]
    )
    # tiny absolute floor: both sides vanish identically on zero data
    floor = 1e-15 * max(1.0, float(np.max(envelope_g, initial=0.0)))
    ok_g = np.all(np.abs(g_field) <= envelope_g + floor)
    ok_rate = np.all(np.abs(g_rate) <= envelope_rate + floor)
    return {
        "steps": at_steps,
        "remainder": g_field,
        "remainder_rate": g_rate,
        "envelope": envelope_g,
        "envelope_rate": envelope_rate,
        "remainder_ok": bool(ok_g),
        "rate_ok": bool(ok_rate),
    }


def slope_deviation_bound(
    result: SolverResult,
    damping: DampingFunction,
    at_step: int,
    order: int = 1,
) -> dict:
    """Check |g^(j)(ubar) - g^(j)(0)| <= K min(nu(t) r0(s), theta) at one step.

    ubar(x, s) = u_x(x, t_k) - u_x(x, t_k - s) over all stored lags s,
    extended by u_x(x, t_k) for s beyond the history (zero past).
    """
    k = int(at_step)
    ux = result.ux()
    lags = result.dt * np.arange(k + 1)
    args = ux[k][None, :] - ux[k::-1]  # lag s = t_k - t_j, rows s = 0..t_k
    dev = np.abs(damping(args, order) - float(damping(0.0, order)))
    amp = float(nu(result)[k])
    big_k = float(damping.lipschitz_const)
    envelope = big_k * np.minimum(amp * ramp_weight(lags), damping.theta)[:, None]
    slack = 1e-12 * max(1.0, float(np.max(envelope)))
    return {
        "deviation": dev,
        "envelope": envelope,
        "ok": bool(np.all(dev <= envelope + slack)),
    }

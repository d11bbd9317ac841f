"""History-dependent shear-flow solver on a 1-D interval.

The model evolves the velocity field v(x, t) with homogeneous Dirichlet
boundary values under

    v_t = d/dx [ int_0^t a'(s) g(u_x(x,t) - u_x(x,t-s)) ds
                 - a(t) g(u_x(x,t)) ] + f,

where u(x,t) = int_0^t v is the accumulated displacement, a is a completely
monotone relaxation kernel and g an odd damping nonlinearity with g' < 0 on
the working window [-theta, theta].  Zero history (u identically 0 before
t = 0) folds the infinite memory into the two terms above.

Discretisation: interior nodes x_i = i dx (i = 1..N, dx = L/(N+1)); strains
at cell midpoints; the bracket is differenced back to nodes (flux form), the
memory integral uses the trapezoid rule over the stored history (the s = 0
term vanishes identically because g(0) = 0 and is never evaluated, which
keeps kernels with ja'(0+)j = infinity usable), and time stepping is the
explicit two-stage Heun scheme with dt restricted by the effective wave
speed sqrt(a(0) |g'(0)|).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError, DivergenceError, HyperbolicityBreach
from .kernels import DampingFunction, RelaxationKernel
from .volterra import InversionOperator, apply_inversion, time_derivative

__all__ = [
    "SpatialGrid",
    "ShearState",
    "SolverResult",
    "StressField",
    "space_first_derivative",
    "space_second_derivative",
    "space_third_derivative",
    "stable_dt",
    "window_threshold",
    "memory_bracket",
    "memory_rhs",
    "step",
    "run",
    "initial_profile",
    "forcing_profile",
    "compute_stress",
    "remainder_field",
    "remainder_field_rate",
    "reconstruct_vxx",
    "reconstruct_uxx",
]


# ---------------------------------------------------------------------------
# grid and spatial derivatives
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpatialGrid:
    """Interval (0, L) with N interior nodes and pinned (v = 0) endpoints."""

    length: float = 1.0
    n_interior: int = 64

    def __post_init__(self) -> None:
        if not self.length > 0.0:
            raise ConfigError("interval length must be positive")
        if self.n_interior < 8:
            raise ConfigError("need at least 8 interior nodes")

    @property
    def dx(self) -> float:
        return self.length / (self.n_interior + 1)

    @property
    def nodes(self) -> np.ndarray:
        """Interior node coordinates."""
        return self.dx * np.arange(1, self.n_interior + 1)

    @property
    def midpoints(self) -> np.ndarray:
        """Cell midpoints (N + 1 of them), where strains live."""
        return self.dx * (np.arange(self.n_interior + 1) + 0.5)


def _pad_zero_boundary(field: np.ndarray) -> np.ndarray:
    """Append the known zero boundary values around interior samples."""
    field = np.asarray(field, dtype=float)
    pad = [(0, 0)] * (field.ndim - 1) + [(1, 1)]
    return np.pad(field, pad)


def space_first_derivative(field: np.ndarray, dx: float) -> np.ndarray:
    """Centered first derivative at interior nodes of a zero-boundary field."""
    p = _pad_zero_boundary(field)
    return (p[..., 2:] - p[..., :-2]) / (2.0 * dx)


def space_second_derivative(field: np.ndarray, dx: float) -> np.ndarray:
    """Centered second derivative at interior nodes of a zero-boundary field."""
    p = _pad_zero_boundary(field)
    return (p[..., 2:] - 2.0 * p[..., 1:-1] + p[..., :-2]) / dx**2


def space_third_derivative(field: np.ndarray, dx: float) -> np.ndarray:
    """Third derivative at interior nodes: central, one-sided next to walls."""
    p = _pad_zero_boundary(field)
    n = field.shape[-1]
    if n < 4:
        raise ConfigError("third derivative needs at least 4 interior nodes")
    out = np.empty_like(np.asarray(field, dtype=float))
    out[..., 1:-1] = (
        -p[..., :-4] + 2.0 * p[..., 1:-3] - 2.0 * p[..., 3:-1] + p[..., 4:]
    ) / (2.0 * dx**3)
    out[..., 0] = (
        -1.5 * p[..., 0] + 5.0 * p[..., 1] - 6.0 * p[..., 2] + 3.0 * p[..., 3] - 0.5 * p[..., 4]
    ) / dx**3
    out[..., -1] = (
        0.5 * p[..., -5] - 3.0 * p[..., -4] + 6.0 * p[..., -3] - 5.0 * p[..., -2] + 1.5 * p[..., -1]
    ) / dx**3
    return out


# ---------------------------------------------------------------------------
# evolving state
# ---------------------------------------------------------------------------


ForcingFn = Callable[[np.ndarray, float], np.ndarray]


@dataclass
class ShearState:
    """Velocity/displacement history on interior nodes.

    ``v[k]`` and ``u[k]`` hold the fields at t_k = k dt for k <= index;
    rows beyond ``index`` are scratch.  u accumulates the trapezoid of v with
    a fixed left-to-right order so reruns are bit-identical.
    """

    grid: SpatialGrid
    dt: float
    v: np.ndarray
    u: np.ndarray
    index: int = 0
    forcing: Optional[ForcingFn] = None
    initial: Optional[np.ndarray] = None

    @classmethod
    def initialize(
        cls,
        grid: SpatialGrid,
        dt: float,
        n_steps: int,
        initial_velocity,
        forcing: Optional[ForcingFn] = None,
        compat_tol: float = 1e-9,
    ) -> "ShearState":
        if not dt > 0.0 or n_steps < 1:
            raise ConfigError("dt must be positive and n_steps >= 1")
        x = grid.nodes
        if callable(initial_velocity):
            v0 = np.asarray(initial_velocity(x), dtype=float)
            ends = np.asarray(
                initial_velocity(np.array([0.0, grid.length])), dtype=float
            )
            scale = max(1.0, float(np.max(np.abs(v0))) if v0.size else 1.0)
            if np.max(np.abs(ends)) > compat_tol * scale:
                raise ConfigError("initial velocity must vanish on the boundary")
        else:
            v0 = np.asarray(initial_velocity, dtype=float)
        if v0.shape != (grid.n_interior,):
            raise ConfigError("initial velocity has the wrong number of nodes")
        if forcing is not None:
            f_ends = np.asarray(forcing(np.array([0.0, grid.length]), 0.0), dtype=float)
            if np.max(np.abs(f_ends)) > compat_tol * max(1.0, float(np.max(np.abs(f_ends)))):
                raise ConfigError("forcing must vanish on the boundary at t = 0")
        v = np.zeros((n_steps + 1, grid.n_interior))
        u = np.zeros_like(v)
        v[0] = v0
        return cls(grid=grid, dt=dt, v=v, u=u, index=0, forcing=forcing, initial=v0.copy())

    @classmethod
    def from_prescribed(cls, grid: SpatialGrid, dt: float, v_field: np.ndarray) -> "ShearState":
        """State with a given velocity history; u rebuilt by the trapezoid rule."""
        v_field = np.asarray(v_field, dtype=float)
        if v_field.ndim != 2 or v_field.shape[1] != grid.n_interior:
            raise ConfigError("prescribed history must be (steps, interior nodes)")
        u = np.zeros_like(v_field)
        half_dt = 0.5 * dt
        for k in range(v_field.shape[0] - 1):
            u[k + 1] = u[k] + half_dt * (v_field[k] + v_field[k + 1])
        return cls(
            grid=grid,
            dt=dt,
            v=v_field.copy(),
            u=u,
            index=v_field.shape[0] - 1,
            initial=v_field[0].copy(),
        )

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.v.shape[0])

    @property
    def time(self) -> float:
        return self.dt * self.index

    def forcing_row(self, k: int) -> np.ndarray:
        if self.forcing is None:
            return np.zeros(self.grid.n_interior)
        return np.asarray(self.forcing(self.grid.nodes, k * self.dt), dtype=float)

    def strain_midpoints(self, rows: slice | int) -> np.ndarray:
        """u_x at cell midpoints (exact first difference of the padded field)."""
        u = _pad_zero_boundary(self.u[rows])
        return np.diff(u, axis=-1) / self.grid.dx


# ---------------------------------------------------------------------------
# memory bracket and right-hand side
# ---------------------------------------------------------------------------


def _window_violation(values: np.ndarray, theta: float):
    flat = int(np.argmax(np.abs(values)))
    worst = float(np.abs(values.reshape(-1)[flat]))
    if worst <= theta:
        return None
    return flat % values.shape[-1], worst


def window_threshold(damping: DampingFunction) -> float:
    """Strain magnitude beyond which hyperbolicity is no longer certified.

    Equal to theta for genuinely nonlinear damping.  A linear law has
    constant negative slope everywhere, so its (conventional) theta does not
    limit the solver and the window is unbounded.
    """
    if damping.curvature_const == 0.0 and not math.isfinite(damping.domain):
        return math.inf
    return float(damping.theta)


def memory_bracket(
    strain_history: np.ndarray,
    k: int,
    dt: float,
    slope_lags: np.ndarray,
    kernel_value: float,
    damping: DampingFunction,
    *,
    time: float = 0.0,
    positions: Optional[np.ndarray] = None,
    clamp: bool = False,
) -> np.ndarray:
    """Memory flux at strain sample points for step k.

    ``strain_history`` holds u_x rows through index k, ``slope_lags[m]`` the
    kernel slope a'(m dt) for m >= 1, ``kernel_value`` a(t_k).  The s = 0
    contribution is identically zero (g(0) = 0) and never touched, the other
    trapezoid endpoint carries weight dt/2.  Raises HyperbolicityBreach when
    any strain argument leaves [-theta, theta] (or clamps when asked to).
    """
    current = strain_history[k]
    theta = window_threshold(damping)
    args = current[None, :] - strain_history[:k] if k > 0 else None
    for block in (args, current[None, :]):
        if block is None:
            continue
        hit = _window_violation(block, theta)
        if hit is not None:
            if clamp:
                continue
            col, worst = hit
            where = float(positions[col]) if positions is not None else float(col)
            raise HyperbolicityBreach(time=time, location=where, value=worst, threshold=theta)
    total = np.zeros_like(current)
    if k > 0:
        if clamp:
            args = np.clip(args, -theta, theta)
        coef = dt * slope_lags[k:0:-1].copy()
        coef[0] *= 0.5
        total = coef @ damping(args)
    head = np.clip(current, -theta, theta) if clamp else current
    return total - kernel_value * damping(head)


def memory_rhs(
    state: ShearState,
    kernel: RelaxationKernel,
    damping: DampingFunction,
    k: Optional[int] = None,
    *,
    slope_lags: Optional[np.ndarray] = None,
    kernel_values: Optional[np.ndarray] = None,
    clamp: bool = False,
) -> np.ndarray:
    """d/dx of the memory bracket plus forcing, at interior nodes."""
    if k is None:
        k = state.index
    dt, dx = state.dt, state.grid.dx
    if slope_lags is None:
        slope_lags = _slope_lag_table(kernel, dt, k)
    if kernel_values is None:
        a_k = float(kernel.eval(k * dt))
    else:
        a_k = float(kernel_values[k])
    strains = state.strain_midpoints(slice(0, k + 1))
    bracket = memory_bracket(
        strains,
        k,
        dt,
        slope_lags,
        a_k,
        damping,
        time=k * dt,
        positions=state.grid.midpoints,
        clamp=clamp,
    )
    return np.diff(bracket) / dx + state.forcing_row(k)


def _slope_lag_table(kernel: RelaxationKernel, dt: float, n_steps: int) -> np.ndarray:
    """a'(m dt) for m = 1..n_steps; entry 0 is never evaluated (g(0) = 0)."""
    table = np.empty(n_steps + 1)
    table[0] = np.nan
    if n_steps >= 1:
        table[1:] = np.atleast_1d(kernel.eval(dt * np.arange(1, n_steps + 1), 1))
    return table


def stable_dt(
    grid: SpatialGrid, kernel: RelaxationKernel, damping: DampingFunction, safety: float = 0.5
) -> float:
    """Explicit-step bound dt <= safety dx / sqrt(a(0) |g'(0)|)."""
    speed = math.sqrt(kernel.value_at_zero * abs(float(damping(0.0, 1))))
    if speed == 0.0:
        raise ConfigError("degenerate wave speed: a(0) g'(0) = 0")
    return safety * grid.dx / speed


# ---------------------------------------------------------------------------
# Prony fast path (linear damping only)
# ---------------------------------------------------------------------------


class _PronyMemory:
    """Per-atom running trapezoid convolutions of the kernel slope.

    Exact reformulation of the direct trapezoid sums for LINEAR damping
    g(y) = slope * y: each exponential atom w e^{-rho t} admits the O(1)
    update T_k = e^{-rho dt} T_{k-1} + (dt/2)(x_k + e^{-rho dt} x_{k-1}),
    so the bracket needs no history walk.  Agreement with the direct engine
    is roundoff-level, not bitwise (different summation order).
    """

    def __init__(self, kernel: RelaxationKernel, dt: float, width: int, slope: float):
        if kernel.has_series_tail:
            raise ConfigError("recursive memory updates need a finite atom list")
        self.rates = kernel.rates
        self.weights = kernel.weights
        self.decay = np.exp(-self.rates * dt)
        self.dt = dt
        self.g_slope = slope
        self.sums = np.zeros((self.rates.size, width))
        self.prev = np.zeros(width)
        # trapezoid of a' over [0, t_k], both end weights included
        self.slope_quad = 0.0
        self.prev_slope_val = float(-np.sum(self.weights * self.rates))

    def advanced(self, x_new: np.ndarray, kernel_slope_new: float):
        """Sums/quadrature advanced one step (returns new arrays, no mutation)."""
        sums = self.decay[:, None] * self.sums + 0.5 * self.dt * (
            x_new[None, :] + self.decay[:, None] * self.prev[None, :]
        )
        quad = self.slope_quad + 0.5 * self.dt * (self.prev_slope_val + kernel_slope_new)
        return sums, quad

    def commit(self, sums: np.ndarray, quad: float, x_new: np.ndarray, slope_val: float) -> None:
        self.sums = sums
        self.slope_quad = quad
        self.prev = x_new.copy()
        self.prev_slope_val = slope_val

    def bracket(self, sums: np.ndarray, quad: float, x_new: np.ndarray, a_now: float) -> np.ndarray:
        conv = -(self.weights * self.rates) @ sums
        return self.g_slope * (x_new * (quad - a_now) - conv)


# ---------------------------------------------------------------------------
# time stepping
# ---------------------------------------------------------------------------


@dataclass
class SolverResult:
    """Completed (or aborted) run: full history plus provenance."""

    grid: SpatialGrid
    dt: float
    times: np.ndarray
    v: np.ndarray
    u: np.ndarray
    termination: str
    kernel_id: str
    damping_name: str
    breach: Optional[dict] = None
    forcing: Optional[ForcingFn] = None
    stats: dict = field(default_factory=dict)

    @property
    def steps(self) -> int:
        return self.v.shape[0] - 1

    def forcing_values(self) -> np.ndarray:
        if self.forcing is None:
            return np.zeros_like(self.v)
        return np.stack(
            [np.asarray(self.forcing(self.grid.nodes, t), dtype=float) for t in self.times]
        )

    def vx(self) -> np.ndarray:
        return space_first_derivative(self.v, self.grid.dx)

    def vxx(self) -> np.ndarray:
        return space_second_derivative(self.v, self.grid.dx)

    def ux(self) -> np.ndarray:
        return space_first_derivative(self.u, self.grid.dx)

    def uxx(self) -> np.ndarray:
        return space_second_derivative(self.u, self.grid.dx)

    def uxxx(self) -> np.ndarray:
        return space_third_derivative(self.u, self.grid.dx)


def step(
    state: ShearState,
    kernel: RelaxationKernel,
    damping: DampingFunction,
    *,
    slope_lags: Optional[np.ndarray] = None,
    kernel_values: Optional[np.ndarray] = None,
    clamp: bool = False,
    divergence_limit: float = math.inf,
) -> None:
    """Advance the state one step with the two-stage explicit scheme."""
    k = state.index
    if k + 1 >= state.v.shape[0]:
        raise ConfigError("state storage exhausted; allocate more steps")
    dt = state.dt
    half_dt = 0.5 * dt
    kwargs = dict(slope_lags=slope_lags, kernel_values=kernel_values, clamp=clamp)
    rate_now = memory_rhs(state, kernel, damping, k, **kwargs)
    # predictor occupies row k+1 so the memory sum sees the trial history
    state.v[k + 1] = state.v[k] + dt * rate_now
    state.u[k + 1] = state.u[k] + half_dt * (state.v[k] + state.v[k + 1])
    if not np.all(np.isfinite(state.v[k + 1])):
        raise DivergenceError(
            f"velocity field exploded at t = {(k + 1) * dt:.6g}", last_valid_time=k * dt
        )
    rate_trial = memory_rhs(state, kernel, damping, k + 1, **kwargs)
    state.v[k + 1] = state.v[k] + half_dt * (rate_now + rate_trial)
    state.u[k + 1] = state.u[k] + half_dt * (state.v[k] + state.v[k + 1])
    state.index = k + 1
    new = state.v[k + 1]
    if not np.all(np.isfinite(new)) or np.max(np.abs(new)) > divergence_limit:
        raise DivergenceError(
            f"velocity field exploded at t = {state.time:.6g}", last_valid_time=k * dt
        )


def _prony_step(state, prony, kernel_values, slope_table, forcing_rows, k, divergence_limit):
    dt = state.dt
    half_dt = 0.5 * dt
    dx = state.grid.dx

    def rhs_from(sums, quad, strain, a_now, f_row):
        bracket = prony.bracket(sums, quad, strain, a_now)
        return np.diff(bracket) / dx + f_row

    strain_k = state.strain_midpoints(k)
    rate_now = rhs_from(prony.sums, prony.slope_quad, strain_k, kernel_values[k], forcing_rows[k])
    state.v[k + 1] = state.v[k] + dt * rate_now
    state.u[k + 1] = state.u[k] + half_dt * (state.v[k] + state.v[k + 1])
    strain_trial = state.strain_midpoints(k + 1)
    sums_trial, quad_trial = prony.advanced(strain_trial, slope_table[k + 1])
    rate_trial = rhs_from(
        sums_trial, quad_trial, strain_trial, kernel_values[k + 1], forcing_rows[k + 1]
    )
    state.v[k + 1] = state.v[k] + half_dt * (rate_now + rate_trial)
    state.u[k + 1] = state.u[k] + half_dt * (state.v[k] + state.v[k + 1])
    strain_new = state.strain_midpoints(k + 1)
    sums_new, quad_new = prony.advanced(strain_new, slope_table[k + 1])
    prony.commit(sums_new, quad_new, strain_new, slope_table[k + 1])
    state.index = k + 1
    new = state.v[k + 1]
    if not np.all(np.isfinite(new)) or np.max(np.abs(new)) > divergence_limit:
        raise DivergenceError(
            f"velocity field exploded at t = {state.time:.6g}", last_valid_time=k * dt
        )


def run(
    grid: SpatialGrid,
    kernel: RelaxationKernel,
    damping: DampingFunction,
    initial_velocity,
    horizon: float,
    forcing: Optional[ForcingFn] = None,
    dt: Optional[float] = None,
    *,
    safety: float = 0.5,
    breach_policy: str = "abort",
    memory_engine: str = "direct",
    divergence_factor: float = 1e9,
) -> SolverResult:
    """Integrate the initial-boundary-value problem on [0, horizon].

    ``dt=None`` picks the stability-bounded step and rounds it down so the
    horizon is hit exactly.  ``breach_policy`` is "abort" (default; raises
    HyperbolicityBreach) or "clamp" (non-conforming: strain arguments are
    clipped to the window and the run continues, flagged).  The "prony"
    memory engine is an exact linear-damping reformulation with O(1)-per-step
    updates; it refuses nonlinear damping.
    """
    if not horizon > 0.0:
        raise ConfigError("horizon must be positive")
    if breach_policy not in ("abort", "clamp"):
        raise ConfigError("breach_policy must be 'abort' or 'clamp'")
    if memory_engine not in ("direct", "prony"):
        raise ConfigError("memory_engine must be 'direct' or 'prony'")
    if dt is None:
        dt = stable_dt(grid, kernel, damping, safety)
    elif not dt > 0.0:
        raise ConfigError("dt must be positive")
    # round the target step down so the horizon is hit exactly
    n_steps = max(1, int(math.ceil(horizon / dt - 1e-12)))
    dt_used = horizon / n_steps
    state = ShearState.initialize(grid, dt_used, n_steps, initial_velocity, forcing)
    scale = max(1.0, float(np.max(np.abs(state.v[0]))))
    limit = divergence_factor * scale
    clamp = breach_policy == "clamp"

    kernel_values = np.atleast_1d(kernel.eval(dt_used * np.arange(n_steps + 1)))
    slope_lags = _slope_lag_table(kernel, dt_used, n_steps)
    termination = "completed"
    was_clamped = False

    if memory_engine == "prony":
        if damping.curvature_const != 0.0:
            raise ConfigError("the recursive memory engine requires linear damping")
        slope = float(damping(0.0, 1))
        prony = _PronyMemory(kernel, dt_used, grid.n_interior + 1, slope)
        slope_table = np.empty(n_steps + 1)
        slope_table[0] = prony.prev_slope_val
        slope_table[1:] = slope_lags[1:]
        forcing_rows = [state.forcing_row(k) for k in range(n_steps + 1)]
        for k in range(n_steps):
            _prony_step(state, prony, kernel_values, slope_table, forcing_rows, k, limit)
    else:
        for k in range(n_steps):
            step(
                state,
                kernel,
                damping,
                slope_lags=slope_lags,
                kernel_values=kernel_values,
                clamp=clamp,
                divergence_limit=limit,
            )
    if clamp:
        # re-scan the realized history for window excursions to flag the run
        win = window_threshold(damping)
        strains = state.strain_midpoints(slice(0, state.index + 1))
        worst = float(np.max(np.abs(strains)))
        for k in range(1, state.index + 1):
            worst = max(worst, float(np.max(np.abs(strains[k][None, :] - strains[:k]))))
            if worst > win:
                break
        if worst > win:
            was_clamped = True
            termination = "completed-clamped"
    return SolverResult(
        grid=grid,
        dt=dt_used,
        times=state.times,
        v=state.v,
        u=state.u,
        termination=termination,
        kernel_id=kernel.fingerprint(),
        damping_name=damping.name,
        breach=None,
        forcing=forcing,
        stats={
            "steps": n_steps,
            "memory_engine": memory_engine,
            "clamped": was_clamped,
            "divergence_limit": limit,
        },
    )


# ---------------------------------------------------------------------------
# built-in initial data and forcing
# ---------------------------------------------------------------------------


def _bump(x: np.ndarray, center: float, width: float, length: float) -> np.ndarray:
    """Gaussian bump minus the chord through its endpoint values (so it
    vanishes exactly at x = 0 and x = L)."""
    raw = np.exp(-((x - center) ** 2) / (2.0 * width**2))
    left = math.exp(-(center**2) / (2.0 * width**2))
    right = math.exp(-((length - center) ** 2) / (2.0 * width**2))
    return raw - (left + (right - left) * x / length)


def _profile_from_csv(path, length: float):
    from scipy.interpolate import CubicSpline

    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] < 2 or data.shape[0] < 8:
        raise ConfigError("profile table needs two columns (x, value) and >= 8 rows")
    x_tab, v_tab = data[:, 0], data[:, 1]
    if not (np.all(np.diff(x_tab) > 0) and x_tab[0] <= 0.0 and x_tab[-1] >= length):
        raise ConfigError("profile table must cover [0, L] with increasing x")
    spline = CubicSpline(x_tab, v_tab)
    scale = max(1.0, float(np.max(np.abs(v_tab))))
    if max(abs(float(spline(0.0))), abs(float(spline(length)))) > 1e-9 * scale:
        raise ConfigError("tabulated profile must vanish at the boundary")
    return lambda x: np.asarray(spline(x), dtype=float)


def initial_profile(
    kind: str = "zero",
    *,
    length: float = 1.0,
    amplitude: float = 1e-3,
    mode: int = 1,
    center: Optional[float] = None,
    width: Optional[float] = None,
    path=None,
) -> Callable[[np.ndarray], np.ndarray]:
    """Named initial-velocity profiles: zero, single-mode, gaussian-bump, table."""
    if kind == "zero":
        return lambda x: np.zeros_like(np.asarray(x, dtype=float))
    if kind == "single-mode":
        if mode < 1:
            raise ConfigError("mode number must be >= 1")
        k_x = mode * math.pi / length
        return lambda x: amplitude * np.sin(k_x * np.asarray(x, dtype=float))
    if kind == "gaussian-bump":
        c = 0.5 * length if center is None else float(center)
        w = 0.1 * length if width is None else float(width)
        if not (0.0 < c < length and w > 0.0):
            raise ConfigError("bump center must lie inside the interval, width > 0")
        return lambda x: amplitude * _bump(np.asarray(x, dtype=float), c, w, length)
    if kind == "table":
        if path is None:
            raise ConfigError("tabulated profile needs a file path")
        base = _profile_from_csv(path, length)
        return lambda x: amplitude * base(np.asarray(x, dtype=float))
    raise ConfigError(f"unknown profile kind: {kind!r}")


def forcing_profile(
    kind: str = "zero",
    *,
    length: float = 1.0,
    amplitude: float = 0.0,
    mode: int = 1,
    center: Optional[float] = None,
    width: Optional[float] = None,
    decay: float = 1.0,
    path=None,
) -> Optional[ForcingFn]:
    """Named forcings f(x, t) = profile(x) e^{-decay t}; ``zero`` is None.

    The exponential envelope keeps the forcing data functional finite.
    """
    if kind == "zero":
        return None
    if decay < 0.0:
        raise ConfigError("forcing decay rate must be >= 0")
    space = initial_profile(
        kind,
        length=length,
        amplitude=amplitude,
        mode=mode,
        center=center,
        width=width,
        path=path,
    )
    return lambda x, t: space(x) * math.exp(-decay * t)


# ---------------------------------------------------------------------------
# stress functional
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StressField:
    """Shear stress history at interior nodes with window bookkeeping."""

    times: np.ndarray
    sigma: np.ndarray
    window_ok: bool
    max_argument: float


def compute_stress(
    result_or_u,
    kernel: RelaxationKernel,
    damping: DampingFunction,
    dt: Optional[float] = None,
    dx: Optional[float] = None,
) -> StressField:
    """sigma(x, t_k) = sum_j weight_j a'(t_k - t_j) g(u_x(t_k) - u_x(t_j))
    - a(t_k) g(u_x(t_k)) at interior nodes.

    Accepts a SolverResult or a raw displacement history (steps, nodes).
    Arguments outside the damping window are evaluated through the exact
    quadrature fallback when the damping function provides one (the
    reptation damping is globally defined); otherwise they are clamped and
    the field is flagged.
    """
    if isinstance(result_or_u, SolverResult):
        u_hist = result_or_u.u
        dt = result_or_u.dt
        dx = result_or_u.grid.dx
    else:
        u_hist = np.asarray(result_or_u, dtype=float)
        if dt is None or dx is None:
            raise ConfigError("raw displacement histories need dt and dx")
    n_steps = u_hist.shape[0] - 1
    strain = space_first_derivative(u_hist, dx)
    slope_lags = _slope_lag_table(kernel, dt, n_steps)
    a_vals = np.atleast_1d(kernel.eval(dt * np.arange(n_steps + 1)))
    direct = damping.direct_eval
    limit = damping.domain  # validity range of the fast evaluators

    def g_of(args: np.ndarray) -> np.ndarray:
        if not math.isfinite(limit):
            return damping(args)
        outside = np.abs(args) > limit
        if not np.any(outside):
            return damping(args)
        vals = damping(np.clip(args, -limit, limit))
        if direct is not None:
            vals = np.where(outside, direct(args), vals)
        return vals

    max_arg = 0.0
    sigma = np.zeros_like(strain)
    for k in range(n_steps + 1):
        cur = strain[k]
        max_arg = max(max_arg, float(np.max(np.abs(cur))) if cur.size else 0.0)
        acc = np.zeros_like(cur)
        if k > 0:
            args = cur[None, :] - strain[:k]
            max_arg = max(max_arg, float(np.max(np.abs(args))))
            coef = dt * slope_lags[k:0:-1].copy()
            coef[0] *= 0.5
            acc = coef @ g_of(args)
        sigma[k] = acc - a_vals[k] * g_of(cur)
    window_ok = max_arg <= window_threshold(damping) or direct is not None
    return StressField(
        times=dt * np.arange(n_steps + 1),
        sigma=sigma,
        window_ok=bool(window_ok),
        max_argument=max_arg,
    )


# ---------------------------------------------------------------------------
# nonlinear memory remainder and its rate
# ---------------------------------------------------------------------------


def _slope_deviation(damping: DampingFunction, args: np.ndarray) -> np.ndarray:
    """g'(y) - g'(0), vectorized."""
    return damping(args, 1) - float(damping(0.0, 1))


def remainder_field(
    result: SolverResult,
    kernel: RelaxationKernel,
    damping: DampingFunction,
    at_steps: Optional[np.ndarray] = None,
) -> np.ndarray:
    """The nonlinear remainder G(x, t) split off the linearized memory term.

    G(x,t) = int_0^t v_xx(x,s) [ int_{t-s}^infty a'(tau)
             (g'(u_x(x,t) - u_x(x,t-tau)) - g'(0)) dtau ] ds;
    the tau-integral beyond t uses the zero-history identity (strain
    difference frozen at u_x(x,t)), giving the closed tail
    -a(t) (g'(u_x(x,t)) - g'(0)).  With linear damping the field vanishes
    identically.
    """
    dt, dx = result.dt, result.grid.dx
    n_steps = result.steps
    if at_steps is None:
        at_steps = np.arange(n_steps + 1)
    ux = result.ux()
    vxx = result.vxx()
    slope_lags = _slope_lag_table(kernel, dt, n_steps)
    a_vals = np.atleast_1d(kernel.eval(dt * np.arange(n_steps + 1)))
    out = np.zeros((len(at_steps), result.grid.n_interior))
    for row, k in enumerate(at_steps):
        k = int(k)
        if k == 0:
            continue
        # E(sigma = t_j) = a'(t_k - t_j) (g'(u_x(t_k) - u_x(t_j)) - g'(0));
        # the j = k row is a'(0) * 0 = 0 and never evaluated
        dev = _slope_deviation(damping, ux[k][None, :] - ux[:k])
        e_rows = np.zeros((k + 1, result.grid.n_interior))
        e_rows[:k] = slope_lags[k:0:-1, None] * dev
        # substituting sigma = t_k - tau turns int over tau in [t_k-t_m, t_k]
        # into the forward cumulative of E over sigma in [0, t_m]
        seg = 0.5 * dt * (e_rows[:-1] + e_rows[1:])
        inner = np.vstack([np.zeros(result.grid.n_interior), np.cumsum(seg, axis=0)])
        tail = -a_vals[k] * _slope_deviation(damping, ux[k])
        inner += tail[None, :]
        w_time = np.full(k + 1, dt)
        w_time[0] = w_time[-1] = 0.5 * dt
        out[row] = np.einsum("m,mx,mx->x", w_time, vxx[: k + 1], inner)
    return out


def remainder_field_rate(
    result: SolverResult,
    kernel: RelaxationKernel,
    damping: DampingFunction,
    at_steps: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Time derivative of the remainder, assembled from its three pieces:

    G_t = v_xx(t) I(t, 0)
          - int_0^t v_xx(s) a'(t-s) [g'(vbar(t-s)) - g'(0)] ds
          + int_0^t v_xx(s) [ int_{t-s}^infty a'(tau) g''(vbar(tau))
                              (v_x(t) - v_x(t-tau)) dtau ] ds,

    with vbar(tau) = u_x(t) - u_x(t-tau) frozen at u_x(t) for tau >= t and
    v_x(t-tau) = 0 there (zero history).
    """
    dt = result.dt
    n_steps = result.steps
    if at_steps is None:
        at_steps = np.arange(n_steps + 1)
    ux = result.ux()
    vx = result.vx()
    vxx = result.vxx()
    slope_lags = _slope_lag_table(kernel, dt, n_steps)
    a_vals = np.atleast_1d(kernel.eval(dt * np.arange(n_steps + 1)))
    g1_0 = float(damping(0.0, 1))
    out = np.zeros((len(at_steps), result.grid.n_interior))
    for row, k in enumerate(at_steps):
        k = int(k)
        if k == 0:
            continue
        dev = damping(ux[k][None, :] - ux[:k], 1) - g1_0
        e_rows = slope_lags[k:0:-1, None] * dev  # j = 0..k-1
        # (1) boundary term: v_xx(t) I(t, 0)
        w_in = np.full(k + 1, dt)
        w_in[0] = w_in[-1] = 0.5 * dt
        full_integral = np.einsum("m,mx->x", w_in[:k], e_rows) - a_vals[k] * (
            damping(ux[k], 1) - g1_0
        )
        term1 = vxx[k] * full_integral
        # (2) -int v_xx(s) a'(t-s) [g'(vbar(t-s)) - g'(0)] ds, s-grid = t_j
        w_time = np.full(k + 1, dt)
        w_time[0] = w_time[-1] = 0.5 * dt
        term2 = -np.einsum("m,mx,mx->x", w_time[:k], vxx[:k], e_rows)
        # (3) curvature term with the same forward-cumulative structure
        curv = damping(ux[k][None, :] - ux[:k], 2)
        rate_diff = vx[k][None, :] - vx[:k]
        c_rows = np.zeros((k + 1, result.grid.n_interior))
        c_rows[:k] = slope_lags[k:0:-1, None] * curv * rate_diff
        seg = 0.5 * dt * (c_rows[:-1] + c_rows[1:])
        inner = np.vstack([np.zeros(result.grid.n_interior), np.cumsum(seg, axis=0)])
        tail = -a_vals[k] * damping(ux[k], 2) * vx[k]
        inner += tail[None, :]
        term3 = np.einsum("m,mx,mx->x", w_time, vxx[: k + 1], inner)
        out[row] = term1 + term2 + term3
    return out


# ---------------------------------------------------------------------------
# reconstruction identities
# ---------------------------------------------------------------------------


def _check_operator(result: SolverResult, op: InversionOperator, kernel: RelaxationKernel):
    if op.kernel_id and op.kernel_id != kernel.fingerprint():
        raise ConfigError("inversion operator was built for a different kernel")
    if abs(op.dt - result.dt) > 1e-12 * result.dt:
        raise ConfigError("inversion operator grid step does not match the run")
    if op.deriv_kernel.shape[0] < result.v.shape[0]:
        raise ConfigError("inversion operator window is shorter than the run")


def reconstruct_vxx(
    result: SolverResult,
    op: InversionOperator,
    kernel: RelaxationKernel,
    damping: DampingFunction,
) -> np.ndarray:
    """Recover v_xx from the evolution identity by inverting the kernel.

    The run satisfies v_t = g'(0) (a * v_xx) + G + f, so with
    l = (f + G - v_t)/g'(0) the resolvent pair returns v_xx = l'/a(0)
    + deriv_kernel * l' + value_kernel * l.  Derivatives in time come from
    second-order differences over the stored history.
    """
    _check_operator(result, op, kernel)
    g1_0 = float(damping(0.0, 1))
    f_vals = result.forcing_values()
    g_vals = remainder_field(result, kernel, damping)
    v_t = time_derivative(result.v, result.dt)
    v_tt = time_derivative(v_t, result.dt)
    f_t = time_derivative(f_vals, result.dt)
    g_t = remainder_field_rate(result, kernel, damping)
    values = (f_vals + g_vals - v_t) / g1_0
    rate = (f_t + g_t - v_tt) / g1_0
    return apply_inversion(op, values, rate=rate)


def reconstruct_uxx(
    result: SolverResult,
    op: InversionOperator,
    kernel: RelaxationKernel,
    damping: DampingFunction,
) -> np.ndarray:
    """Recover u_xx by the time-integrated variant of the same identity.

    Integrating v_t = g'(0)(a * v_xx) + G + f from 0 and using u_xx(0) = 0
    gives a * u_xx = [int_0^t (f + G) - v + v(0)]/g'(0), inverted with the
    same resolvent pair.
    """
    from scipy.integrate import cumulative_trapezoid

    _check_operator(result, op, kernel)
    g1_0 = float(damping(0.0, 1))
    f_vals = result.forcing_values()
    g_vals = remainder_field(result, kernel, damping)
    rate = (f_vals + g_vals - time_derivative(result.v, result.dt)) / g1_0
    accumulated = cumulative_trapezoid(f_vals + g_vals, dx=result.dt, axis=0, initial=0.0)
    values = (accumulated - result.v + result.v[0][None, :]) / g1_0
    return apply_inversion(op, values, rate=rate)

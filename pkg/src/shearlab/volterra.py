"""Discrete Volterra machinery on uniform time grids.

Everything here works on samples over the uniform grid t_k = k * dt starting
at zero: trapezoid-rule causal convolution, the quadratic memory form, finite
differences, weighted norms, and the application of a precomputed resolvent
pair that inverts a first-kind convolution operator

    (B w)(t) = int_0^t b(t - s) w(s) ds = l(t)

through

    w = l' / b(0) + (deriv_kernel * l') + (value_kernel * l).

The resolvent samples themselves are produced in :mod:`shearlab.spectral`;
this module only applies them, so it stays import-light.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.signal import fftconvolve

from .errors import ConfigError

__all__ = [
    "TimeSignal",
    "InversionOperator",
    "trapezoid_convolve",
    "time_derivative",
    "shift_difference",
    "trapezoid_norm",
    "memory_qform",
    "apply_inversion",
    "forward_residual",
]


# ---------------------------------------------------------------------------
# signals
# ---------------------------------------------------------------------------


@dataclass
class TimeSignal:
    """Samples of a causal signal on the uniform grid k * dt, k = 0..N.

    ``values`` may be 1-D (a scalar signal) or 2-D with time along axis 0
    (one column per spatial node).
    """

    values: np.ndarray
    dt: float

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim not in (1, 2) or self.values.shape[0] < 2:
            raise ConfigError("signal needs >= 2 samples with time along axis 0")
        if not self.dt > 0.0:
            raise ConfigError("dt must be positive")

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.values.shape[0])

    @property
    def duration(self) -> float:
        return self.dt * (self.values.shape[0] - 1)

    def derivative(self) -> "TimeSignal":
        return TimeSignal(time_derivative(self.values, self.dt), self.dt)

    def antiderivative(self) -> "TimeSignal":
        from scipy.integrate import cumulative_trapezoid

        return TimeSignal(
            cumulative_trapezoid(self.values, dx=self.dt, axis=0, initial=0.0), self.dt
        )


# ---------------------------------------------------------------------------
# discrete calculus
# ---------------------------------------------------------------------------


def trapezoid_convolve(kernel: np.ndarray, signal: np.ndarray, dt: float) -> np.ndarray:
    """Trapezoid-rule causal convolution sampled on the signal's grid.

    Returns c with c_k = dt * (sum_{j=0}^{k} kernel_j signal_{k-j}
    - kernel_0 signal_k / 2 - kernel_k signal_0 / 2), the trapezoid rule for
    int_0^{t_k} kernel(s) signal(t_k - s) ds.  ``signal`` may be 2-D with time
    along axis 0; ``kernel`` must be 1-D and at least as long as the signal.
    """
    kernel = np.asarray(kernel, dtype=float)
    signal = np.asarray(signal, dtype=float)
    if kernel.ndim != 1:
        raise ConfigError("convolution kernel must be one-dimensional")
    n = signal.shape[0]
    if kernel.shape[0] < n:
        raise ConfigError("convolution kernel has fewer samples than the signal")
    if not dt > 0.0:
        raise ConfigError("dt must be positive")
    head = kernel[:n]
    if signal.ndim == 1:
        if n <= 4096:
            full = np.convolve(head, signal)[:n]
        else:
            full = fftconvolve(head, signal)[:n]
    elif signal.ndim == 2:
        full = fftconvolve(head[:, None], signal, axes=0)[:n]
    else:
        raise ConfigError("signal must be 1-D or 2-D with time along axis 0")
    end_corr = head[: n].reshape((n,) + (1,) * (signal.ndim - 1))
    return dt * (full - 0.5 * kernel[0] * signal - 0.5 * end_corr * signal[0])


def time_derivative(signal: np.ndarray, dt: float) -> np.ndarray:
    """Second-order derivative in time: centered interior, one-sided ends."""
    signal = np.asarray(signal, dtype=float)
    if signal.shape[0] < 3:
        raise ConfigError("derivative needs >= 3 samples")
    return np.gradient(signal, dt, axis=0, edge_order=2)


def shift_difference(signal: np.ndarray, steps: int) -> np.ndarray:
    """signal(t + steps * dt) - signal(t) on the overlap (length N + 1 - steps)."""
    signal = np.asarray(signal, dtype=float)
    if not 1 <= steps < signal.shape[0]:
        raise ConfigError("shift must satisfy 1 <= steps <= N")
    return signal[steps:] - signal[:-steps]


def trapezoid_norm(signal: np.ndarray, dt: float, p: float = 2) -> float:
    """Trapezoid-weighted L^p norm in time (p in {1, 2, inf}).

    2-D signals are treated as l^2 vectors at each time (Bochner norm with the
    Euclidean norm in the second axis), which matches how the solver stores
    space-time fields before the spatial quadrature weight is applied.
    """
    signal = np.asarray(signal, dtype=float)
    if signal.ndim == 2:
        pointwise = np.sqrt(np.sum(signal**2, axis=1))
    else:
        pointwise = np.abs(signal)
    if p == np.inf:
        return float(np.max(pointwise))
    if p == 1:
        return float(np.trapezoid(pointwise, dx=dt))
    if p == 2:
        return float(np.sqrt(np.trapezoid(pointwise**2, dx=dt)))
    raise ConfigError("supported norms: p = 1, 2 or inf")


# ---------------------------------------------------------------------------
# quadratic memory form
# ---------------------------------------------------------------------------


def memory_qform(signal: np.ndarray, kernel_samples: np.ndarray, dt: float) -> float:
    """Q = int_0^T w(t) (b * w)(t) dt with trapezoid rules throughout.

    For kernels of strongly positive type this is bounded below by a positive
    multiple of the L^2 norm of the running average of w, hence nonnegative
    up to discretisation error.  2-D signals are summed over the second axis
    (each column contributes its own quadratic form).
    """
    signal = np.asarray(signal, dtype=float)
    conv = trapezoid_convolve(kernel_samples, signal, dt)
    integrand = signal * conv
    if integrand.ndim == 2:
        integrand = np.sum(integrand, axis=1)
    return float(np.trapezoid(integrand, dx=dt))


# ---------------------------------------------------------------------------
# resolvent application
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InversionOperator:
    """Precomputed resolvent pair for a first-kind convolution operator.

    Applying the operator recovers w from l = (b * w) via

        w = l' / value_at_zero + deriv_kernel * l' + value_kernel * l,

    where ``deriv_kernel`` collects the first ``power - 1`` alternating
    iterated self-convolutions of b' and ``value_kernel`` is the remaining
    Fourier-inverted correction of order ``power``.  Both are sampled on the
    uniform grid k * dt, k = 0..N.
    """

    value_at_zero: float
    power: int
    dt: float
    deriv_kernel: np.ndarray
    value_kernel: np.ndarray
    kernel_samples: Optional[np.ndarray] = None
    kernel_id: str = ""
    omega_max: float = 0.0
    tail_bound: float = 0.0
    deriv_l1: float = 0.0
    value_l1: float = 0.0
    positivity_floor: float = 0.0
    notes: dict = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.deriv_kernel.shape[0])

    @property
    def gain_bound(self) -> float:
        """Crude operator-norm bound: growth factor from l to w (rate part)."""
        return 1.0 / abs(self.value_at_zero) + self.deriv_l1


def apply_inversion(
    op: InversionOperator,
    values: np.ndarray,
    rate: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Recover w from l = (b * w) sampled on the operator's grid.

    ``values`` holds l; ``rate`` optionally holds l' (computed by one-sided /
    centered second-order differences when omitted).  Both may be 2-D with
    time along axis 0.
    """
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    if n > op.deriv_kernel.shape[0]:
        raise ConfigError("inversion operator was built on a shorter grid than the data")
    if rate is None:
        rate = time_derivative(values, op.dt)
    else:
        rate = np.asarray(rate, dtype=float)
        if rate.shape != values.shape:
            raise ConfigError("rate samples must match the value samples in shape")
    out = rate / op.value_at_zero
    out += trapezoid_convolve(op.deriv_kernel, rate, op.dt)
    out += trapezoid_convolve(op.value_kernel, values, op.dt)
    return out


def forward_residual(
    kernel_samples: np.ndarray, w: np.ndarray, values: np.ndarray, dt: float
) -> float:
    """Relative L^2 defect of the forward convolution: ||b * w - l|| / ||l||."""
    w = np.asarray(w, dtype=float)
    values = np.asarray(values, dtype=float)
    defect = trapezoid_convolve(kernel_samples, w, dt) - values
    denom = max(trapezoid_norm(values, dt, 2), np.finfo(float).tiny)
    return trapezoid_norm(defect, dt, 2) / denom


# ---------------------------------------------------------------------------
# TimeSignal-level wrappers
# ---------------------------------------------------------------------------


def _kernel_samples_for(kernel, times: np.ndarray) -> np.ndarray:
    """Samples of a memory kernel on a time grid; accepts arrays or kernels."""
    if hasattr(kernel, "eval"):
        return np.atleast_1d(np.asarray(kernel.eval(times), dtype=float))
    return np.asarray(kernel, dtype=float)


def convolve(kernel, signal: TimeSignal) -> TimeSignal:
    """(b * w) on the signal's grid; ``kernel`` is samples or a RelaxationKernel."""
    samples = _kernel_samples_for(kernel, signal.times)
    return TimeSignal(trapezoid_convolve(samples, signal.values, signal.dt), signal.dt)


def qform(signal: TimeSignal, horizon: float, kernel, dx: Optional[float] = None) -> float:
    """Q(w, t, b) = int_0^t int w (b * w) dx ds, truncated at the horizon.

    1-D signals skip the spatial integral.  2-D signals (time along axis 0)
    are integrated over space first with the trapezoid rule at spacing ``dx``
    (their columns must include any boundary samples they mean to count).
    """
    n_keep = int(np.floor(horizon / signal.dt + 1e-9)) + 1
    if not 2 <= n_keep <= signal.values.shape[0]:
        raise ConfigError("q-form horizon must lie inside the sampled range")
    vals = signal.values[:n_keep]
    times = signal.times[:n_keep]
    samples = _kernel_samples_for(kernel, times)
    conv = trapezoid_convolve(samples, vals, signal.dt)
    integrand = vals * conv
    if integrand.ndim == 2:
        if dx is None:
            raise ConfigError("space-time q-form needs the spatial step dx")
        integrand = np.trapezoid(integrand, dx=dx, axis=1)
    return float(np.trapezoid(integrand, dx=signal.dt))


def lagged_difference(signal: TimeSignal, lag: float) -> TimeSignal:
    """w(t + lag) - w(t) with the lag validated as a whole number of steps."""
    steps_float = lag / signal.dt
    steps = int(round(steps_float))
    if abs(steps_float - steps) > 1e-9 * max(1.0, abs(steps_float)):
        raise ConfigError("lag must be an integer multiple of the grid step")
    return TimeSignal(shift_difference(signal.values, steps), signal.dt)


def invert(op: InversionOperator, signal: TimeSignal, return_residual: bool = False):
    """Solve b * w = l for w on the grid via the resolvent pair.

    The data must respect the support condition l(0) = 0.  With
    ``return_residual`` (and an operator that stored its kernel samples) the
    relative forward defect ||b * w - l|| / ||l|| is returned alongside w.
    """
    vals = signal.values
    scale = max(1.0, float(np.max(np.abs(vals))))
    if np.max(np.abs(np.atleast_1d(vals[0]))) > 1e-9 * scale:
        raise ConfigError("inversion input must vanish at t = 0 (causal support)")
    if abs(signal.dt - op.dt) > 1e-12 * op.dt:
        raise ConfigError("signal grid step does not match the operator grid")
    w = TimeSignal(apply_inversion(op, vals), signal.dt)
    if not return_residual:
        return w
    if op.kernel_samples is None:
        raise ConfigError("operator was built without kernel samples; no forward check")
    res = forward_residual(op.kernel_samples[: vals.shape[0]], w.values, vals, signal.dt)
    return w, res

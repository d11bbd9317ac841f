"""Constitutive ingredients: relaxation kernels and damping functions.

A relaxation kernel is a completely monotone function

    a(t) = sum_i w_i * exp(-rho_i * t),        w_i > 0, rho_i > 0,

i.e. the Laplace transform of a positive atomic measure on (0, infinity).
The reptation (Doi-Edwards) kernel is the generated family with atoms
rho_k = (2k+1)^2, w_k = (2k+1)^{-2}, k >= 1; its defining series is summed
with an Euler-Maclaurin tail estimate so evaluations meet a documented
absolute tolerance even though millions of atoms are materialised.

A damping function g is an odd, smooth, strictly decreasing-at-the-origin
nonlinearity applied to accumulated shear strain.  The reptation damping
function is the sphere integral

    g(y) = - int_{S^2} u1*u2 * [(u1 - u2*y)^2 + u2^2 + u3^2]^{-3/2} dS(u),

evaluated with a product Gauss-Legendre (polar cosine) x uniform (azimuth)
rule; derivatives up to third order use the analytically differentiated
integrand under the same rule.

All evaluators are vectorised over numpy arrays and deterministic.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import chebyshev as _cheb
from scipy import special

from .errors import AccuracyError, ConfigError, HypothesisError

__all__ = [
    "MeasureSpec",
    "RelaxationKernel",
    "DampingFunction",
    "DampingConstants",
    "MeasureHypothesesReport",
    "RemainderWeights",
    "doi_edwards_measure",
    "doi_edwards_kernel",
    "doi_edwards_damping_value",
    "doi_edwards_damping",
    "linear_damping",
    "damping_from_callables",
    "damping_from_table",
    "estimate_damping_constants",
    "check_measure_hypotheses",
    "memory_remainder_weights",
    "ramp_weight",
    "smoothness_integrals",
]

# Atoms of a generated family are materialised down to this weight; the
# remaining series tail is handled analytically (Euler-Maclaurin).
DEFAULT_WEIGHT_FLOOR = 1e-14

# Default absolute tolerance for series evaluation including the tail.
DEFAULT_SERIES_TOL = 1e-12


# ---------------------------------------------------------------------------
# Measures and relaxation kernels
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MeasureSpec:
    """Positive atomic measure sum_i w_i * delta_{rho_i} on (0, infinity).

    ``family`` is ``None`` for an explicit atom list, or ``"doi-edwards"``
    for the generated reptation family (atoms are then materialised lazily
    by :class:`RelaxationKernel`).  ``gamma`` in (0, 1) is the fractional
    moment exponent used by the measure hypotheses check.
    """

    rates: np.ndarray | None
    weights: np.ndarray | None
    family: str | None = None
    gamma: float = 0.25
    weight_floor: float = DEFAULT_WEIGHT_FLOOR

    @staticmethod
    def from_atoms(atoms: Sequence[tuple[float, float]], gamma: float = 0.25) -> "MeasureSpec":
        """Explicit measure from (rate, weight) pairs; validates positivity."""
        arr = np.asarray(atoms, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] == 0:
            raise ConfigError("atoms must be a non-empty sequence of (rate, weight) pairs")
        rates, weights = arr[:, 0].copy(), arr[:, 1].copy()
        if not np.all(np.isfinite(rates)) or not np.all(np.isfinite(weights)):
            raise ConfigError("atom rates and weights must be finite")
        if np.any(rates <= 0.0):
            raise ConfigError("atom rates must be strictly positive")
        if np.any(weights <= 0.0):
            raise ConfigError("atom weights must be strictly positive")
        if not 0.0 < gamma < 1.0:
            raise ConfigError("gamma must lie in (0, 1)")
        order = np.argsort(rates, kind="stable")
        return MeasureSpec(rates=rates[order], weights=weights[order], gamma=gamma)

    @staticmethod
    def doi_edwards(gamma: float = 0.25, weight_floor: float = DEFAULT_WEIGHT_FLOOR) -> "MeasureSpec":
        """Generated reptation family: rho_k = (2k+1)^2, w_k = (2k+1)^{-2}."""
        if not 0.0 < gamma < 1.0:
            raise ConfigError("gamma must lie in (0, 1)")
        if not 0.0 < weight_floor < 1.0:
            raise ConfigError("weight_floor must lie in (0, 1)")
        return MeasureSpec(rates=None, weights=None, family="doi-edwards",
                           gamma=gamma, weight_floor=weight_floor)


def _de_materialise(weight_floor: float, rate_cutoff: float | None) -> tuple[np.ndarray, np.ndarray, int | None]:
    """Atoms of the reptation family.

    Returns (rates, weights, next_k) where next_k is the first index NOT
    materialised (None when a finite rate cutoff makes the list exact).
    """
    if rate_cutoff is not None:
        # keep atoms with rho < cutoff: (2k+1)^2 < n
        k_max = int(math.floor((math.sqrt(max(rate_cutoff, 0.0)) - 1.0) / 2.0))
        if k_max < 1:
            raise ConfigError("rate cutoff retains no atoms of the generated family")
        k = np.arange(1, k_max + 1, dtype=float)
        odd = 2.0 * k + 1.0
        # guard against floating point landing exactly on the cutoff
        rates = odd**2
        keep = rates < rate_cutoff
        if not np.any(keep):
            raise ConfigError("rate cutoff retains no atoms of the generated family")
        return rates[keep], odd[keep] ** -2.0, None
    # weight >= floor: (2k+1)^{-2} >= floor
    k_max = int(math.floor((weight_floor**-0.5 - 1.0) / 2.0))
    k = np.arange(1, k_max + 1, dtype=float)
    odd = 2.0 * k + 1.0
    return odd**2, odd**-2.0, k_max + 1


def _de_tail_term(x: float, t: float, order: int) -> float:
    """|series term| as a function of continuous index x: (2x+1)^{2m-2} e^{-(2x+1)^2 t}."""
    o = 2.0 * x + 1.0
    return o ** (2 * order - 2) * math.exp(-o * o * t)


def _de_tail_term_deriv(x: float, t: float, order: int) -> float:
    """d/dx of :func:`_de_tail_term`."""
    o = 2.0 * x + 1.0
    return _de_tail_term(x, t, order) * (2.0 * (2 * order - 2) / o - 4.0 * t * o)


def _de_tail_integral(o0: float, t: float, order: int) -> float:
    """int_{x0}^inf (2x+1)^{2m-2} e^{-(2x+1)^2 t} dx with o0 = 2*x0 + 1, exactly.

    Substituting z = (2x+1)^2 t turns the integral into
    (1/4) t^{-(2m-1)/2} Gamma((2m-1)/2, o0^2 t), written below in erfc form.
    """
    if t == 0.0:
        if order == 0:
            return 1.0 / (2.0 * o0)
        raise AccuracyError(
            "derivative series of the generated family diverges at t = 0",
            achieved=math.inf,
        )
    z0 = o0 * o0 * t
    sz = math.sqrt(z0)
    ez = math.exp(-z0) if z0 < 745.0 else 0.0
    erfc = special.erfc(sz)
    sqrt_pi = math.sqrt(math.pi)
    if order == 0:
        # Gamma(-1/2, z) = 2 z^{-1/2} e^{-z} - 2 sqrt(pi) erfc(sqrt(z))
        return ez / (2.0 * o0) - 0.5 * math.sqrt(math.pi * t) * erfc
    if order == 1:
        return 0.25 * t**-0.5 * sqrt_pi * erfc
    if order == 2:
        gam = 0.5 * sqrt_pi * erfc + sz * ez
        return 0.25 * t**-1.5 * gam
    gam32 = 0.5 * sqrt_pi * erfc + sz * ez
    gam52 = 1.5 * gam32 + z0 * sz * ez
    return 0.25 * t**-2.5 * gam52


def _de_tail(next_k: int, t: float, order: int) -> tuple[float, float]:
    """Euler-Maclaurin estimate of sum_{k >= next_k} (2k+1)^{2m-2} e^{-(2k+1)^2 t}.

    Returns (estimate, error_bound).  The midpoint Euler-Maclaurin formula
    gives  sum_{k>=K} f(k) = int_{K-1/2}^inf f + f'(K-1/2)/24 + O(f''').
    """
    x0 = next_k - 0.5
    if order >= 1 and t <= 0.0:
        raise AccuracyError(
            "derivative series of the generated family diverges at t = 0",
            achieved=math.inf,
        )
    val = _de_tail_integral(2.0 * x0 + 1.0, t, order)
    corr = _de_tail_term_deriv(x0, t, order) / 24.0
    # third-derivative magnitude via second difference of f'
    h = 0.5
    f3 = (
        _de_tail_term_deriv(x0 + h, t, order)
        - 2.0 * _de_tail_term_deriv(x0, t, order)
        + _de_tail_term_deriv(x0 - h, t, order)
    ) / h**2
    bound = 7.0 / 5760.0 * abs(f3)
    return val + corr, bound


class RelaxationKernel:
    """Materialised completely monotone kernel a(t) = sum w_i exp(-rho_i t).

    Parameters
    ----------
    measure : MeasureSpec
        Atom description (explicit list or generated family).
    truncation_n : float or None
        Rate cutoff: atoms with rho < n are retained.  ``None`` keeps the
        full family (generated families then carry an analytic series tail).
    series_tol : float
        Absolute tolerance the series evaluation (atoms + tail estimate)
        must meet; violating it raises :class:`AccuracyError`.
    """

    def __init__(self, measure: MeasureSpec, truncation_n: float | None = None,
                 series_tol: float = DEFAULT_SERIES_TOL):
        self.measure = measure
        self.truncation_n = None if truncation_n is None else float(truncation_n)
        self.series_tol = float(series_tol)
        if measure.family == "doi-edwards":
            self.rates, self.weights, self._next_k = _de_materialise(
                measure.weight_floor, self.truncation_n)
        elif measure.family is None:
            if measure.rates is None or measure.weights is None:
                raise ConfigError("explicit measure has no atoms")
            rates, weights = measure.rates, measure.weights
            if self.truncation_n is not None:
                keep = rates < self.truncation_n
                if not np.any(keep):
                    raise ConfigError("rate cutoff retains no atoms")
                rates, weights = rates[keep], weights[keep]
            self.rates, self.weights, self._next_k = rates, weights, None
        else:
            raise ConfigError(f"unknown measure family: {measure.family!r}")
        # derived caches
        self.value_at_zero = float(self.eval(0.0))
        self.l1_norm = self._l1_norm()
        self.l1_norm_slope = self.value_at_zero  # int |a'| = a(0) - a(inf) = a(0)
        self.ramp_moment = self._ramp_moment()

    # -- evaluation ---------------------------------------------------------

    @property
    def has_series_tail(self) -> bool:
        return self._next_k is not None

    @property
    def atom_count(self) -> int:
        return int(self.rates.size)

    def eval(self, t, order: int = 0):
        """Evaluate the order-th derivative, sum_i w_i (-rho_i)^m e^{-rho_i t}.

        For a generated family kept without rate cutoff an Euler-Maclaurin
        tail estimate is added and its error bound checked against
        ``series_tol``.  ``t`` may be a scalar or an array; t < 0 is a
        domain error, and derivative orders >= 1 of the full generated
        family diverge at t = 0 (AccuracyError).
        """
        if order not in (0, 1, 2, 3):
            raise ValueError("derivative order must be 0, 1, 2 or 3")
        t_arr = np.asarray(t, dtype=float)
        scalar = t_arr.ndim == 0
        t_flat = np.atleast_1d(t_arr).astype(float)
        if np.any(t_flat < 0.0) or not np.all(np.isfinite(t_flat)):
            raise ValueError("kernel evaluation requires finite t >= 0")
        sign = (-1.0) ** order
        out = np.empty_like(t_flat)
        # largest exponent that still contributes at double precision
        log_cut = 745.0
        for i, ti in enumerate(t_flat):
            if ti == 0.0:
                if order >= 1 and self.has_series_tail:
                    raise AccuracyError(
                        "derivative series of the generated family diverges at t = 0",
                        achieved=math.inf,
                    )
                active = slice(None)
            else:
                # atoms with rho*t > log_cut underflow to zero exactly
                hi = np.searchsorted(self.rates, log_cut / ti, side="right")
                active = slice(0, int(hi))
            r = self.rates[active]
            w = self.weights[active]
            acc = float(np.sum(w * r**order * np.exp(-r * ti))) if r.size else 0.0
            if self.has_series_tail:
                tail_cut = log_cut / (2.0 * self._next_k + 1.0) ** 2
                if ti <= tail_cut:
                    est, bound = _de_tail(self._next_k, ti, order)
                    if bound > self.series_tol:
                        raise AccuracyError(
                            "series tail estimate exceeds the requested tolerance",
                            achieved=bound,
                        )
                    acc += est
            out[i] = sign * acc
        return float(out[0]) if scalar else out.reshape(t_arr.shape)

    def __call__(self, t, order: int = 0):
        return self.eval(t, order)

    # -- derived quantities --------------------------------------------------

    def _l1_norm(self) -> float:
        """int_0^inf a = sum w/rho (tail of the generated family ~ (2K)^-3)."""
        val = float(np.sum(self.weights / self.rates))
        if self.has_series_tail:
            o = 2.0 * (self._next_k - 0.5) + 1.0
            val += 1.0 / (6.0 * o**3)  # int_{K-1/2}^inf (2x+1)^{-4} dx
        return val

    def _ramp_moment(self) -> float:
        """a-bar = int_0^inf |a'(s)| min(s, sqrt(s)) ds via per-atom closed forms."""
        r, w = self.rates, self.weights
        return float(np.sum(w * r * (_int_ramp_unit(r) + _int_sqrt_tail(r, 1.0))))

    def truncate(self, n: float) -> "RelaxationKernel":
        """New kernel keeping atoms with rate < n."""
        return RelaxationKernel(self.measure, truncation_n=n, series_tol=self.series_tol)

    def fingerprint(self) -> str:
        """Stable identifier of the materialised atom list (for cache checks)."""
        import hashlib

        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.rates).tobytes())
        h.update(np.ascontiguousarray(self.weights).tobytes())
        return h.hexdigest()[:16]

    def write_csv(self, path, t_grid, orders: Sequence[int] = (0, 1, 2)) -> None:
        """Sampled kernel derivatives as CSV columns t, a0, a1, ..."""
        t_grid = np.asarray(t_grid, dtype=float)
        cols = [t_grid] + [np.atleast_1d(self.eval(t_grid, m)) for m in orders]
        header = "t," + ",".join(f"a{m}" for m in orders)
        data = np.column_stack(cols)
        np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.17g")

    def __repr__(self) -> str:  # pragma: no cover - cosmetic
        fam = self.measure.family or "atoms"
        cut = "full" if self.truncation_n is None else f"n={self.truncation_n:g}"
        return f"RelaxationKernel({fam}, {cut}, atoms={self.atom_count})"


def doi_edwards_measure(gamma: float = 0.25) -> MeasureSpec:
    return MeasureSpec.doi_edwards(gamma=gamma)


def doi_edwards_kernel(truncation_n: float | None = None, gamma: float = 0.25) -> RelaxationKernel:
    """Reptation kernel, optionally truncated at rate cutoff n."""
    return RelaxationKernel(MeasureSpec.doi_edwards(gamma=gamma), truncation_n=truncation_n)


# ---------------------------------------------------------------------------
# Measure hypotheses
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MeasureHypothesesReport:
    """Result of the two moment checks on the atomic measure.

    ``inverse_square_moment`` is sum w * rho^{-2}; ``fractional_moment`` is
    sum w * rho^{gamma}.  For the generated reptation family the verdicts
    come from the analytic tail comparison (the k-th term behaves like
    k^{-6} resp. k^{2*gamma-2}), so the fractional moment converges exactly
    when gamma < 1/2.
    """

    inverse_square_moment: float
    inverse_square_tail_bound: float
    fractional_moment: float
    fractional_tail_bound: float
    gamma: float
    inverse_square_ok: bool
    fractional_ok: bool
    finite_atom_list: bool

    @property
    def all_ok(self) -> bool:
        return self.inverse_square_ok and self.fractional_ok


def check_measure_hypotheses(kernel: RelaxationKernel, gamma: float | None = None) -> MeasureHypothesesReport:
    """Check integrability of rho^{-2} and rho^{gamma} against the measure."""
    g = kernel.measure.gamma if gamma is None else float(gamma)
    if not 0.0 < g < 1.0:
        raise ConfigError("gamma must lie in (0, 1)")
    r, w = kernel.rates, kernel.weights
    inv_sq = float(np.sum(w / r**2))
    frac = float(np.sum(w * r**g))
    if not kernel.has_series_tail:
        return MeasureHypothesesReport(
            inverse_square_moment=inv_sq,
            inverse_square_tail_bound=0.0,
            fractional_moment=frac,
            fractional_tail_bound=0.0,
            gamma=g,
            inverse_square_ok=True,
            fractional_ok=True,
            finite_atom_list=True,
        )
    # generated family: term exponents in k are -6 and 2*gamma - 2
    K = kernel._next_k
    o = 2.0 * (K - 0.5) + 1.0
    # tail of sum (2k+1)^{-6}: bounded by the integral from K - 1/2
    inv_sq_tail = 1.0 / (10.0 * o**5)
    frac_ok = 2.0 * g - 2.0 < -1.0
    if frac_ok:
        expo = 2.0 * g - 2.0
        frac_tail = o ** (expo + 1.0) / (2.0 * abs(expo + 1.0))
        frac_val = frac + frac_tail
    else:
        frac_tail = math.inf
        frac_val = math.inf
    return MeasureHypothesesReport(
        inverse_square_moment=inv_sq + inv_sq_tail,
        inverse_square_tail_bound=inv_sq_tail,
        fractional_moment=frac_val,
        fractional_tail_bound=frac_tail,
        gamma=g,
        inverse_square_ok=True,
        fractional_ok=frac_ok,
        finite_atom_list=False,
    )


# ---------------------------------------------------------------------------
# Ramp-weighted moments of the kernel slope
# ---------------------------------------------------------------------------


def ramp_weight(s):
    """r0(s) = min(s, sqrt(s)): the short/long-time modulus of continuity weight."""
    s = np.asarray(s, dtype=float)
    return np.minimum(s, np.sqrt(np.maximum(s, 0.0)))


def _int_ramp_unit(rho: np.ndarray) -> np.ndarray:
    """int_0^1 s e^{-rho s} ds, stable for small rho."""
    rho = np.asarray(rho, dtype=float)
    out = np.empty_like(rho)
    small = rho < 1e-4
    rs = rho[small]
    out[small] = 0.5 - rs / 3.0 + rs**2 / 8.0 - rs**3 / 30.0
    rl = rho[~small]
    out[~small] = (1.0 - np.exp(-rl) * (1.0 + rl)) / rl**2
    return out


def _int_sqrt_tail(rho: np.ndarray, t: float) -> np.ndarray:
    """int_t^inf sqrt(s) e^{-rho s} ds = Gamma(3/2, rho t) / rho^{3/2}, t >= 1."""
    rho = np.asarray(rho, dtype=float)
    return special.gammaincc(1.5, rho * t) * special.gamma(1.5) / rho**1.5


def _int_ramp_window(rho: np.ndarray, t: float) -> np.ndarray:
    """int_t^1 s e^{-rho s} ds for 0 <= t < 1, stable for small rho."""
    rho = np.asarray(rho, dtype=float)
    out = np.empty_like(rho)
    small = rho < 1e-4
    rs = rho[small]
    # series of [e^{-rho t}(1 + rho t) - e^{-rho}(1 + rho)] / rho^2 in rho
    out[small] = (
        (1.0 - t**2) / 2.0
        - rs * (1.0 - t**3) / 3.0
        + rs**2 * (1.0 - t**4) / 8.0
        - rs**3 * (1.0 - t**5) / 30.0
    )
    rl = rho[~small]
    out[~small] = (np.exp(-rl * t) * (1.0 + rl * t) - np.exp(-rl) * (1.0 + rl)) / rl**2
    return out


def _int_sq_unit(rho: np.ndarray) -> np.ndarray:
    """int_0^1 s^2 e^{-rho s} ds, stable for small rho."""
    rho = np.asarray(rho, dtype=float)
    out = np.empty_like(rho)
    small = rho < 1e-4
    rs = rho[small]
    out[small] = 1.0 / 3.0 - rs / 4.0 + rs**2 / 10.0 - rs**3 / 36.0
    rl = rho[~small]
    out[~small] = (2.0 - np.exp(-rl) * (rl**2 + 2.0 * rl + 2.0)) / rl**3
    return out


def _int_sqrt3_tail(rho: np.ndarray) -> np.ndarray:
    """int_1^inf s^{3/2} e^{-rho s} ds = Gamma(5/2, rho) / rho^{5/2}."""
    rho = np.asarray(rho, dtype=float)
    return special.gammaincc(2.5, rho) * special.gamma(2.5) / rho**2.5


@dataclass(frozen=True)
class RemainderWeights:
    """Ramp-weighted slope moments controlling the memory remainder.

    ``total`` is int_0^inf |a'| r0; ``pointwise`` samples
    psi(t) = |a'(t)| r0(t) + 2 int_t^inf |a'| r0 on ``grid``;
    ``l1`` is int_0^inf psi = total + 2 int_0^inf s |a'(s)| r0(s) ds (Fubini).
    """

    grid: np.ndarray
    pointwise: np.ndarray
    total: float
    l1: float


def memory_remainder_weights(kernel: RelaxationKernel, t_grid) -> RemainderWeights:
    """Evaluate the ramp-weighted slope moments on a time grid."""
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(t_grid < 0.0):
        raise ValueError("time grid must be non-negative")
    r, w = kernel.rates, kernel.weights
    total = kernel.ramp_moment
    psi = np.empty_like(t_grid)
    for i, t in enumerate(t_grid):
        # r0(0) = 0 kills the local term (|a'| r0 -> 0 even when a'(0+) = -inf)
        local = 0.0 if t == 0.0 else abs(kernel.eval(t, 1)) * float(ramp_weight(t))
        if t >= 1.0:
            tail = float(np.sum(w * r * _int_sqrt_tail(r, t)))
        else:
            tail = float(np.sum(w * r * (_int_ramp_window(r, t) + _int_sqrt_tail(r, 1.0))))
        psi[i] = local + 2.0 * tail
    tau_moment = float(np.sum(w * r * (_int_sq_unit(r) + _int_sqrt3_tail(r))))
    return RemainderWeights(grid=t_grid, pointwise=psi, total=total, l1=total + 2.0 * tau_moment)


def smoothness_integrals(kernel: RelaxationKernel) -> dict:
    """The three weighted smoothness integrals of the kernel hypotheses.

    Returns int_0^1 t |a''|, int_1^inf sqrt(t) |a''| and int_1^inf t^2 |a'|,
    each evaluated per atom in closed (incomplete-gamma) form.
    """
    r, w = kernel.rates, kernel.weights
    i1 = float(np.sum(w * r**2 * _int_ramp_unit(r)))
    i2 = float(np.sum(w * r**2 * _int_sqrt_tail(r, 1.0)))
    i3 = float(np.sum(w * np.exp(-r) * (r**2 + 2.0 * r + 2.0) / r**2))
    return {
        "short_time_curvature": i1,
        "long_time_curvature": i2,
        "long_time_slope": i3,
        "total": i1 + i2 + i3,
    }


# ---------------------------------------------------------------------------
# Damping functions
# ---------------------------------------------------------------------------


@dataclass
class DampingFunction:
    """Odd smooth damping nonlinearity with derivatives up to third order.

    ``orders`` holds four vectorised callables (value and first three
    derivatives).  The certificate fields are filled by
    :func:`estimate_damping_constants`:

    * ``theta``: half-width of the certified strain window,
    * ``slope_margin``: gamma with g' <= -gamma on [-theta, theta],
    * ``curvature_const``: K with |g'(y)-g'(0)| <= K y^2 and
      |g'''(y)-g'''(0)| <= K |y|,
    * ``lipschitz_const``: max over derivative orders 0..3 of the Lipschitz
      quotient |g^(j)(y)-g^(j)(0)| / |y| on the window.
    """

    name: str
    orders: tuple
    domain: float = 1.0
    theta: float | None = None
    slope_margin: float | None = None
    curvature_const: float | None = None
    lipschitz_const: float | None = None
    #: optional exact evaluator valid outside ``domain`` (y, order) -> value;
    #: lets stress post-processing handle excursions past the fast window
    direct_eval: object = None

    def __call__(self, y, order: int = 0):
        if order not in (0, 1, 2, 3):
            raise ValueError("derivative order must be 0, 1, 2 or 3")
        y_arr = np.asarray(y, dtype=float)
        val = self.orders[order](y_arr)
        return float(val) if y_arr.ndim == 0 else np.asarray(val, dtype=float)

    def with_constants(self, constants: "DampingConstants") -> "DampingFunction":
        return dataclasses.replace(
            self,
            theta=constants.theta,
            slope_margin=constants.slope_margin,
            curvature_const=constants.curvature_const,
            lipschitz_const=constants.lipschitz_const,
        )


@dataclass(frozen=True)
class DampingConstants:
    theta: float
    slope_margin: float
    curvature_const: float
    lipschitz_const: float


def linear_damping(slope: float = -1.0) -> DampingFunction:
    """g(y) = slope * y with slope < 0 (already certified: window = domain)."""
    if not slope < 0.0:
        raise HypothesisError("linear damping requires a negative slope")
    s = float(slope)
    fns = (
        lambda y: s * y,
        lambda y: np.full_like(np.asarray(y, dtype=float), s),
        lambda y: np.zeros_like(np.asarray(y, dtype=float)),
        lambda y: np.zeros_like(np.asarray(y, dtype=float)),
    )
    return DampingFunction(
        name="linear",
        orders=fns,
        domain=math.inf,
        theta=1.0,
        slope_margin=abs(s),
        curvature_const=0.0,
        lipschitz_const=abs(s),
    )


def damping_from_callables(name: str, g, g1, g2, g3, domain: float = 1.0) -> DampingFunction:
    """Wrap analytic callables for g and its first three derivatives."""
    fns = tuple(
        (lambda f: (lambda y: np.asarray(f(np.asarray(y, dtype=float)), dtype=float)))(f)
        for f in (g, g1, g2, g3)
    )
    return DampingFunction(name=name, orders=fns, domain=float(domain))


def damping_from_table(y_values, g_values, name: str = "tabulated") -> DampingFunction:
    """Cubic-spline damping function from sampled (y, g) pairs."""
    from scipy.interpolate import CubicSpline

    y_values = np.asarray(y_values, dtype=float)
    g_values = np.asarray(g_values, dtype=float)
    if y_values.ndim != 1 or y_values.size < 8 or y_values.shape != g_values.shape:
        raise ConfigError("tabulated damping needs >= 8 matching samples")
    if not np.all(np.diff(y_values) > 0):
        raise ConfigError("tabulated damping abscissae must be strictly increasing")
    spl = CubicSpline(y_values, g_values)
    ders = [spl] + [spl.derivative(m) for m in (1, 2, 3)]
    fns = tuple((lambda f: (lambda y: np.asarray(f(y), dtype=float)))(f) for f in ders)
    domain = float(min(-y_values[0], y_values[-1]))
    return DampingFunction(name=name, orders=fns, domain=domain)


# -- reptation damping: sphere quadrature -----------------------------------


class _SphereRule:
    """Product rule on S^2: Gauss-Legendre in cos(polar) x uniform azimuth."""

    _cache: dict = {}

    def __new__(cls, n_polar: int, n_azimuth: int):
        key = (n_polar, n_azimuth)
        if key not in cls._cache:
            self = super().__new__(cls)
            c, wc = np.polynomial.legendre.leggauss(n_polar)
            phi = 2.0 * np.pi * np.arange(n_azimuth) / n_azimuth
            s = np.sqrt(np.maximum(1.0 - c**2, 0.0))
            u1 = np.outer(s, np.cos(phi)).ravel()
            u2 = np.outer(s, np.sin(phi)).ravel()
            u3 = np.outer(c, np.ones(n_azimuth)).ravel()
            w = np.outer(wc, np.full(n_azimuth, 2.0 * np.pi / n_azimuth)).ravel()
            self.u1, self.u2, self.u3, self.w = u1, u2, u3, w
            cls._cache[key] = self
        return cls._cache[key]


def doi_edwards_damping_value(y, order: int = 0, n_polar: int = 128, n_azimuth: int = 256):
    """Reptation damping function (or derivative) by direct sphere quadrature.

    The integrand for derivatives is differentiated analytically in y, so
    no finite differencing is involved.  Vectorised over y (chunked to keep
    the (len(y), nodes) work array modest).
    """
    if order not in (0, 1, 2, 3):
        raise ValueError("derivative order must be 0, 1, 2 or 3")
    rule = _SphereRule(n_polar, n_azimuth)
    y_arr = np.asarray(y, dtype=float)
    scalar = y_arr.ndim == 0
    y_flat = np.atleast_1d(y_arr).astype(float).ravel()
    out = np.empty_like(y_flat)
    nodes = rule.u1.size
    block = max(1, int(4_000_000 // nodes))
    u1, u2, u3, w = rule.u1, rule.u2, rule.u3, rule.w
    for lo in range(0, y_flat.size, block):
        yb = y_flat[lo : lo + block, None]
        e = u1[None, :] - u2[None, :] * yb
        D = e**2 + u2[None, :] ** 2 + u3[None, :] ** 2
        if order == 0:
            integrand = u1 * u2 * D**-1.5
        elif order == 1:
            integrand = 3.0 * u1 * u2**2 * e * D**-2.5
        elif order == 2:
            integrand = 3.0 * u1 * u2**3 * (5.0 * e**2 * D**-3.5 - D**-2.5)
        else:
            integrand = 3.0 * u1 * u2**4 * (35.0 * e**3 * D**-4.5 - 15.0 * e * D**-3.5)
        out[lo : lo + block] = -(integrand @ w)
    if scalar:
        return float(out[0])
    return out.reshape(y_arr.shape)


def doi_edwards_damping(
    domain: float = 1.0,
    n_polar: int = 128,
    n_azimuth: int = 256,
    interp_nodes: int = 96,
    certify_tol: float = 1e-9,
) -> DampingFunction:
    """Reptation damping function with fast certified Chebyshev evaluators.

    One Chebyshev interpolant per derivative order is built from direct
    quadrature samples on [-domain, domain] and certified against both the
    direct rule and a refined (doubled) rule at random probe points; failure
    to meet ``certify_tol`` raises AccuracyError with the achieved bound.
    """
    half = float(domain)
    series = []
    fns = []
    for m in range(4):
        def direct(y, _m=m):
            return doi_edwards_damping_value(y, order=_m, n_polar=n_polar, n_azimuth=n_azimuth)

        coeffs = _cheb.chebinterpolate(lambda s: direct(s * half), interp_nodes)
        series.append(coeffs)
        fns.append(
            (lambda c: (lambda y: _cheb.chebval(np.asarray(y, dtype=float) / half, c)))(coeffs)
        )
    # certification: fixed probe set, interpolant vs direct and refined rules
    probes = half * np.cos(np.linspace(0.05, math.pi - 0.05, 41))
    achieved = 0.0
    for m in range(4):
        direct_v = doi_edwards_damping_value(probes, order=m, n_polar=n_polar, n_azimuth=n_azimuth)
        refined_v = doi_edwards_damping_value(
            probes, order=m, n_polar=2 * n_polar, n_azimuth=2 * n_azimuth
        )
        interp_v = fns[m](probes)
        scale = max(1.0, float(np.max(np.abs(direct_v))))
        achieved = max(
            achieved,
            float(np.max(np.abs(interp_v - direct_v))) / scale,
            float(np.max(np.abs(direct_v - refined_v))) / scale,
        )
    if achieved > certify_tol:
        raise AccuracyError(
            "reptation damping interpolant failed certification", achieved=achieved
        )
    def _direct(y, order: int = 0):
        return doi_edwards_damping_value(y, order=order, n_polar=n_polar, n_azimuth=n_azimuth)

    g = DampingFunction(
        name="doi-edwards", orders=tuple(fns), domain=half, direct_eval=_direct
    )
    return g.with_constants(estimate_damping_constants(g, max_theta=half))


def estimate_damping_constants(
    g: DampingFunction,
    max_theta: float = 1.0,
    scan_step: float = 1e-3,
    bisect_tol: float = 1e-10,
) -> DampingConstants:
    """Scan the damping function and certify its window constants.

    theta is the largest theta <= max_theta (and <= the evaluator domain)
    with g' < 0 on the scan grid of [-theta, theta]; the sign boundary is
    refined by bisection.  Raises HypothesisError when g(0), g''(0) differ
    from zero beyond roundoff scale or when g'(0) >= 0.
    """
    limit = min(float(max_theta), g.domain)
    if not limit > 0.0:
        raise ConfigError("damping scan window is empty")
    g0 = g(0.0, 0)
    g1_0 = g(0.0, 1)
    g2_0 = g(0.0, 2)
    g3_0 = g(0.0, 3)
    scale = max(1.0, abs(g1_0))
    if abs(g0) > 1e-8 * scale:
        raise HypothesisError(f"damping function must vanish at the origin (g(0)={g0:.3e})")
    if abs(g2_0) > 1e-6 * scale:
        raise HypothesisError(
            f"damping function must have vanishing curvature at the origin (g''(0)={g2_0:.3e})"
        )
    if not g1_0 < 0.0:
        raise HypothesisError(f"damping slope at the origin must be negative (g'(0)={g1_0:.3e})")

    grid = np.arange(scan_step, limit + 0.5 * scan_step, scan_step)
    grid = grid[grid <= limit]
    theta = limit
    for side in (+1.0, -1.0):
        vals = g(side * grid, 1)
        bad = np.nonzero(vals >= 0.0)[0]
        if bad.size:
            i = int(bad[0])
            lo = grid[i - 1] if i > 0 else 0.0
            hi = grid[i]
            while hi - lo > bisect_tol:
                mid = 0.5 * (lo + hi)
                if g(side * mid, 1) < 0.0:
                    lo = mid
                else:
                    hi = mid
            theta = min(theta, lo)
    if not theta > 0.0:
        raise HypothesisError("no strain window: damping slope is non-negative arbitrarily close to 0")

    dense = np.linspace(-theta, theta, max(801, int(2 * theta / scan_step) + 1))
    slopes = g(dense, 1)
    slope_margin = float(-np.max(slopes))
    nz = dense[np.abs(dense) >= 0.5 * scan_step]
    d1 = np.abs(g(nz, 1) - g1_0) / nz**2
    d3 = np.abs(g(nz, 3) - g3_0) / np.abs(nz)
    curvature = float(max(np.max(d1), np.max(d3)))
    lip = 0.0
    for m, base in ((0, g0), (1, g1_0), (2, g2_0), (3, g3_0)):
        lip = max(lip, float(np.max(np.abs(g(nz, m) - base) / np.abs(nz))))
    return DampingConstants(
        theta=float(theta),
        slope_margin=slope_margin,
        curvature_const=curvature,
        lipschitz_const=lip,
    )

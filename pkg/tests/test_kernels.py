"""Kernel and damping-function tests.

Frozen oracle values are computed by independent routes (partial sums with
integral tail bounds, adaptive quadrature, Monte-Carlo) and recorded next to
the assertions that use them.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from shearlab import kernels as sk
from shearlab.errors import AccuracyError, ConfigError, HypothesisError

# ---------------------------------------------------------------------------
# frozen oracles
# ---------------------------------------------------------------------------

# sum_{k>=1} (2k+1)^{-2} = pi^2/8 - 1
A0_CLOSED = math.pi**2 / 8.0 - 1.0
# sum_{k>=1} (2k+1)^{-4} = pi^4/96 - 1
L1_CLOSED = math.pi**4 / 96.0 - 1.0
# sum_{k>=1} (2k+1)^{-6} = pi^6/960 - 1
INV_SQ_CLOSED = math.pi**6 / 960.0 - 1.0
# int_0^inf e^{-s} min(s, sqrt(s)) ds  (adaptive-quadrature oracle, split at 1)
ABAR_UNIT_ATOM = 0.7715233514688886
# int_0^inf psi ds for the unit atom = abar + 2 int_0^inf s e^{-s} r0(s) ds
PSI_L1_UNIT_ATOM = 3.3503345235326707
GP0 = -4.0 * math.pi / 5.0
G3_0 = 8.0 * math.pi / 7.0


def partial_sum_tail_oracle(num_terms: int = 1_000_000) -> float:
    """a(0) of the reptation family: partial sum plus midpoint integral tail."""
    k = np.arange(1, num_terms + 1, dtype=float)
    tail = 1.0 / (2.0 * (2.0 * num_terms + 2.0))  # int_{K+1/2}^inf (2x+1)^{-2} dx
    return float(np.sum((2.0 * k + 1.0) ** -2.0)) + tail


# ---------------------------------------------------------------------------
# relaxation kernel
# ---------------------------------------------------------------------------


def test_de_value_at_zero_matches_partial_sum_oracle(de_full):
    oracle = partial_sum_tail_oracle()
    assert abs(oracle - A0_CLOSED) < 1e-12  # oracle self-check
    assert abs(de_full.value_at_zero - oracle) < 1e-12
    assert abs(de_full.value_at_zero - A0_CLOSED) < 1e-12


def test_de_l1_norm(de_full):
    assert abs(de_full.l1_norm - L1_CLOSED) < 1e-12
    assert abs(de_full.l1_norm_slope - de_full.value_at_zero) < 1e-15


def test_truncation_keeps_low_rates(de_n100):
    assert de_n100.atom_count == 4
    np.testing.assert_allclose(de_n100.rates, [9.0, 25.0, 49.0, 81.0])
    np.testing.assert_allclose(de_n100.weights, [1 / 9, 1 / 25, 1 / 49, 1 / 81])
    expected = sum((2 * k + 1.0) ** -2 for k in range(1, 5))
    assert abs(de_n100.value_at_zero - expected) < 1e-15


@settings(max_examples=25, deadline=None)
@given(
    n1=st.floats(min_value=10.0, max_value=1e5),
    n2=st.floats(min_value=10.0, max_value=1e5),
    t=st.floats(min_value=0.0, max_value=5.0),
)
def test_truncation_monotone_in_cutoff(n1, n2, t):
    lo, hi = sorted((n1, n2))
    k_lo = sk.doi_edwards_kernel(truncation_n=lo)
    k_hi = sk.doi_edwards_kernel(truncation_n=hi)
    assert k_lo.eval(t) <= k_hi.eval(t) + 1e-15


@pytest.mark.parametrize("order", [0, 1, 2, 3])
def test_total_monotonicity_sampled(de_n1e4, two_atom, order):
    t = np.geomspace(1e-6, 50.0, 40)
    for kernel in (de_n1e4, two_atom):
        vals = kernel.eval(t, order)
        assert np.all((-1.0) ** order * vals >= 0.0)


def test_full_family_derivatives_match_truncation(de_full, de_n1e4):
    # away from t = 0 the high-rate atoms are dead; truncation is invisible
    t = np.array([0.5, 1.0, 2.0])
    for order in (0, 1, 2, 3):
        np.testing.assert_allclose(
            de_full.eval(t, order), de_n1e4.eval(t, order), rtol=0, atol=1e-13
        )


def test_series_tail_consistency_across_floors():
    # coarser materialisation must be compensated by the analytic tail
    k_fine = sk.doi_edwards_kernel()
    k_coarse = sk.RelaxationKernel(sk.MeasureSpec.doi_edwards(weight_floor=1e-8))
    assert k_coarse.atom_count < k_fine.atom_count / 100
    for t in (0.0, 1e-9, 1e-7):
        assert abs(k_coarse.eval(t) - k_fine.eval(t)) < 5e-9


def test_eval_domain_and_divergence_errors(de_full, de_n100):
    with pytest.raises(ValueError):
        de_full.eval(-0.1)
    with pytest.raises(ValueError):
        de_full.eval(1.0, order=4)
    with pytest.raises(AccuracyError):
        de_full.eval(0.0, order=1)  # a'(0+) = -inf for the full family
    # truncated kernels are entire: derivative at zero is the finite sum
    expected = -float(np.sum(de_n100.weights * de_n100.rates))
    assert abs(de_n100.eval(0.0, order=1) - expected) < 1e-14


def test_measure_validation_errors():
    with pytest.raises(ConfigError):
        sk.MeasureSpec.from_atoms([(1.0, -2.0)])
    with pytest.raises(ConfigError):
        sk.MeasureSpec.from_atoms([(-1.0, 2.0)])
    with pytest.raises(ConfigError):
        sk.MeasureSpec.from_atoms([])
    with pytest.raises(ConfigError):
        sk.MeasureSpec.from_atoms([(1.0, 1.0)], gamma=1.5)
    with pytest.raises(ConfigError):
        sk.doi_edwards_kernel(truncation_n=5.0)  # removes every atom


# ---------------------------------------------------------------------------
# ramp-weighted moments
# ---------------------------------------------------------------------------


def test_ramp_weight_shape():
    s = np.array([0.0, 0.25, 1.0, 4.0])
    np.testing.assert_allclose(sk.ramp_weight(s), [0.0, 0.25, 1.0, 2.0])


def test_abar_unit_atom_oracle(single_atom):
    val, err = integrate.quad(
        lambda s: math.exp(-s) * min(s, math.sqrt(s)), 0, 50, limit=200, points=[1.0]
    )
    assert abs(val - ABAR_UNIT_ATOM) < 1e-10  # oracle self-check
    assert abs(single_atom.ramp_moment - ABAR_UNIT_ATOM) < 1e-10


def test_psi_pointwise_unit_atom_oracle(single_atom):
    t_grid = np.array([0.0, 0.3, 1.0, 2.5])
    weights = sk.memory_remainder_weights(single_atom, t_grid)

    def psi_oracle(t):
        local = math.exp(-t) * min(t, math.sqrt(t))
        pts = [1.0] if t < 1.0 else None
        tail, _ = integrate.quad(
            lambda s: math.exp(-s) * min(s, math.sqrt(s)), t, 60, limit=200, points=pts
        )
        return local + 2.0 * tail

    for i, t in enumerate(t_grid):
        assert abs(weights.pointwise[i] - psi_oracle(float(t))) < 1e-9


def test_psi_at_zero_is_twice_abar(de_n100, single_atom, two_atom):
    for kernel in (de_n100, single_atom, two_atom):
        w = sk.memory_remainder_weights(kernel, np.array([0.0]))
        assert abs(w.pointwise[0] - 2.0 * w.total) < 1e-14


def test_psi_l1_unit_atom_fubini_oracle(single_atom):
    # Fubini: int psi = abar + 2 int s |a'| r0; independent quadrature oracle
    tau, _ = integrate.quad(
        lambda s: s * math.exp(-s) * min(s, math.sqrt(s)), 0, 60, limit=200, points=[1.0]
    )
    oracle = ABAR_UNIT_ATOM + 2.0 * tau
    assert abs(oracle - PSI_L1_UNIT_ATOM) < 1e-9  # oracle self-check
    w = sk.memory_remainder_weights(single_atom, np.array([0.0]))
    assert abs(w.l1 - PSI_L1_UNIT_ATOM) < 1e-9


def test_psi_integrable_doubling(de_n100):
    # int_0^T psi stabilises as T doubles and approaches the closed-form l1;
    # fixed step so the discretisation is identical on the shared interval
    totals = []
    for horizon in (5.0, 10.0, 20.0):
        grid = np.linspace(0.0, horizon, int(horizon * 800) + 1)
        w = sk.memory_remainder_weights(de_n100, grid)
        totals.append(np.trapezoid(w.pointwise, grid))
    assert abs(totals[1] - totals[0]) < 1e-12
    assert abs(totals[2] - totals[1]) < 1e-12
    w = sk.memory_remainder_weights(de_n100, np.array([0.0]))
    assert abs(totals[-1] - w.l1) < 1e-5


def test_psi_l1_weighted_bound(de_n100, two_atom, single_atom):
    # ||psi||_1 = abar + 2 int s|a'|r0 <= 3 int (1+s)|a'(s)| r0(s) ds,
    # with the right side evaluated by independent adaptive quadrature
    for kernel in (de_n100, two_atom, single_atom):
        w = sk.memory_remainder_weights(kernel, np.array([0.0]))
        val, err = integrate.quad(
            lambda s: (1.0 + s) * abs(kernel.eval(s, 1)) * min(s, math.sqrt(s)),
            0.0,
            80.0,
            limit=400,
            points=[1.0],
        )
        assert w.l1 <= 3.0 * val + 10.0 * err + 1e-9


def test_smoothness_integrals_bounded_in_truncation(de_full):
    vals = []
    for n in (100.0, 1e4, None):
        kernel = de_full if n is None else de_full.truncate(n)
        d = sk.smoothness_integrals(kernel)
        assert all(v >= 0.0 and np.isfinite(v) for v in d.values())
        vals.append(d["total"])
    assert vals[0] <= vals[1] <= vals[2] + 1e-12  # monotone, uniformly bounded


# ---------------------------------------------------------------------------
# measure hypotheses
# ---------------------------------------------------------------------------


def test_measure_hypotheses_de(de_full):
    rep = rep_default = sk.check_measure_hypotheses(de_full)
    assert rep.all_ok and not rep.finite_atom_list
    assert abs(rep.inverse_square_moment - INV_SQ_CLOSED) < 1e-12
    # fractional moment converges exactly when the term exponent 2g-2 < -1
    assert sk.check_measure_hypotheses(de_full, gamma=0.25).fractional_ok
    assert sk.check_measure_hypotheses(de_full, gamma=0.49).fractional_ok
    assert not sk.check_measure_hypotheses(de_full, gamma=0.5).fractional_ok
    assert not sk.check_measure_hypotheses(de_full, gamma=0.75).fractional_ok
    assert rep_default.gamma == 0.25


def test_measure_hypotheses_finite_list(two_atom):
    rep = sk.check_measure_hypotheses(two_atom, gamma=0.9)
    assert rep.all_ok and rep.finite_atom_list
    expected = 0.75 * 1.0 + 0.5 / 16.0
    assert abs(rep.inverse_square_moment - expected) < 1e-14


# ---------------------------------------------------------------------------
# reptation damping function
# ---------------------------------------------------------------------------


def test_gde_odd_on_random_points(rng):
    y = rng.uniform(-1.0, 1.0, size=100)
    total = sk.doi_edwards_damping_value(y) + sk.doi_edwards_damping_value(-y)
    assert np.max(np.abs(total)) < 1e-8


def test_gde_origin_derivatives():
    assert abs(sk.doi_edwards_damping_value(0.0)) < 1e-14
    assert abs(sk.doi_edwards_damping_value(0.0, 2)) < 1e-14
    assert abs(sk.doi_edwards_damping_value(0.0, 1) - GP0) < 1e-12
    assert abs(sk.doi_edwards_damping_value(0.0, 3) - G3_0) < 1e-11


def test_gde_slope_monte_carlo_oracle(rng):
    # independent check of g'(0) = -3 * int_{S^2} u1^2 u2^2 dS = -4 pi / 5
    m = 400_000
    z = rng.normal(size=(m, 3))
    z /= np.linalg.norm(z, axis=1)[:, None]
    samples = 4.0 * math.pi * 3.0 * z[:, 0] ** 2 * z[:, 1] ** 2
    est = -float(np.mean(samples))
    sd = float(np.std(samples)) / math.sqrt(m)
    assert abs(est - GP0) < 5.0 * sd


def test_gde_quadrature_converged():
    # default rule vs refined rule: spectral accuracy on the smooth integrand
    y = np.linspace(-1.0, 1.0, 17)
    base = sk.doi_edwards_damping_value(y)
    fine = sk.doi_edwards_damping_value(y, n_polar=256, n_azimuth=512)
    assert np.max(np.abs(base - fine)) < 1e-12


def test_gde_factory_certified(gde, rng):
    y = rng.uniform(-1.0, 1.0, size=50)
    for order in range(4):
        direct = sk.doi_edwards_damping_value(y, order=order)
        np.testing.assert_allclose(gde(y, order), direct, rtol=0, atol=1e-9)
    assert gde.theta == 1.0  # slope stays negative across the whole scan
    assert gde.slope_margin > 0
    assert abs(gde.slope_margin - (-gde(1.0, 1))) < 1e-12
    assert gde.curvature_const > 0 and gde.lipschitz_const > 0


def test_damping_constants_cubic_example():
    g = sk.damping_from_callables(
        "cubic",
        lambda y: y**3 - y,
        lambda y: 3.0 * y**2 - 1.0,
        lambda y: 6.0 * y,
        lambda y: np.full_like(y, 6.0),
        domain=2.0,
    )
    consts = sk.estimate_damping_constants(g)
    assert abs(consts.theta - 1.0 / math.sqrt(3.0)) < 1e-6
    assert 0.0 < consts.slope_margin < 1e-5  # slope vanishes at the window edge
    assert abs(consts.curvature_const - 3.0) < 1e-9  # |g'(y)-g'(0)|/y^2 = 3
    assert abs(consts.lipschitz_const - 6.0) < 1e-9  # from |g''(y)-g''(0)|/|y|


def test_damping_hypothesis_violations():
    rising = sk.damping_from_callables(
        "rising",
        lambda y: y,
        lambda y: np.ones_like(y),
        lambda y: np.zeros_like(y),
        lambda y: np.zeros_like(y),
    )
    with pytest.raises(HypothesisError):
        sk.estimate_damping_constants(rising)
    offset = sk.damping_from_callables(
        "offset",
        lambda y: y - 1.0,
        lambda y: np.ones_like(y),
        lambda y: np.zeros_like(y),
        lambda y: np.zeros_like(y),
    )
    with pytest.raises(HypothesisError):
        sk.estimate_damping_constants(offset)
    with pytest.raises(HypothesisError):
        sk.linear_damping(slope=0.5)


def test_linear_damping_certificates():
    g = sk.linear_damping(-2.0)
    assert g(0.3) == -0.6
    assert g(0.3, 1) == -2.0
    assert g(0.3, 2) == 0.0
    assert g.slope_margin == 2.0
    assert g.curvature_const == 0.0
    assert g.lipschitz_const == 2.0


def test_damping_from_table_roundtrip():
    y = np.linspace(-1.0, 1.0, 41)
    table = sk.damping_from_table(y, y**3 - y)
    consts = sk.estimate_damping_constants(table)
    assert abs(consts.theta - 1.0 / math.sqrt(3.0)) < 1e-3


def test_kernel_csv_export(tmp_path, de_n100):
    path = tmp_path / "kernel.csv"
    t = np.linspace(0.0, 2.0, 9)
    de_n100.write_csv(path, t)
    data = np.genfromtxt(path, delimiter=",", names=True)
    np.testing.assert_allclose(data["t"], t)
    np.testing.assert_allclose(data["a0"], de_n100.eval(t), rtol=1e-15)
    np.testing.assert_allclose(data["a1"], de_n100.eval(t, 1), rtol=1e-15)

"""End-to-end acceptance gate: ten checks, one printed PASS/FAIL line each.

Every check compares the package against an independently computed target —
closed-form constants, stiff ODE integrations, Monte-Carlo sphere quadrature,
grid-refinement studies, or byte-level replay — and enforces a wall-clock
budget.  Run with ``pytest tests/test_acceptance.py -v``.
"""

import contextlib
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from shearlab import cli
from shearlab import config as C
from shearlab import diagnostics as D
from shearlab import kernels as K
from shearlab import solver as S
from shearlab import spectral as SP
from shearlab import volterra as V

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"
SHIPPED = sorted(CONFIG_DIR.glob("*.toml"))
COMPLETING = [p for p in SHIPPED if p.stem != "divergence-demo"]

A0_CLOSED = math.pi**2 / 8.0 - 1.0  # kernel value at zero
L1_CLOSED = math.pi**4 / 96.0 - 1.0  # kernel L1 norm
GP0 = -4.0 * math.pi / 5.0  # damping slope at the origin


@contextlib.contextmanager
def criterion(name: str, budget_s: float, capsys):
    """Emit exactly one [acceptance] PASS/FAIL line per check, timing it."""

    def emit(line: str) -> None:
        # suspend output capture so the verdict reaches the real terminal
        with capsys.disabled():
            print(line, flush=True)

    info = {}
    start = time.perf_counter()
    try:
        yield info
        elapsed = time.perf_counter() - start
        if elapsed >= budget_s:
            raise AssertionError(
                f"runtime {elapsed:.2f}s exceeds the {budget_s:.0f}s budget"
            )
    except BaseException:
        emit(f"[acceptance] {name}: FAIL ({time.perf_counter() - start:.2f}s)")
        raise
    note = info.get("note", "")
    emit(
        f"[acceptance] {name}: PASS ({elapsed:.2f}s)" + (f" — {note}" if note else "")
    )


# ---------------------------------------------------------------------------
# 1. relaxation-kernel constants
# ---------------------------------------------------------------------------


def partial_sum_tail_oracle(num_terms: int = 1_000_000) -> float:
    """Kernel value at zero: partial sum plus midpoint-rule integral tail."""
    k = np.arange(1, num_terms + 1, dtype=float)
    tail = 1.0 / (2.0 * (2.0 * num_terms + 2.0))  # int_{K+1/2}^inf (2x+1)^{-2} dx
    return float(np.sum((2.0 * k + 1.0) ** -2.0)) + tail


def test_01_kernel_constants(de_full, capsys):
    with criterion("01 kernel-constants", 1.0, capsys) as info:
        oracle = partial_sum_tail_oracle()
        value = de_full.value_at_zero
        assert abs(value - oracle) < 1e-10
        assert abs(value - A0_CLOSED) < 1e-10
        transform_at_zero = complex(SP.fourier_exact(de_full, 0.0)).real
        assert abs(transform_at_zero - L1_CLOSED) < 1e-10
        info["note"] = (
            f"a(0) off by {abs(value - oracle):.2e}, "
            f"L1 off by {abs(transform_at_zero - L1_CLOSED):.2e}"
        )


# ---------------------------------------------------------------------------
# 2. damping function: oddness and slope at the origin
# ---------------------------------------------------------------------------


def test_02_damping_oddness_and_slope(gde, capsys):
    with criterion("02 damping-oddness-slope", 10.0, capsys) as info:
        rng = np.random.default_rng(20260815)
        y = rng.uniform(-1.0, 1.0, size=100)
        assert np.max(np.abs(gde(y) + gde(-y))) <= 1e-8

        h = 1e-4
        fd_slope = float(gde(h) - gde(-h)) / (2.0 * h)
        assert abs(fd_slope - GP0) <= 1e-4

        # independent Monte-Carlo sphere quadrature of the slope integrand:
        # slope = -3 * surface integral of u1^2 u2^2 over the unit sphere
        n = 2_000_000
        directions = rng.normal(size=(n, 3))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        samples = directions[:, 0] ** 2 * directions[:, 1] ** 2
        mc_slope = -12.0 * math.pi * float(np.mean(samples))
        mc_se = 12.0 * math.pi * float(np.std(samples)) / math.sqrt(n)
        assert abs(mc_slope - GP0) <= 4.0 * mc_se
        assert abs(fd_slope - mc_slope) <= 4.0 * mc_se + 1e-4
        info["note"] = (
            f"fd slope off by {abs(fd_slope - GP0):.2e}, "
            f"MC oracle off by {abs(mc_slope - GP0):.2e} (se {mc_se:.1e})"
        )


# ---------------------------------------------------------------------------
# 3. strong positivity of the truncated families
# ---------------------------------------------------------------------------


def test_03_strong_positivity_floor(de_n100, de_n1e4, capsys):
    with criterion("03 strong-positivity", 5.0, capsys) as info:
        floor = 1.0 / 81.0 - 1e-12  # slowest-atom bound
        minima = {}
        for label, kernel in (("n=100", de_n100), ("n=1e4", de_n1e4)):
            report = SP.check_strong_positivity(kernel, n_grid=10_000)
            assert report.grid_points == 10_000
            assert report.m1 >= floor
            minima[label] = report.m1
        info["note"] = ", ".join(f"{k}: m1={v:.6f}" for k, v in minima.items())


# ---------------------------------------------------------------------------
# 4. convolution inversion: round trip, order, exponential closed form
# ---------------------------------------------------------------------------


def roundtrip_error(kernel, dt, duration=2.0, refine=8):
    op = SP.build_inversion(kernel, duration=duration, dt=dt)
    t_fine = (dt / refine) * np.arange(refine * (op.times.size - 1) + 1)
    w_fine = np.sin(1.7 * t_fine) * (1.0 - np.exp(-3.0 * t_fine))
    l_fine = V.trapezoid_convolve(kernel.eval(t_fine), w_fine, dt / refine)
    w_rec = V.apply_inversion(op, l_fine[::refine])
    w_true = w_fine[::refine]
    return V.trapezoid_norm(w_rec - w_true, dt, 2) / V.trapezoid_norm(w_true, dt, 2)


def test_04_inversion_roundtrip(single_atom, de_n100, capsys):
    with criterion("04 inversion-roundtrip", 30.0, capsys) as info:
        notes = []
        for label, kernel in (("exp", single_atom), ("reptation", de_n100)):
            errors = [roundtrip_error(kernel, 4e-3 / 2**j) for j in range(4)]
            assert errors[2] <= 1e-4  # the dt = 1e-3 entry
            orders = [math.log2(a / b) for a, b in zip(errors, errors[1:])]
            assert min(orders) >= 1.7
            notes.append(f"{label}: err {errors[2]:.2e}, order {min(orders):.2f}")

        # exponential kernel closed form: the preimage of l is l' + l
        dt = 1e-4
        op = SP.build_inversion(single_atom, duration=1.0, dt=dt)
        t = op.times
        values = t * np.exp(-t)
        rate = (1.0 - t) * np.exp(-t)
        w_rec = V.apply_inversion(op, values, rate=rate)
        closed_err = float(np.max(np.abs(w_rec - np.exp(-t))))
        assert closed_err <= 1e-6
        notes.append(f"closed form off by {closed_err:.1e}")
        info["note"] = "; ".join(notes)


# ---------------------------------------------------------------------------
# 5. memory quadratic form: exponential value, Parseval, positivity
# ---------------------------------------------------------------------------


def sine_series(rng, t, horizon, n_modes=6):
    coef = rng.normal(size=n_modes) / np.arange(1, n_modes + 1) ** 2
    return sum(c * np.sin((j + 1) * np.pi * t / horizon) for j, c in enumerate(coef))


def test_05_memory_quadratic_form(single_atom, de_n100, capsys):
    with criterion("05 memory-quadratic-form", 30.0, capsys) as info:
        dt = 1e-4
        t = np.arange(0.0, 1.0 + dt / 2, dt)
        q_exp = V.memory_qform(np.ones_like(t), np.exp(-t), dt)
        exp_err = abs(q_exp - math.exp(-1.0))
        assert exp_err <= 1e-6

        rng = np.random.default_rng(20260816)
        samples = de_n100.eval(t)
        worst_rel = 0.0
        for _ in range(20):
            w = sine_series(rng, t, 1.0)
            qt = V.memory_qform(w, samples, dt)
            qf = SP.parseval_qform(w, de_n100, dt)
            rel = abs(qt - qf) / abs(qt)
            worst_rel = max(worst_rel, rel)
            assert rel <= 1e-6

        dt2 = 1e-3
        t2 = np.arange(0.0, 1.0 + dt2 / 2, dt2)
        samples2 = de_n100.eval(t2)
        q_min = min(
            V.memory_qform(sine_series(rng, t2, 1.0), samples2, dt2) for _ in range(50)
        )
        assert q_min >= -1e-12
        assert abs(V.memory_qform(np.zeros_like(t2), samples2, dt2)) <= 1e-15
        info["note"] = (
            f"exp value off by {exp_err:.1e}, Parseval worst rel {worst_rel:.1e}, "
            f"min Q {q_min:.3e}"
        )


# ---------------------------------------------------------------------------
# 6. solver, linear regime: scalar mode oracle and self convergence
# ---------------------------------------------------------------------------


def mode_oracle_amplitude(kernel, t_end, wavenumber_sq, amplitude, slope_mag=1.0):
    """Scalar memory-mode equation vhat' = -|g'(0)| k^2 (a * vhat), solved stiffly."""
    w, r = kernel.weights, kernel.rates

    def rhs(_t, y):
        vhat, q = y[0], y[1:]
        return np.concatenate([[-slope_mag * wavenumber_sq * (w @ q)], vhat - r * q])

    sol = solve_ivp(
        rhs,
        (0.0, t_end),
        np.concatenate([[amplitude], np.zeros(r.size)]),
        method="Radau",
        rtol=1e-10,
        atol=1e-14,
    )
    return float(sol.y[0, -1])


def test_06_linear_solver_against_mode_oracle(de_n100, capsys):
    with criterion("06 linear-solver-oracle", 120.0, capsys) as info:
        lin = K.linear_damping(-1.0)
        profile = S.initial_profile("single-mode", amplitude=1e-3)

        grid = S.SpatialGrid(1.0, 256)
        res = S.run(grid, de_n100, lin, profile, horizon=1.0)
        proj = 2.0 * grid.dx * (res.v[-1] @ np.sin(np.pi * grid.nodes))
        want = mode_oracle_amplitude(de_n100, 1.0, math.pi**2, 1e-3)
        mode_rel = abs(proj - want) / abs(want)
        assert mode_rel <= 1e-3

        # simultaneous dx, dt halving on nested interior grids
        fields = {}
        for n, dt in ((63, 8e-3), (127, 4e-3), (255, 2e-3)):
            out = S.run(S.SpatialGrid(1.0, n), de_n100, lin, profile, 1.0, dt=dt)
            fields[n] = out.v[-1]
        e12 = np.linalg.norm(fields[63] - fields[127][1::2])
        e23 = np.linalg.norm(fields[127][1::2] - fields[255][3::4])
        order = math.log2(e12 / e23)
        assert order >= 1.7
        info["note"] = f"mode rel err {mode_rel:.2e}, refinement order {order:.2f}"


# ---------------------------------------------------------------------------
# 7. solver, nonlinear small data: certificates and remainder envelopes
# ---------------------------------------------------------------------------


def test_07_nonlinear_small_data(de_full, gde, capsys):
    with criterion("07 nonlinear-small-data", 300.0, capsys) as info:
        grid = S.SpatialGrid(1.0, 64)
        profile = S.initial_profile("single-mode", amplitude=1e-3)
        res = S.run(grid, de_full, gde, profile, horizon=5.0)
        assert res.termination == "completed"

        report = D.build_report(res)
        flags = D.check_certificates(
            report,
            theta=gde.theta,
            kernel_at_zero=de_full.value_at_zero,
            damping_slope=float(gde(0.0, 1)),
        )
        assert bool(np.all(flags["hyperbolicity_flags"]))
        assert flags["hyperbolicity_ok"]
        assert flags["implication_ok"]

        bounds = D.remainder_bounds(res, de_full, gde)
        assert bounds["remainder_ok"]
        assert bounds["rate_ok"]
        info["note"] = (
            f"{res.steps} steps, sup strain {float(report.sup_strain[-1]):.2e} "
            f"vs window {0.5 * gde.theta:.2e}, remainder envelopes hold"
        )


# ---------------------------------------------------------------------------
# 8. reconstruction identity for the second space derivative
# ---------------------------------------------------------------------------


def test_08_curvature_reconstruction(single_atom, capsys):
    with criterion("08 curvature-reconstruction", 60.0, capsys) as info:
        lin = K.linear_damping(-1.0)
        grid = S.SpatialGrid(1.0, 64)
        profile = S.initial_profile("single-mode", amplitude=1e-3)
        res = S.run(grid, single_atom, lin, profile, horizon=1.0)
        op = SP.build_inversion(single_atom, duration=1.0 + 3 * res.dt, dt=res.dt)
        rec = S.reconstruct_vxx(res, op, single_atom, lin)
        ref = res.vxx()
        rel = float(np.linalg.norm(rec - ref) / np.linalg.norm(ref))
        assert rel <= 1e-2
        info["note"] = f"relative L2 error {rel:.2e}"


# ---------------------------------------------------------------------------
# 9. energy certificates on the shipped scenarios
# ---------------------------------------------------------------------------


def test_09_certificates_on_shipped_scenarios(tmp_path, capsys):
    with criterion("09 shipped-certificates", 180.0, capsys) as info:
        assert len(COMPLETING) >= 3
        checked = []
        for cfg_path in COMPLETING:
            out = tmp_path / cfg_path.stem
            rc = cli.main(
                ["simulate", "--config", str(cfg_path), "--out", str(out)]
            )
            assert rc == 0
            manifest = json.loads((out / "manifest.json").read_text())
            certs = manifest["certificates"]
            assert certs["E0_bound_ok"], cfg_path.stem
            assert certs["implication_ok"], cfg_path.stem

            table = np.genfromtxt(out / "energy.csv", delimiter=",", names=True)
            energy = np.atleast_1d(table["total_energy"])
            amplitude = np.atleast_1d(table["amplitude"])
            c_omega = D.sobolev_constant(C.load(cfg_path).grid.length)
            assert np.all(
                amplitude <= c_omega * np.sqrt(energy) * (1.0 + 1e-9) + 1e-15
            ), cfg_path.stem
            assert np.all(np.diff(energy) >= -1e-12 * max(1.0, energy.max()))
            checked.append(cfg_path.stem)
        info["note"] = f"checked {', '.join(checked)}"


# ---------------------------------------------------------------------------
# 10. determinism: byte-identical replays of every shipped scenario
# ---------------------------------------------------------------------------


def test_10_deterministic_replay(tmp_path, capsys):
    with criterion("10 deterministic-replay", 180.0, capsys) as info:
        assert len(SHIPPED) >= 4
        compared = 0
        for cfg_path in SHIPPED:
            outs = []
            codes = set()
            for tag in ("first", "second"):
                out = tmp_path / f"{cfg_path.stem}-{tag}"
                codes.add(
                    cli.main(["simulate", "--config", str(cfg_path), "--out", str(out)])
                )
                outs.append(out)
            assert len(codes) == 1  # same exit code both times
            names = sorted(p.name for p in outs[0].iterdir())
            assert names == sorted(p.name for p in outs[1].iterdir())
            for name in names:
                first = (outs[0] / name).read_bytes()
                second = (outs[1] / name).read_bytes()
                if name == "manifest.json":
                    a, b = (json.loads(blob) for blob in (first, second))
                    a.pop("timing"), b.pop("timing")
                    assert a == b, f"{cfg_path.stem}/{name}"
                else:
                    assert first == second, f"{cfg_path.stem}/{name}"
                    compared += 1
        info["note"] = f"{compared} data files byte-identical across replays"

"""Command line front end: simulate, kernel-check and invert-demo.

Each subcommand reads one TOML config, writes its artifacts into a run
directory and exits with a scriptable status code:

* ``simulate``     0 clean completion, 1 config error, 2 strain-window
  breach, 3 divergence;
* ``kernel-check`` 0 all hypothesis checks pass, 1 config error, 2 a check
  failed;
* ``invert-demo``  0 observed convergence order >= 1.7, 1 config/usage
  error, 2 order shortfall.

All floating-point output uses 17 significant digits so files round-trip
losslessly; rerunning a config reproduces every data file byte for byte
(wall-clock timings live in a separate manifest field).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from . import diagnostics as diag
from . import kernels as kern
from . import solver as solv
from . import spectral as spect
from .config import DampingSpec, KernelSpec, ProfileSpec, RunConfig, load
from .errors import (
    AccuracyError,
    ConfigError,
    DivergenceError,
    HyperbolicityBreach,
    HypothesisError,
)
from .volterra import apply_inversion, trapezoid_convolve

__all__ = ["main", "build_kernel", "build_damping", "THREADS_ENV"]

THREADS_ENV = "SHEARLAB_THREADS"
EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_CHECKS = 2  # breach (simulate) / failed checks (others)
EXIT_DIVERGED = 3


def _fmt(x) -> str:
    """17-significant-digit decimal: lossless float round-trip."""
    return format(float(x), ".17g")


# ---------------------------------------------------------------------------
# config -> model objects
# ---------------------------------------------------------------------------


def build_kernel(spec: KernelSpec) -> kern.RelaxationKernel:
    if spec.family == "doi-edwards":
        cutoff = None if math.isinf(spec.truncation) else spec.truncation
        return kern.doi_edwards_kernel(truncation_n=cutoff)
    return kern.RelaxationKernel(
        kern.MeasureSpec.from_atoms([(r, w) for r, w in spec.atoms])
    )


def _damping_from_table(path: str, max_theta: float) -> kern.DampingFunction:
    from scipy.interpolate import CubicSpline

    try:
        rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except OSError as err:
        raise ConfigError(f"damping table not readable: {err}") from err
    if rows.shape[1] < 2 or rows.shape[0] < 8:
        raise ConfigError("damping table needs >= 8 rows of y,value pairs")
    y, g = rows[:, 0], rows[:, 1]
    order = np.argsort(y)
    y, g = y[order], g[order]
    if np.any(np.diff(y) <= 0.0):
        raise ConfigError("damping table arguments must be strictly increasing")
    if not (y[0] < 0.0 < y[-1]):
        raise ConfigError("damping table must bracket the origin")
    spline = CubicSpline(y, g)
    domain = float(min(-y[0], y[-1]))
    fns = tuple(
        (lambda m: (lambda z: spline(np.asarray(z, dtype=float), m)))(m) for m in range(4)
    )
    g_fn = kern.DampingFunction(name="table", orders=fns, domain=domain)
    return g_fn.with_constants(
        kern.estimate_damping_constants(g_fn, max_theta=min(max_theta, domain))
    )


def build_damping(spec: DampingSpec) -> kern.DampingFunction:
    if spec.name == "doi-edwards":
        return kern.doi_edwards_damping()
    if spec.name == "linear":
        return kern.linear_damping(spec.slope)
    return _damping_from_table(spec.path, spec.max_theta)


def _profile_kwargs(spec: ProfileSpec, length: float) -> dict:
    out = dict(length=length, amplitude=spec.amplitude, mode=spec.mode)
    if spec.center >= 0.0:
        out["center"] = spec.center
    if spec.width > 0.0:
        out["width"] = spec.width
    if spec.path:
        out["path"] = spec.path
    return out


# ---------------------------------------------------------------------------
# artifact writers
# ---------------------------------------------------------------------------


def _write_csv(path: Path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(cell if isinstance(cell, str) else _fmt(cell) for cell in row))
    path.write_text("\n".join(lines) + "\n")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _json_ready(value):
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        return float(value)
    if isinstance(value, np.ndarray):
        return [_json_ready(v) for v in value.tolist()]
    if isinstance(value, dict):
        return {k: _json_ready(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_ready(v) for v in value]
    return value


def _write_manifest(out_dir: Path, payload: dict, started: float) -> None:
    artifacts = {
        p.name: _sha256(p)
        for p in sorted(out_dir.iterdir())
        if p.is_file() and p.name != "manifest.json"
    }
    payload = dict(payload)
    payload["package"] = {"name": "shearlab", "version": __version__}
    payload["artifacts"] = artifacts
    # wall-clock timing is intentionally quarantined in its own field so that
    # everything else in the manifest is reproducible byte for byte
    payload["timing"] = {"wall_seconds": time.perf_counter() - started}
    text = json.dumps(_json_ready(payload), indent=2, sort_keys=True) + "\n"
    (out_dir / "manifest.json").write_text(text)


def _echo_config(cfg: RunConfig, out_dir: Path) -> dict:
    (out_dir / "config.resolved.toml").write_text(cfg.to_toml())
    return {"config": cfg.to_dict(), "config_sha256": cfg.sha256()}


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def _probe_columns(result, probes) -> tuple[list[str], np.ndarray]:
    grid = result.grid
    x_full = np.concatenate([[0.0], grid.nodes, [grid.length]])
    pad = lambda rows: np.pad(rows, [(0, 0), (1, 1)])
    vals = []
    header = ["t"]
    for name, rows in (("v", pad(result.v)), ("u", pad(result.u))):
        for p in probes:
            header.append(f"{name}@x={p:.6g}")
            vals.append(np.array([np.interp(p, x_full, row) for row in rows]))
    table = np.column_stack([result.times] + vals)
    return header, table


def cmd_simulate(cfg: RunConfig, out_dir: Path, threads: int) -> int:
    started = time.perf_counter()
    kernel = build_kernel(cfg.kernel)
    damping = build_damping(cfg.damping)
    grid = solv.SpatialGrid(cfg.grid.length, cfg.grid.nodes)
    v0 = solv.initial_profile(cfg.initial.kind, **_profile_kwargs(cfg.initial, grid.length))
    forcing = solv.forcing_profile(
        cfg.forcing.kind, decay=cfg.forcing.decay, **_profile_kwargs(cfg.forcing, grid.length)
    )
    base = _echo_config(cfg, out_dir)
    base.update(
        {
            "command": "simulate",
            "kernel_fingerprint": kernel.fingerprint(),
            "damping": damping.name,
        }
    )
    try:
        result = solv.run(
            grid,
            kernel,
            damping,
            v0,
            cfg.time.horizon,
            forcing=forcing,
            dt=cfg.time.dt if cfg.time.dt > 0.0 else None,
            safety=cfg.run.safety,
            breach_policy=cfg.run.breach_policy,
            memory_engine=cfg.run.memory_engine,
        )
    except HyperbolicityBreach as err:
        base.update(
            {
                "status": "breach",
                "exit_code": EXIT_CHECKS,
                "breach": {
                    "time": err.time,
                    "location": err.location,
                    "value": err.value,
                    "threshold": err.threshold,
                },
            }
        )
        _write_manifest(out_dir, base, started)
        print(f"simulate: strain window breached at t={err.time:.6g} (exit 2)")
        return EXIT_CHECKS
    except DivergenceError as err:
        base.update(
            {
                "status": "diverged",
                "exit_code": EXIT_DIVERGED,
                "last_valid_time": err.last_valid_time,
            }
        )
        _write_manifest(out_dir, base, started)
        print(f"simulate: iteration diverged ({err}) (exit 3)")
        return EXIT_DIVERGED

    report = diag.build_report(result, forcing=forcing)
    flags = diag.check_certificates(
        report,
        theta=damping.theta,
        kernel_at_zero=kernel.value_at_zero,
        damping_slope=float(damping(0.0, 1)),
    )
    _write_csv(
        out_dir / "energy.csv",
        [
            "t",
            "total_energy",
            "partial_energy",
            "amplitude",
            "sup_strain",
            "smallness_ok",
            "hyperbolicity_ok",
        ],
        (
            [
                row["t"],
                row["total_energy"],
                row["partial_energy"],
                row["amplitude"],
                row["sup_strain"],
                str(int(row["smallness_ok"])),
                str(int(row["hyperbolicity_ok"])),
            ]
            for row in report.rows()
        ),
    )
    if cfg.output.probes:
        header, table = _probe_columns(result, cfg.output.probes)
        _write_csv(out_dir / "probes.csv", header, table)
    if cfg.output.snapshots:
        stress = solv.compute_stress(result, kernel, damping)
        strain = result.ux()
        for i, t_snap in enumerate(cfg.output.snapshots):
            k = min(int(round(t_snap / result.dt)), result.steps)
            _write_csv(
                out_dir / f"snapshot_{i:02d}.csv",
                [f"x (t={result.times[k]:.6g})", "v", "u", "strain", "stress"],
                np.column_stack(
                    [grid.nodes, result.v[k], result.u[k], strain[k], stress.sigma[k]]
                ),
            )
    scalar_flags = {k: v for k, v in flags.items() if np.ndim(v) == 0}
    base.update(
        {
            "status": result.termination,
            "exit_code": EXIT_OK,
            "dt": result.dt,
            "steps": result.steps,
            "certificates": scalar_flags,
            "stats": result.stats,
        }
    )
    _write_manifest(out_dir, base, started)
    ok = all(bool(v) for k, v in scalar_flags.items() if k.endswith("_ok"))
    print(
        f"simulate: {result.termination}, steps={result.steps}, "
        f"dt={result.dt:.6g}, certificates={'pass' if ok else 'MIXED'} (exit 0)"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# kernel-check
# ---------------------------------------------------------------------------


def cmd_kernel_check(cfg: RunConfig, out_dir: Path, threads: int) -> int:
    started = time.perf_counter()
    kernel = build_kernel(cfg.kernel)
    report: dict = _echo_config(cfg, out_dir)
    report["command"] = "kernel-check"
    checks: dict[str, bool] = {}

    info = {
        "fingerprint": kernel.fingerprint(),
        "atom_count": int(kernel.atom_count),
        "value_at_zero": kernel.value_at_zero,
        "l1_norm": kernel.l1_norm,
        "ramp_moment": kernel.ramp_moment,
        "series_tail": bool(kernel.has_series_tail),
    }
    checks["value_at_zero_positive"] = 0.0 < kernel.value_at_zero < math.inf
    checks["integrable"] = kernel.l1_norm < math.inf

    # alternating derivative signs on a sample grid (total monotonicity)
    t_grid = np.geomspace(1e-2, 20.0, 160)
    mono = {}
    mono_ok = True
    for order in range(4):
        vals = (-1.0) ** order * np.atleast_1d(kernel.eval(t_grid, order))
        worst = float(np.min(vals))
        mono[f"order_{order}_min_signed"] = worst
        mono_ok = mono_ok and worst >= -1e-12
    checks["total_monotonicity"] = mono_ok
    report["total_monotonicity"] = mono

    # strong positivity of the Fourier transform (grid scan needs finitely
    # many atoms; generated families are scanned through a rate cutoff)
    scan_kernel = kernel.truncate(1e4) if kernel.has_series_tail else kernel
    positivity = spect.check_strong_positivity(scan_kernel)
    checks["strong_positivity"] = bool(positivity.ok)
    report["strong_positivity"] = positivity.as_dict()
    report["strong_positivity"]["scanned_truncation"] = (
        None if not kernel.has_series_tail else 1e4
    )

    # ramp-weighted slope moments entering the remainder envelopes
    weights = kern.memory_remainder_weights(kernel, np.linspace(0.0, 5.0, 101))
    report["remainder_weights"] = {
        "abar": weights.total,
        "psi_l1": weights.l1,
        "psi_at_1": float(np.interp(1.0, weights.grid, weights.pointwise)),
    }
    checks["remainder_weights_finite"] = bool(
        np.isfinite(weights.total) and np.isfinite(weights.l1)
    )

    try:
        integrals = kern.smoothness_integrals(kernel)
        report["smoothness_integrals"] = integrals
        checks["smoothness_integrals_finite"] = all(
            np.isfinite(v) for v in integrals.values()
        )
    except (AccuracyError, ConfigError, HypothesisError) as err:
        report["smoothness_integrals"] = {"skipped": str(err)}

    # resolvent-pair norms at a reference grid
    op = spect.build_inversion(scan_kernel, duration=1.0, dt=1e-3)
    report["inversion"] = {
        "power": int(op.power),
        "deriv_kernel_l1": op.deriv_l1,
        "value_kernel_l1": op.value_l1,
        "gain_bound": op.gain_bound,
        "positivity_floor": op.positivity_floor,
    }
    checks["inversion_norms_finite"] = bool(
        np.isfinite(op.deriv_l1) and np.isfinite(op.value_l1)
    )

    report["kernel"] = info
    report["checks"] = checks
    passed = all(checks.values())
    report["status"] = "pass" if passed else "fail"
    report["exit_code"] = EXIT_OK if passed else EXIT_CHECKS
    text = json.dumps(_json_ready(report), indent=2, sort_keys=True) + "\n"
    (out_dir / "kernel_report.json").write_text(text)
    _write_manifest(out_dir, report, started)
    for name in sorted(checks):
        print(f"kernel-check: {'PASS' if checks[name] else 'FAIL'} {name}")
    return EXIT_OK if passed else EXIT_CHECKS


# ---------------------------------------------------------------------------
# invert-demo
# ---------------------------------------------------------------------------


def _roundtrip_error(kernel, duration: float, dt: float) -> float:
    """Relative L2 defect of convolve-then-invert on a smooth reference."""
    n = int(round(duration / dt))
    if n < 4:
        raise ConfigError("invert-demo grid is degenerate (fewer than 4 steps)")
    t = dt * np.arange(n + 1)
    w_true = np.cos(t) * np.exp(-t)
    samples = np.atleast_1d(kernel.eval(t))
    l_data = trapezoid_convolve(samples, w_true, dt)
    op = spect.build_inversion(kernel, duration=duration, dt=dt)
    w_rec = apply_inversion(op, l_data)
    return float(np.linalg.norm(w_rec - w_true) / np.linalg.norm(w_true))


def cmd_invert_demo(cfg: RunConfig, out_dir: Path, threads: int) -> int:
    started = time.perf_counter()
    kernel = build_kernel(cfg.kernel)
    if kernel.has_series_tail:
        kernel = kernel.truncate(1e4)
    dts = [cfg.invert.dt / 2**j for j in range(cfg.invert.halvings)]
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        errors = list(pool.map(lambda h: _roundtrip_error(kernel, cfg.invert.duration, h), dts))
    orders = [math.log2(errors[j] / errors[j + 1]) for j in range(len(errors) - 1)]
    rows = []
    for j, (h, e) in enumerate(zip(dts, errors)):
        rows.append([h, e, "" if j == 0 else _fmt(orders[j - 1])])
    _write_csv(out_dir / "inversion_table.csv", ["dt", "rel_error", "order"], rows)
    min_order = min(orders)
    passed = min_order >= 1.7
    payload = _echo_config(cfg, out_dir)
    payload.update(
        {
            "command": "invert-demo",
            "kernel_fingerprint": kernel.fingerprint(),
            "errors": errors,
            "orders": orders,
            "min_order": min_order,
            "status": "pass" if passed else "fail",
            "exit_code": EXIT_OK if passed else EXIT_CHECKS,
        }
    )
    _write_manifest(out_dir, payload, started)
    print(
        f"invert-demo: min order {min_order:.3f} over {len(dts)} grids "
        f"({'PASS' if passed else 'FAIL'})"
    )
    return EXIT_OK if passed else EXIT_CHECKS


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _resolve_threads(arg_value) -> int:
    if arg_value is not None:
        return max(1, int(arg_value))
    env = os.environ.get(THREADS_ENV, "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError as err:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {env!r}") from err
    return 1


_COMMANDS = {
    "simulate": (cmd_simulate, "run the shear-flow solver and write the energy ledger"),
    "kernel-check": (cmd_kernel_check, "verify kernel hypotheses and write the report"),
    "invert-demo": (cmd_invert_demo, "convolution round-trip at three grid resolutions"),
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="shearlab",
        description="Numerical laboratory for shear flows with fading memory.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (handler, help_text) in _COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="TOML scenario file")
        p.add_argument(
            "--out", default=None, help="run directory (default: output.directory from config)"
        )
        p.add_argument(
            "--threads",
            type=int,
            default=None,
            help=f"worker threads (default: ${THREADS_ENV} or 1)",
        )
        p.set_defaults(handler=handler)
    args = parser.parse_args(argv)
    try:
        threads = _resolve_threads(args.threads)
        cfg = load(args.config)
        out_dir = Path(args.out) if args.out else Path(cfg.output.directory)
        out_dir.mkdir(parents=True, exist_ok=True)
        return args.handler(cfg, out_dir, threads)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except HyperbolicityBreach as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CHECKS
    except DivergenceError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

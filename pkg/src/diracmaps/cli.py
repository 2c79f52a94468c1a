"""Command-line front end: verify invariants, solve scenarios, tabulate results.

Verbs
    verify --scenario S --out DIR   run the named invariant checks, write
                                    verify.json, exit 0 iff every check passes
    solve  --scenario S --out DIR   harmonic flow + kernel spinor; writes
                                    result.json, field snapshots, trajectory.csv
    report RESULT.json ... --out DIR  one summary CSV row per result, plus
                                    figures rendered next to the CSV

Shared flags: --backend dense|iterative, --grid-override N.

Exit codes: 0 success, 1 check failure, 2 usage/config error,
3 solver failure (non-convergence, ambiguous kernel, domain exit).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .energy import (energy_for_mode, energy_momentum, first_variation_gap,
                     hopf_differential)
from .errors import (AmbiguousKernelError, ChartDomainError, ConfigError,
                     DiracmapsError, ModeCompatibilityError,
                     NonConvergenceError, SizeOverflowError)
from .fields import (GridGeometry, VectorSpinorField, metric_on_map,
                     random_smooth_fields, random_spinor_variation,
                     save_map_snapshot, save_spinor_snapshot, spinor_l2_inner)
from .operators import twisted_dirac
from .scenario import Scenario, _is_power_of_two, load_scenario
from .solver import BACKENDS, uncoupled_solution
from .target import torsion_at

# verification tolerances; the check names are part of the CLI contract
SKEW_TOLERANCE = 1e-10
IMAG_TOLERANCE = 1e-12
SELF_ADJOINT_TOLERANCE = 1e-10
CONFORMAL_TOLERANCE = 1e-12
VARIATION_TOLERANCE = 1e-6
CONFORMAL_FACTORS = (0.5, 2.0, 7.3)

REPORT_COLUMNS = [
    "scenario_id", "mode",
    "total", "dirichlet", "spinor", "torsion_coupling", "curvature_term",
    "imag_defect",
    "map_residual_torsion", "spinor_residual_torsion",
    "map_residual_plain", "spinor_residual_plain", "coupling_diagnostic",
    "em_trace_norm", "em_antisym_norm", "em_divergence_norm",
    "hopf_dbar_norm",
    "kernel_dimension", "iterations_used", "smallest_singular_value",
]

RESIDUAL_KEYS = ["map_residual_torsion", "spinor_residual_torsion",
                 "map_residual_plain", "spinor_residual_plain",
                 "coupling_diagnostic"]


# ---------------------------------------------------------------------------
# small utilities


def _clean(obj):
    """Recursively make a payload strict-JSON safe (no numpy, no NaN)."""
    if isinstance(obj, dict):
        return {key: _clean(val) for key, val in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(val) for val in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def _write_json(path: Path, payload: dict):
    path.write_text(json.dumps(_clean(payload), indent=2, allow_nan=False)
                    + "\n")


def _write_trajectory(path: Path, trajectory: list):
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(
            f, fieldnames=["iteration", "dirichlet", "tension_norm", "step"])
        writer.writeheader()
        for record in trajectory:
            writer.writerow(record)


def _load_with_overrides(args) -> Scenario:
    scenario = load_scenario(args.scenario)
    if args.grid_override is not None:
        if not _is_power_of_two(args.grid_override):
            raise ConfigError(f"--grid-override: the spectral backend needs "
                              f"a power of two, got {args.grid_override}")
        scenario = replace(scenario,
                           grid={**scenario.grid, "n": args.grid_override})
    if args.backend is not None:
        scenario = replace(scenario,
                           solver=replace(scenario.solver,
                                          backend=args.backend))
    return scenario


# ---------------------------------------------------------------------------
# verify


def _run_check(checks: list, name: str, tolerance: float, fn):
    """Run one named check; any package error becomes a recorded failure."""
    try:
        measured = float(fn())
        entry = {"name": name, "measured": measured, "tolerance": tolerance,
                 "passed": bool(measured <= tolerance)}
    except DiracmapsError as exc:
        entry = {"name": name, "measured": None, "tolerance": tolerance,
                 "passed": False,
                 "detail": f"{type(exc).__name__}: {exc}"}
    checks.append(entry)


def _energy_parts(report) -> list[float]:
    parts = [report.total, report.dirichlet, report.spinor,
             report.torsion_coupling]
    if report.curvature_term is not None:
        parts.append(report.curvature_term)
    return parts


def cmd_verify(args) -> int:
    scenario = _load_with_overrides(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    geom = scenario.geometry()
    chart = scenario.chart()
    # generic band-limited fields; every check needs a nonzero spinor.  The
    # map amplitude is kept small because curved-chart metrics are not
    # band-limited: on a grid that cannot resolve them the checks fail,
    # which is exactly the signal a too-coarse scenario should produce.
    phi, psi = random_smooth_fields(geom, chart, seed=scenario.seed + 11,
                                    band_limit=2, map_amplitude=0.02,
                                    spinor_amplitude=0.3)
    chi = VectorSpinorField(values=random_spinor_variation(
        geom, chart.dim, seed=scenario.seed + 77, band_limit=2, amplitude=0.3))

    checks: list[dict] = []

    def skew_defect() -> float:
        A = torsion_at(chart, phi.chart_points(geom))
        if not np.any(A):
            return 0.0
        return float(np.max(np.abs(A + np.swapaxes(A, -1, -2))))

    def imag_defect() -> float:
        report = energy_for_mode(geom, chart, phi, psi, scenario.mode)
        return report.imag_defect

    def self_adjointness() -> float:
        g = metric_on_map(geom, chart, phi)
        a = spinor_l2_inner(geom, g, chi, twisted_dirac(geom, chart, phi, psi))
        b = spinor_l2_inner(geom, g, twisted_dirac(geom, chart, phi, chi), psi)
        return abs(a - b) / max(1.0, abs(a), abs(b))

    def conformal_drift() -> float:
        base = _energy_parts(energy_for_mode(geom, chart, phi, psi,
                                             scenario.mode))
        drift = 0.0
        for c in CONFORMAL_FACTORS:
            geom_c = GridGeometry(n_side=geom.n_side, length=geom.length,
                                  conformal_factor=geom.conformal_factor * c)
            # constant conformal change: the spinor carries weight -1/2
            psi_c = VectorSpinorField(values=psi.values / math.sqrt(c))
            parts = _energy_parts(energy_for_mode(geom_c, chart, phi, psi_c,
                                                  scenario.mode))
            drift = max(drift,
                        max(abs(p - q) / max(1.0, abs(q))
                            for p, q in zip(parts, base)))
        return drift

    def variation_gap() -> float:
        return max(first_variation_gap(geom, chart, phi, psi, scenario.mode,
                                       seed=scenario.seed + 100 + k)
                   for k in (1, 2))

    _run_check(checks, "torsion-skewness", SKEW_TOLERANCE, skew_defect)
    _run_check(checks, "real-valuedness-precondition", IMAG_TOLERANCE,
               imag_defect)
    _run_check(checks, "dirac-self-adjointness", SELF_ADJOINT_TOLERANCE,
               self_adjointness)
    _run_check(checks, "conformal-invariance", CONFORMAL_TOLERANCE,
               conformal_drift)
    _run_check(checks, "variational-identity", VARIATION_TOLERANCE,
               variation_gap)

    all_passed = all(c["passed"] for c in checks)
    _write_json(out_dir / "verify.json", {
        "schema_version": 1,
        "scenario_id": scenario.display_id(),
        "mode": scenario.mode,
        "grid": scenario.grid,
        "checks": checks,
        "all_passed": all_passed,
    })
    for c in checks:
        status = "PASS" if c["passed"] else "FAIL"
        measured = ("n/a" if c["measured"] is None
                    else f"{c['measured']:.3e}")
        print(f"[{status}] {c['name']:<32} measured={measured:<10} "
              f"tol={c['tolerance']:.1e}")
    return 0 if all_passed else 1


# ---------------------------------------------------------------------------
# solve


def cmd_solve(args) -> int:
    scenario = _load_with_overrides(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    geom = scenario.geometry()
    chart = scenario.chart()
    phi0 = scenario.initial_map_field(geom, chart)

    try:
        result = uncoupled_solution(geom, chart, phi0, scenario.solver)
    except NonConvergenceError as exc:
        _write_trajectory(out_dir / "trajectory.csv", exc.trajectory or [])
        print(f"solver error: {exc} (partial trajectory written)",
              file=sys.stderr)
        return 3

    energy = energy_for_mode(geom, chart, result.phi, result.psi,
                             scenario.mode)
    em = energy_momentum(geom, chart, result.phi, result.psi)
    hopf = hopf_differential(geom, chart, result.phi, result.psi)

    _write_json(out_dir / "result.json", {
        "schema_version": 1,
        "scenario_id": scenario.display_id(),
        "mode": scenario.mode,
        "scenario": scenario.to_dict(),
        "energy": energy.as_dict(),
        "el_report": result.el_report.as_dict(),
        "kernel_dimension": result.kernel_dimension_estimate,
        "smallest_singular_value": result.smallest_singular_value,
        "iterations_used": result.iterations_used,
        "energy_momentum": {"trace_norm": em.trace_norm,
                            "antisym_norm": em.antisym_norm,
                            "divergence_norm": em.divergence_norm},
        "hopf": {"dbar_norm": hopf.dbar_norm},
        "trajectory": result.trajectory,
        "snapshots": {"map": "phi.f64", "spinor": "psi.f64"},
    })
    save_map_snapshot(out_dir / "phi.f64", geom, result.phi)
    save_spinor_snapshot(out_dir / "psi.f64", geom, result.psi)
    _write_trajectory(out_dir / "trajectory.csv", result.trajectory)

    print(f"solved {scenario.display_id()}: dirichlet={energy.dirichlet:.9g} "
          f"kernel_dim={result.kernel_dimension_estimate} "
          f"iterations={result.iterations_used}")
    return 0


# ---------------------------------------------------------------------------
# report


def _result_row(path: Path) -> tuple[dict, list]:
    try:
        data = json.loads(path.read_text())
        energy = data["energy"]
        el = data["el_report"]
        em = data["energy_momentum"]
        row = {
            "scenario_id": data["scenario_id"],
            "mode": data["mode"],
            "total": energy["total"],
            "dirichlet": energy["dirichlet"],
            "spinor": energy["spinor"],
            "torsion_coupling": energy["torsion_coupling"],
            "curvature_term": energy["curvature_term"],
            "imag_defect": energy["imag_defect"],
            "map_residual_torsion": el["map_residual_torsion"],
            "spinor_residual_torsion": el["spinor_residual_torsion"],
            "map_residual_plain": el["map_residual_plain"],
            "spinor_residual_plain": el["spinor_residual_plain"],
            "coupling_diagnostic": el["coupling_diagnostic"],
            "em_trace_norm": em["trace_norm"],
            "em_antisym_norm": em["antisym_norm"],
            "em_divergence_norm": em["divergence_norm"],
            "hopf_dbar_norm": data["hopf"]["dbar_norm"],
            "kernel_dimension": data["kernel_dimension"],
            "iterations_used": data["iterations_used"],
            "smallest_singular_value": data["smallest_singular_value"],
        }
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ConfigError(f"result file {path}: {exc}") from None
    return row, data.get("trajectory", [])


def _render_figures(out_dir: Path, rows: list[dict], trajectories: list):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    for sid, trajectory in trajectories:
        if trajectory:
            ax.plot([r["iteration"] for r in trajectory],
                    [r["dirichlet"] for r in trajectory], label=sid)
    ax.set_xlabel("flow iteration")
    ax.set_ylabel("Dirichlet energy")
    ax.set_title("harmonic flow energy")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_dir / "report_energy_flow.png", dpi=150)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    x = np.arange(len(rows), dtype=float)
    width = 0.8 / len(RESIDUAL_KEYS)
    for j, key in enumerate(RESIDUAL_KEYS):
        vals = [max(abs(row[key]), 1e-17) for row in rows]
        ax.bar(x + j * width, vals, width, label=key)
    ax.set_yscale("log")
    ax.set_xticks(x + 0.4 - width / 2)
    ax.set_xticklabels([row["scenario_id"] for row in rows],
                       rotation=20, ha="right", fontsize=8)
    ax.set_ylabel("residual L2 norm")
    ax.set_title("Euler-Lagrange residuals")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(out_dir / "report_residuals.png", dpi=150)
    plt.close(fig)


def cmd_report(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    rows, trajectories = [], []
    for path in args.results:
        row, trajectory = _result_row(Path(path))
        rows.append(row)
        trajectories.append((row["scenario_id"], trajectory))

    csv_path = out_dir / "summary.csv"
    with open(csv_path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=REPORT_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if v is None else v)
                             for k, v in row.items()})

    if rows:
        _render_figures(out_dir, rows, trajectories)
    print(f"wrote {csv_path} ({len(rows)} rows)")
    return 0


# ---------------------------------------------------------------------------
# entry point


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="diracmaps",
        description="Dirac-harmonic map scenarios: verify invariants, "
                    "solve, and tabulate results.")
    sub = parser.add_subparsers(dest="command", required=True,
                                metavar="{verify,solve,report}")

    def add_scenario_flags(sp):
        sp.add_argument("--scenario", required=True,
                        help="scenario JSON file")
        sp.add_argument("--out", required=True,
                        help="output directory (created if missing)")
        sp.add_argument("--backend", choices=BACKENDS,
                        help="override the scenario's solver backend")
        sp.add_argument("--grid-override", type=int, metavar="N",
                        help="override grid.n (must be a power of two)")

    add_scenario_flags(sub.add_parser(
        "verify", help="run the named invariant checks for a scenario"))
    add_scenario_flags(sub.add_parser(
        "solve", help="harmonic flow + Dirac kernel; write result files"))
    rep = sub.add_parser(
        "report", help="summarise result files into a CSV with figures")
    rep.add_argument("results", nargs="*",
                     help="result.json files produced by solve")
    rep.add_argument("--out", required=True,
                     help="output directory (created if missing)")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "verify":
            return cmd_verify(args)
        if args.command == "solve":
            return cmd_solve(args)
        return cmd_report(args)
    except (ConfigError, ModeCompatibilityError, SizeOverflowError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (NonConvergenceError, AmbiguousKernelError,
            ChartDomainError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())

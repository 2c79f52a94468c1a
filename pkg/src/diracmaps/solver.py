"""Uncoupled solutions: gradient flow for the map, then a Dirac kernel element.

The two stages are deliberately independent. The flow only sees the Dirichlet
energy; the kernel solve only sees the operator assembled at the converged
map. The combined result therefore solves the coupled system exactly when the
curvature/torsion force evaluated on the pair vanishes, and the report
records that force as a diagnostic instead of asserting it away.

Kernel detection is scale-aware: singular values below 1e-8 times a power
iteration estimate of the operator norm count as kernel, values within a
factor 10 above the cut trigger an explicit ambiguity error rather than a
guess. The dense backend computes the full spectrum up to 2048 unknowns and
switches to a windowed Hermitian eigensolve (100 thresholds half-width, which
contains the whole ambiguity band) above that; the window keeps the degree-1
wrap scenario at N = 32 tractable. The iterative backend runs LOBPCG on the
squared symmetrized operator and exists for sizes past the dense cap; the
dense backend is the authoritative one for tests.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from .clifford import DEFAULT_FRAME, CliffordFrame
from .energy import curvature_coupling, dirichlet_energy, el_residual, f_tor, tension
from .errors import (
    AmbiguousKernelError,
    ChartDomainError,
    ConfigError,
    NonConvergenceError,
)
from .fields import (
    GridGeometry,
    MapField,
    VectorSpinorField,
    map_l2_norm,
    metric_on_map,
    spinor_l2_norm,
)
from .operators import AssembledDiracOperator, assemble_dirac, twisted_dirac
from .target import TargetChart

FULL_EIGH_DOF_CAP = 2048       # full dense spectrum below this, windowed above
KERNEL_DETECTION_RTOL = 1e-8   # threshold = this times the operator norm estimate
AMBIGUITY_FACTOR = 10.0
WINDOW_FACTOR = 100.0          # windowed-eigensolve half width, in thresholds
LINE_SEARCH_CAP = 30

BACKENDS = ("dense", "iterative")


@dataclass(frozen=True)
class SolverConfig:
    step_size: float = 0.25
    max_iterations: int = 500
    map_tolerance: float = 1e-6
    kernel_tolerance: float = 1e-8
    backend: str = "dense"

    def __post_init__(self):
        if self.step_size <= 0:
            raise ConfigError(f"step_size must be positive, got {self.step_size}")
        if self.max_iterations < 1:
            raise ConfigError(
                f"max_iterations must be at least 1, got {self.max_iterations}")
        if self.map_tolerance <= 0 or self.kernel_tolerance <= 0:
            raise ConfigError("tolerances must be positive")
        if self.backend not in BACKENDS:
            raise ConfigError(
                f"backend must be one of {BACKENDS}, got {self.backend!r}")


@dataclass(frozen=True)
class ELReport:
    """Residual norms of the coupled system at a candidate pair."""

    map_residual_torsion: float
    spinor_residual_torsion: float
    map_residual_plain: float
    spinor_residual_plain: float
    coupling_diagnostic: float      # L2 norm of the curvature + torsion force

    def as_dict(self) -> dict:
        return {
            "map_residual_torsion": self.map_residual_torsion,
            "spinor_residual_torsion": self.spinor_residual_torsion,
            "map_residual_plain": self.map_residual_plain,
            "spinor_residual_plain": self.spinor_residual_plain,
            "coupling_diagnostic": self.coupling_diagnostic,
        }


@dataclass(frozen=True)
class KernelResult:
    psi: VectorSpinorField
    dimension: int
    smallest_singular_value: float
    threshold: float
    operator_norm_estimate: float


@dataclass(frozen=True)
class SolverResult:
    phi: MapField
    psi: VectorSpinorField
    el_report: ELReport
    kernel_dimension_estimate: int
    iterations_used: int
    trajectory: list
    smallest_singular_value: float


# ----------------------------------------------------------------------
# harmonic map flow
# ----------------------------------------------------------------------

def _flow_record(iteration, energy, residual, step):
    return {"iteration": iteration, "dirichlet": energy,
            "tension_norm": residual, "step": step}


def harmonic_map_flow(geom: GridGeometry, chart: TargetChart, phi: MapField,
                      config: SolverConfig) -> tuple[MapField, list[dict]]:
    """Energy-monotone descent along the tension field.

    Every iteration restarts the halving line search from config.step_size,
    so the flow takes large steps whenever the current state tolerates them
    and automatically drops to the stability step when it does not.
    """
    energy = dirichlet_energy(geom, chart, phi)
    tau = tension(geom, chart, phi)
    residual = map_l2_norm(geom, metric_on_map(geom, chart, phi), tau)
    trajectory = [_flow_record(0, energy, residual, 0.0)]
    if residual <= config.map_tolerance:
        return phi, trajectory

    for iteration in range(1, config.max_iterations + 1):
        step = config.step_size
        accepted = None
        domain_exit = None
        for _ in range(LINE_SEARCH_CAP):
            candidate = replace(phi, values=phi.values + step * tau)
            try:
                cand_energy = dirichlet_energy(geom, chart, candidate)
            except ChartDomainError as err:
                domain_exit = err
                step *= 0.5
                continue
            if cand_energy <= energy:
                accepted = (candidate, cand_energy)
                break
            step *= 0.5
        if accepted is None:
            if domain_exit is not None:
                raise ChartDomainError(
                    f"flow left the chart domain at iteration {iteration}: "
                    f"{domain_exit}")
            raise NonConvergenceError(
                f"line search found no energy-non-increasing step at iteration "
                f"{iteration} (dirichlet {energy:.6e})", trajectory=trajectory)

        phi, energy = accepted
        tau = tension(geom, chart, phi)
        residual = map_l2_norm(geom, metric_on_map(geom, chart, phi), tau)
        trajectory.append(_flow_record(iteration, energy, residual, step))
        if residual <= config.map_tolerance:
            return phi, trajectory

    raise NonConvergenceError(
        f"tension norm {residual:.3e} still above {config.map_tolerance:.3e} "
        f"after {config.max_iterations} iterations", trajectory=trajectory)


# ----------------------------------------------------------------------
# Dirac kernel solve
# ----------------------------------------------------------------------

def _start_vector(dof: int) -> np.ndarray:
    # deterministic, structureless enough to have weight on every eigenspace
    idx = np.arange(dof)
    v = (1.0 + 0.3 * np.sin(0.7 * idx)) + 1j * (0.5 + 0.2 * np.cos(1.3 * idx))
    return v / np.linalg.norm(v)


def _operator_norm_estimate(op: AssembledDiracOperator, iterations: int = 40) -> float:
    v = _start_vector(op.dof)
    norm = 1.0
    for _ in range(iterations):
        w = op.symmetrized_matvec(v)
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
    return float(norm)


def _smallest_by_inverse_iteration(H: np.ndarray, iterations: int = 60) -> float:
    lu = scipy.linalg.lu_factor(H)
    v = _start_vector(H.shape[0])
    for _ in range(iterations):
        w = scipy.linalg.lu_solve(lu, v)
        v = w / np.linalg.norm(w)
    return float(abs(np.vdot(v, H @ v)))


def _dense_window(op: AssembledDiracOperator, threshold: float):
    """Eigenpairs of the Hermitized symmetrized matrix around zero."""
    H = op.symmetrized_dense()
    H = 0.5 * (H + H.conj().T)
    if op.dof <= FULL_EIGH_DOF_CAP:
        w, V = np.linalg.eigh(H)
        return H, w, V, True
    half = WINDOW_FACTOR * threshold
    w, V = scipy.linalg.eigh(H, subset_by_value=(-half, half), driver="evr")
    return H, w, V, False


def _iterative_window(op: AssembledDiracOperator, threshold: float):
    """Smallest singular pairs from LOBPCG on the squared operator."""
    dof = op.dof
    k = min(2 * op.dim + 2, max(dof // 4, 1))

    def squared(x):
        cols = np.atleast_2d(x.T).T
        out = np.empty_like(cols, dtype=complex)
        for j in range(cols.shape[1]):
            out[:, j] = op.symmetrized_matvec(op.symmetrized_matvec(cols[:, j]))
        return out if x.ndim > 1 else out[:, 0]

    lin = scipy.sparse.linalg.LinearOperator((dof, dof), matvec=squared,
                                             matmat=squared, dtype=complex)
    rng = np.random.default_rng(1234)
    X = rng.standard_normal((dof, k)) + 1j * rng.standard_normal((dof, k))
    with warnings.catch_warnings():
        # the residual tolerance is advisory: the subspace only has to be
        # good enough for the true-matvec sigma measurement below, and the
        # kernel candidate is residual-checked a posteriori anyway
        warnings.filterwarnings("ignore",
                                message="Exited at iteration",
                                category=UserWarning)
        _, vecs = scipy.sparse.linalg.lobpcg(lin, X, largest=False, tol=1e-8,
                                             maxiter=200)
    # sqrt of a LOBPCG eigenvalue loses half the digits right where the
    # kernel threshold lives; measure sigma from the operator instead
    sigma = np.array([np.linalg.norm(op.symmetrized_matvec(vecs[:, j]))
                      / np.linalg.norm(vecs[:, j]) for j in range(vecs.shape[1])])
    order = np.argsort(sigma)
    return sigma[order], vecs[:, order], False


def dirac_kernel_solve(geom: GridGeometry, chart: TargetChart, phi: MapField,
                       config: SolverConfig, torsion: bool = True,
                       frame: CliffordFrame = DEFAULT_FRAME) -> KernelResult:
    """Kernel element of the assembled operator, or an honest empty report."""
    op = assemble_dirac(geom, chart, phi, torsion=torsion, frame=frame)
    norm_estimate = _operator_norm_estimate(op)
    threshold = KERNEL_DETECTION_RTOL * max(norm_estimate, 1e-300)

    if config.backend == "dense":
        H, eigs, vectors, complete = _dense_window(op, threshold)
        sigma = np.abs(eigs)
        order = np.argsort(sigma)
        sigma, vectors = sigma[order], vectors[:, order]
    else:
        sigma, vectors, complete = _iterative_window(op, threshold)
        H = None

    in_band = (sigma > threshold) & (sigma <= AMBIGUITY_FACTOR * threshold)
    if np.any(in_band):
        raise AmbiguousKernelError(
            "smallest singular values sit inside the kernel guard band "
            f"({threshold:.3e}, {AMBIGUITY_FACTOR * threshold:.3e}]",
            singular_values=sigma[: int(np.sum(sigma <= AMBIGUITY_FACTOR
                                               * threshold)) + 1].tolist())

    dimension = int(np.sum(sigma < threshold))
    if dimension == 0:
        if sigma.size:
            smallest = float(sigma[0])
        elif H is not None:
            # windowed solve found nothing near zero; get the actual extreme
            smallest = _smallest_by_inverse_iteration(H)
        else:
            smallest = float("nan")
        return KernelResult(psi=VectorSpinorField.zero(geom, chart.dim),
                            dimension=0, smallest_singular_value=smallest,
                            threshold=threshold,
                            operator_norm_estimate=norm_estimate)

    psi = op.unsymmetrize_to_field(vectors[:, 0])
    g = metric_on_map(geom, chart, phi)
    psi = VectorSpinorField(values=psi.values / spinor_l2_norm(geom, g, psi))
    applied = twisted_dirac(geom, chart, phi, psi, torsion=torsion, frame=frame)
    residual = spinor_l2_norm(geom, g, applied)
    if residual > config.kernel_tolerance:
        raise AmbiguousKernelError(
            f"candidate kernel vector has true residual {residual:.3e} above "
            f"kernel_tolerance {config.kernel_tolerance:.3e} (Hermitized "
            "spectrum disagrees with the operator)",
            singular_values=sigma[:dimension + 1].tolist())
    return KernelResult(psi=psi, dimension=dimension,
                        smallest_singular_value=float(sigma[0]),
                        threshold=threshold,
                        operator_norm_estimate=norm_estimate)


# ----------------------------------------------------------------------
# uncoupled solution
# ----------------------------------------------------------------------

def evaluate_el_report(geom: GridGeometry, chart: TargetChart, phi: MapField,
                       psi: VectorSpinorField,
                       frame: CliffordFrame = DEFAULT_FRAME) -> ELReport:
    g = metric_on_map(geom, chart, phi)
    res = el_residual(geom, chart, phi, psi, mode="torsion", frame=frame)
    tau = tension(geom, chart, phi)
    coupling = curvature_coupling(geom, chart, phi, psi, frame=frame)
    force = f_tor(geom, chart, phi, psi, frame=frame)
    plain_spinor = twisted_dirac(geom, chart, phi, psi, torsion=False, frame=frame)
    return ELReport(
        map_residual_torsion=map_l2_norm(geom, g, res.map_residual),
        spinor_residual_torsion=spinor_l2_norm(geom, g, res.spinor_residual),
        map_residual_plain=map_l2_norm(geom, g, tau - coupling),
        spinor_residual_plain=spinor_l2_norm(geom, g, plain_spinor),
        coupling_diagnostic=map_l2_norm(geom, g, coupling + force),
    )


def uncoupled_solution(geom: GridGeometry, chart: TargetChart, phi0: MapField,
                       config: SolverConfig,
                       frame: CliffordFrame = DEFAULT_FRAME) -> SolverResult:
    """Flow the map to harmonic, then attach a kernel spinor (zero if none)."""
    phi, trajectory = harmonic_map_flow(geom, chart, phi0, config)
    kernel = dirac_kernel_solve(geom, chart, phi, config, frame=frame)
    report = evaluate_el_report(geom, chart, phi, kernel.psi, frame=frame)
    return SolverResult(
        phi=phi,
        psi=kernel.psi,
        el_report=report,
        kernel_dimension_estimate=kernel.dimension,
        iterations_used=len(trajectory) - 1,
        trajectory=trajectory,
        smallest_singular_value=kernel.smallest_singular_value,
    )


__all__ = [
    "BACKENDS",
    "ELReport",
    "KernelResult",
    "SolverConfig",
    "SolverResult",
    "dirac_kernel_solve",
    "evaluate_el_report",
    "harmonic_map_flow",
    "uncoupled_solution",
]

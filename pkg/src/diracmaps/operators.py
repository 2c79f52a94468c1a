"""Twisted Dirac operator with torsion, its square, and the Weitzenböck check.

The operator acts on vector-valued spinor grids along a map phi. Everything
here is expressed through the pull-back covariant derivative from `fields`,
so the matrix-free `apply`, the dense materialization, and the analytic
identities all share one definition of the connection.
"""

from __future__ import annotations

import numpy as np

from .clifford import DEFAULT_FRAME, CliffordFrame, clifford_multiply
from .errors import SizeOverflowError
from .fields import (
    GridGeometry,
    MapField,
    VectorSpinorField,
    frame_derivative,
    metric_on_map,
    pullback_connection,
    spinor_covariant_derivative,
    spinor_l2_inner,
)
from .target import (
    TargetChart,
    inverse_metric_at,
    lc_curvature_at,
    nabla_torsion_at,
    torsion_at,
)

# Dense materialization guard: 2 * n * N^2 complex degrees of freedom.
DENSE_DOF_CAP = 8192


def twisted_dirac(geom: GridGeometry, chart: TargetChart, phi: MapField,
                  psi: VectorSpinorField, torsion: bool = True,
                  frame: CliffordFrame = DEFAULT_FRAME,
                  connection: np.ndarray | None = None) -> VectorSpinorField:
    """Apply sum_alpha gamma_alpha . (covariant derivative along e_alpha)."""
    chart.check_domain(phi.chart_points(geom))
    if connection is None:
        connection = pullback_connection(geom, chart, phi, torsion)
    out = np.zeros_like(psi.values)
    for alpha in (1, 2):
        cov = spinor_covariant_derivative(geom, chart, phi, psi, alpha,
                                          torsion=torsion, connection=connection)
        out += clifford_multiply(alpha, cov.values, frame)
    return VectorSpinorField(values=out)


def connection_laplacian(geom: GridGeometry, chart: TargetChart, phi: MapField,
                         psi: VectorSpinorField, torsion: bool = True,
                         connection: np.ndarray | None = None) -> VectorSpinorField:
    """Sum of squared covariant derivatives (flat frame: no divergence terms)."""
    chart.check_domain(phi.chart_points(geom))
    if connection is None:
        connection = pullback_connection(geom, chart, phi, torsion)
    out = np.zeros_like(psi.values)
    for alpha in (1, 2):
        first = spinor_covariant_derivative(geom, chart, phi, psi, alpha,
                                            torsion=torsion, connection=connection)
        second = spinor_covariant_derivative(geom, chart, phi, first, alpha,
                                             torsion=torsion, connection=connection)
        out += second.values
    return VectorSpinorField(values=out)


def weitzenbock_defect(geom: GridGeometry, chart: TargetChart, phi: MapField,
                       psi: VectorSpinorField,
                       frame: CliffordFrame = DEFAULT_FRAME) -> float:
    """L^2 norm of D^2 psi minus its Bochner-type right-hand side.

    The right side keeps the Levi-Civita curvature term separate from the
    explicit torsion terms (derivative of the torsion plus its square); the
    torsion groups run over alpha != beta, which is the antisymmetrized
    combination the commutator of covariant derivatives actually produces.
    The domain scalar-curvature term is absent on the flat torus.
    """
    pts = phi.chart_points(geom)
    chart.check_domain(pts)
    connection = pullback_connection(geom, chart, phi, torsion=True)

    d_psi = twisted_dirac(geom, chart, phi, psi, frame=frame, connection=connection)
    dd_psi = twisted_dirac(geom, chart, phi, d_psi, frame=frame, connection=connection)
    lap = connection_laplacian(geom, chart, phi, psi, connection=connection)

    ginv = inverse_metric_at(chart, pts)
    riem = lc_curvature_at(chart, pts)
    X = {alpha: frame_derivative(geom, phi, alpha) for alpha in (1, 2)}
    with_torsion = not chart.torsion.is_zero
    if with_torsion:
        A = torsion_at(chart, pts)
        nabA = nabla_torsion_at(chart, pts)

    rhs = -lap.values
    for a, b in ((1, 2), (2, 1)):
        term = 0.5 * np.einsum("...i,...j,...ijkl,...ls,...kc->...sc",
                               X[a], X[b], riem, ginv, psi.values)
        if with_torsion:
            term += np.einsum("...p,...j,...pjkl,...ls,...kc->...sc",
                              X[a], X[b], nabA, ginv, psi.values)
            inner = np.einsum("...jkl,...ls,...j,...kc->...sc",
                              A, ginv, X[b], psi.values)
            term += np.einsum("...jkl,...ls,...j,...kc->...sc",
                              A, ginv, X[a], inner)
        rhs += clifford_multiply(a, clifford_multiply(b, term, frame), frame)

    defect = VectorSpinorField(values=dd_psi.values - rhs)
    g = metric_on_map(geom, chart, phi)
    return float(np.sqrt(max(spinor_l2_inner(geom, g, defect, defect).real, 0.0)))


class AssembledDiracOperator:
    """Linear-operator handle over the flattened spinor unknowns.

    Degrees of freedom are ordered node-major, then target component, then
    spin component: index = ((x*N + y)*n + i)*2 + s. `apply` is matrix-free;
    `dense()` materializes the coordinate-basis matrix column by column from
    the same apply, and `symmetrized_dense()` conjugates it with the
    node-wise metric square root so the result is Hermitian.
    """

    def __init__(self, geom: GridGeometry, chart: TargetChart, phi: MapField,
                 torsion: bool = True, frame: CliffordFrame = DEFAULT_FRAME):
        pts = phi.chart_points(geom)
        chart.check_domain(pts)
        self.geom = geom
        self.chart = chart
        self.phi = phi
        self.torsion = torsion
        self.frame = frame
        K = pullback_connection(geom, chart, phi, torsion)
        # pointwise coupling matrices B_alpha^i_k = K^i_jk d_alpha phi^j
        self._B = [np.einsum("...ijk,...j->...ik", K,
                             phi.coordinate_gradient(geom, axis))
                   for axis in (0, 1)]
        g = metric_on_map(geom, chart, phi)
        w, Q = np.linalg.eigh(g)
        sq = np.sqrt(w)
        self._g_half = np.einsum("...ik,...k,...jk->...ij", Q, sq, Q)
        self._g_half_inv = np.einsum("...ik,...k,...jk->...ij", Q, 1.0 / sq, Q)
        self._dense = None
        self._sym_dense = None

    @property
    def dim(self) -> int:
        return self.chart.dim

    @property
    def dof(self) -> int:
        return 2 * self.dim * self.geom.n_side ** 2

    def _field_shape(self):
        N = self.geom.n_side
        return (N, N, self.dim, 2)

    def apply_field(self, psi: VectorSpinorField) -> VectorSpinorField:
        vals = psi.values
        out = np.zeros_like(vals)
        for axis in (0, 1):
            cov = self.geom.partial(vals, axis) \
                + np.einsum("...ik,...ks->...is", self._B[axis], vals)
            out += clifford_multiply(axis + 1, cov, self.frame)
        return VectorSpinorField(values=out / self.geom.conformal_factor)

    def apply(self, vec: np.ndarray) -> np.ndarray:
        psi = VectorSpinorField(values=np.asarray(vec, dtype=complex)
                                .reshape(self._field_shape()))
        return self.apply_field(psi).values.reshape(-1)

    def symmetrized_matvec(self, vec: np.ndarray) -> np.ndarray:
        """Apply G^{1/2} D G^{-1/2}, which is Hermitian in the plain inner product."""
        psi = np.asarray(vec, dtype=complex).reshape(self._field_shape())
        psi = np.einsum("...ij,...js->...is", self._g_half_inv, psi)
        out = self.apply_field(VectorSpinorField(values=psi)).values
        out = np.einsum("...ij,...js->...is", self._g_half, out)
        return out.reshape(-1)

    def to_field(self, vec: np.ndarray) -> VectorSpinorField:
        return VectorSpinorField(values=np.asarray(vec, dtype=complex)
                                 .reshape(self._field_shape()))

    def unsymmetrize_to_field(self, vec: np.ndarray) -> VectorSpinorField:
        """Map a symmetrized-coordinate vector back to a spinor field (G^{-1/2})."""
        w = np.asarray(vec, dtype=complex).reshape(self._field_shape())
        return VectorSpinorField(
            values=np.einsum("...ij,...js->...is", self._g_half_inv, w))

    def _check_dense_size(self):
        if self.dof > DENSE_DOF_CAP:
            raise SizeOverflowError(
                f"dense materialization needs {self.dof} unknowns; "
                f"cap is {DENSE_DOF_CAP} (use the iterative backend)")

    def dense(self) -> np.ndarray:
        """Coordinate-basis matrix, built column by column from `apply`."""
        if self._dense is None:
            self._check_dense_size()
            n = self.dof
            M = np.empty((n, n), dtype=complex)
            basis = np.zeros(n, dtype=complex)
            for j in range(n):
                basis[j] = 1.0
                M[:, j] = self.apply(basis)
                basis[j] = 0.0
            self._dense = M
        return self._dense

    def symmetrized_dense(self) -> np.ndarray:
        """Hermitian matrix G^{1/2} M G^{-1/2} over the flattened unknowns."""
        if self._sym_dense is None:
            M = self.dense()
            N2 = self.geom.n_side ** 2
            n = self.dim
            blocks = M.reshape(N2, n, 2, N2, n, 2)
            gh = self._g_half.reshape(N2, n, n)
            ghi = self._g_half_inv.reshape(N2, n, n)
            out = np.einsum("Xij,XjsYlt->XisYlt", gh, blocks)
            out = np.einsum("XisYlt,Ylk->XisYkt", out, ghi)
            self._sym_dense = out.reshape(self.dof, self.dof)
        return self._sym_dense

    def hermitian_defect(self) -> float:
        M = self.symmetrized_dense()
        return float(np.max(np.abs(M - M.conj().T)))


def assemble_dirac(geom: GridGeometry, chart: TargetChart, phi: MapField,
                   torsion: bool = True,
                   frame: CliffordFrame = DEFAULT_FRAME) -> AssembledDiracOperator:
    return AssembledDiracOperator(geom, chart, phi, torsion=torsion, frame=frame)


__all__ = [
    "DENSE_DOF_CAP",
    "AssembledDiracOperator",
    "assemble_dirac",
    "connection_laplacian",
    "twisted_dirac",
    "weitzenbock_defect",
]

"""Target-manifold charts: metric, torsion, Christoffel symbols, curvature.

All evaluators are vectorized: a point argument ``y`` has shape (..., n) and
tensors come back with the batch axes in front, e.g. ``lc_curvature_at``
returns (..., n, n, n, n) with all indices lowered.

Index conventions used throughout (fixed, and pinned by the tests):

  * metric derivative  dg[..., a, i, j]   = d_a g_ij
  * Christoffel        Gamma[..., i, j, k] = Gamma^i_jk (symmetric in j,k)
  * torsion            A[..., i, j, k]    = A_ijk = <A(d_i, d_j), d_k>,
                       skew in the last two slots
  * curvature          R[..., i, j, k, l] = <R(d_i, d_j) d_k, d_l> for the
                       commutator convention R(X,Y) = [nabla_X, nabla_Y] - nabla_[X,Y]

With these conventions the curvature of the torsion connection satisfies

  R^Tor_ijkl = R^LC_ijkl + nab_i A_jkl - nab_j A_ikl
               + A_irl A_jk^r - A_jrl A_ik^r

which is what `torsion_curvature_at` implements; for the flat metric with
constant A = kappa * epsilon this reduces to kappa^2 (d_ik d_jl - d_il d_jk),
and the round unit 2-sphere comes out as R_ijkl = g_il g_jk - g_ik g_jl.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ChartDomainError, TorsionSkewnessError

_SKEW_TOL = 1e-10


def _as_callable(payload, n: int, tensor_rank: int):
    """Wrap a constant array payload as a broadcasting point function."""
    if callable(payload):
        return payload, False
    arr = np.asarray(payload, dtype=float)
    expected = (n,) * tensor_rank
    if arr.shape != expected:
        raise ValueError(f"constant payload has shape {arr.shape}, expected {expected}")

    def const(y):
        return np.broadcast_to(arr, y.shape[:-1] + expected).copy()

    return const, True


def levi_civita_3() -> np.ndarray:
    eps = np.zeros((3, 3, 3))
    for i, j, k in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        eps[i, j, k] = 1.0
        eps[i, k, j] = -1.0
    return eps


_EPS3 = levi_civita_3()


@dataclass(frozen=True)
class TorsionSpec:
    """How the torsion tensor A_ijk(y) of the metric connection is generated.

    kind is one of "zero", "vectorial", "totally_antisymmetric", "cartan_type",
    "raw". The vectorial kind stores the potential vector field V (upper index);
    the totally antisymmetric kind stores either an explicit 3-form or the
    scalar ``kappa`` of the scaled volume form kappa * sqrt(det g) * eps_ijk
    (dim 3 only, automatically parallel). cartan_type projects a raw tensor
    onto its traceless cyclic-free part pointwise; raw uses coefficients as-is.
    """

    kind: str
    vector: object = None          # (n,) array or callable y -> (..., n)
    vector_grad: Optional[Callable] = None   # y -> (..., a, i) = d_a V^i
    form: object = None            # (n,n,n) array or callable, totally antisymmetric
    form_grad: Optional[Callable] = None     # y -> (..., a, i, j, k)
    kappa: Optional[float] = None
    coefficients: object = None    # (n,n,n) array or callable (cartan_type / raw)
    coefficients_grad: Optional[Callable] = None

    @classmethod
    def zero(cls) -> "TorsionSpec":
        return cls(kind="zero")

    @classmethod
    def vectorial(cls, vector, vector_grad: Optional[Callable] = None) -> "TorsionSpec":
        return cls(kind="vectorial", vector=vector, vector_grad=vector_grad)

    @classmethod
    def totally_antisymmetric(cls, form, form_grad: Optional[Callable] = None) -> "TorsionSpec":
        return cls(kind="totally_antisymmetric", form=form, form_grad=form_grad)

    @classmethod
    def scaled_volume(cls, kappa: float) -> "TorsionSpec":
        return cls(kind="totally_antisymmetric", kappa=float(kappa))

    @classmethod
    def cartan_type(cls, coefficients, coefficients_grad: Optional[Callable] = None) -> "TorsionSpec":
        return cls(kind="cartan_type", coefficients=coefficients,
                   coefficients_grad=coefficients_grad)

    @classmethod
    def raw(cls, coefficients, coefficients_grad: Optional[Callable] = None) -> "TorsionSpec":
        return cls(kind="raw", coefficients=coefficients,
                   coefficients_grad=coefficients_grad)

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero"


@dataclass(frozen=True)
class TargetChart:
    """A single chart of the target manifold with metric and torsion.

    ``metric`` maps points (..., n) to matrices (..., n, n). The derivative
    closures ``metric_grad`` / ``metric_hess`` are optional; when absent,
    central finite differences with step ``fd_step`` are used instead.

    ``domain_radius`` guards charts with a singular boundary (stereographic
    projections): points with |y| >= domain_radius are rejected.

    ``curvature_parallel`` marks charts whose Levi-Civita curvature is
    covariantly constant (flat space, round spheres), letting gradient terms
    of the curvature be taken as exactly zero. ``torsion_curvature_parallel``
    is the analogous flag for the torsion-connection curvature.
    """

    dim: int
    metric: Callable
    torsion: TorsionSpec = field(default_factory=TorsionSpec.zero)
    metric_grad: Optional[Callable] = None
    metric_hess: Optional[Callable] = None
    name: str = "custom"
    params: dict = field(default_factory=dict)
    domain_radius: Optional[float] = None
    fd_step: float = 1e-5
    curvature_parallel: bool = False
    metric_is_constant: bool = False
    torsion_curvature_parallel: bool = False

    def check_domain(self, y: np.ndarray) -> None:
        y = np.asarray(y, dtype=float)
        if y.shape[-1] != self.dim:
            raise ChartDomainError(
                f"point dimension {y.shape[-1]} does not match chart dim {self.dim}")
        if not np.all(np.isfinite(y)):
            raise ChartDomainError("non-finite chart point")
        if self.domain_radius is not None:
            r = np.sqrt(np.sum(y * y, axis=-1))
            worst = float(np.max(r)) if r.size else 0.0
            if worst >= self.domain_radius:
                raise ChartDomainError(
                    f"point radius {worst:.6g} exceeds chart domain radius "
                    f"{self.domain_radius:.6g} ({self.name})")

    def with_torsion(self, torsion: TorsionSpec) -> "TargetChart":
        from dataclasses import replace
        return replace(self, torsion=torsion,
                       torsion_curvature_parallel=False)


# ----------------------------------------------------------------------
# metric, Christoffels, Levi-Civita curvature
# ----------------------------------------------------------------------

def metric_at(chart: TargetChart, y: np.ndarray, validate: bool = False) -> np.ndarray:
    chart.check_domain(y)
    g = np.asarray(chart.metric(np.asarray(y, dtype=float)))
    if validate:
        sym = float(np.max(np.abs(g - np.swapaxes(g, -1, -2))))
        if sym > 1e-12:
            raise ChartDomainError(f"metric not symmetric (defect {sym:.3e})")
        ev = np.linalg.eigvalsh(g)
        if float(np.min(ev)) <= 0.0:
            raise ChartDomainError("metric not positive definite at a queried point")
    return g


def inverse_metric_at(chart: TargetChart, y: np.ndarray) -> np.ndarray:
    return np.linalg.inv(metric_at(chart, y))


def _fd_shift_points(y: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray]:
    n = y.shape[-1]
    eye = np.eye(n)
    yp = y[..., None, :] + h * eye            # (..., a, n)
    ym = y[..., None, :] - h * eye
    return yp, ym


def metric_grad_at(chart: TargetChart, y: np.ndarray) -> np.ndarray:
    """d_a g_ij, ordered (..., a, i, j)."""
    y = np.asarray(y, dtype=float)
    if chart.metric_is_constant:
        n = chart.dim
        return np.zeros(y.shape[:-1] + (n, n, n))
    if chart.metric_grad is not None:
        return np.asarray(chart.metric_grad(y))
    h = chart.fd_step
    yp, ym = _fd_shift_points(y, h)
    return (chart.metric(yp) - chart.metric(ym)) / (2.0 * h)


def metric_hess_at(chart: TargetChart, y: np.ndarray) -> np.ndarray:
    """d_a d_b g_ij, ordered (..., a, b, i, j)."""
    y = np.asarray(y, dtype=float)
    n = chart.dim
    if chart.metric_is_constant:
        return np.zeros(y.shape[:-1] + (n, n, n, n))
    if chart.metric_hess is not None:
        return np.asarray(chart.metric_hess(y))
    h = chart.fd_step
    if chart.metric_grad is not None:
        yp, ym = _fd_shift_points(y, h)
        dd = (chart.metric_grad(yp) - chart.metric_grad(ym)) / (2.0 * h)
        # dd[..., b, a, i, j] = d_b (d_a g_ij); symmetrize into (a, b) order
        dd = np.moveaxis(dd, -4, -3)
        return 0.5 * (dd + np.swapaxes(dd, -4, -3))
    # plain second differences of the metric itself
    out = np.zeros(y.shape[:-1] + (n, n, n, n))
    g0 = chart.metric(y)
    eye = np.eye(n)
    for a in range(n):
        ea = h * eye[a]
        out[..., a, a, :, :] = (chart.metric(y + ea) - 2.0 * g0 + chart.metric(y - ea)) / h**2
        for b in range(a + 1, n):
            eb = h * eye[b]
            mixed = (chart.metric(y + ea + eb) - chart.metric(y + ea - eb)
                     - chart.metric(y - ea + eb) + chart.metric(y - ea - eb)) / (4.0 * h**2)
            out[..., a, b, :, :] = mixed
            out[..., b, a, :, :] = mixed
    return out


def christoffel_at(chart: TargetChart, y: np.ndarray) -> np.ndarray:
    """Levi-Civita Gamma^i_jk at y, shape (..., n, n, n)."""
    g = metric_at(chart, y)
    ginv = np.linalg.inv(g)
    dg = metric_grad_at(chart, y)
    # B_sjk = d_j g_sk + d_k g_sj - d_s g_jk
    B = (np.einsum("...jsk->...sjk", dg)
         + np.einsum("...ksj->...sjk", dg)
         - dg)
    return 0.5 * np.einsum("...is,...sjk->...ijk", ginv, B)


def christoffel_grad_at(chart: TargetChart, y: np.ndarray) -> np.ndarray:
    """d_a Gamma^i_jk, ordered (..., a, i, j, k)."""
    g = metric_at(chart, y)
    ginv = np.linalg.inv(g)
    dg = metric_grad_at(chart, y)
    ddg = metric_hess_at(chart, y)
    B = (np.einsum("...jsk->...sjk", dg)
         + np.einsum("...ksj->...sjk", dg)
         - dg)
    # dB[..., a, s, j, k] from the hessian, same index shuffle per slot
    dB = (np.einsum("...ajsk->...asjk", ddg)
          + np.einsum("...aksj->...asjk", ddg)
          - ddg)
    dginv = -np.einsum("...im,...amn,...ns->...ais", ginv, dg, ginv)
    return (0.5 * np.einsum("...ais,...sjk->...aijk", dginv, B)
            + 0.5 * np.einsum("...is,...asjk->...aijk", ginv, dB))


def lc_curvature_at(chart: TargetChart, y: np.ndarray) -> np.ndarray:
    """Levi-Civita curvature R_ijkl (all indices lowered), shape (..., n,n,n,n)."""
    g = metric_at(chart, y)
    Gam = christoffel_at(chart, y)
    dGam = christoffel_grad_at(chart, y)
    # R_ijk^l = d_i Gam^l_jk - d_j Gam^l_ik + Gam^l_is Gam^s_jk - Gam^l_js Gam^s_ik
    up = (np.einsum("...iljk->...ijkl", dGam)
          - np.einsum("...jlik->...ijkl", dGam)
          + np.einsum("...lis,...sjk->...ijkl", Gam, Gam)
          - np.einsum("...ljs,...sik->...ijkl", Gam, Gam))
    return np.einsum("...ijks,...sl->...ijkl", up, g)


# ----------------------------------------------------------------------
# torsion evaluation
# ----------------------------------------------------------------------

def _vectorial_tensor(g: np.ndarray, v_upper: np.ndarray) -> np.ndarray:
    """A_ijk = g_ij V_k - g_ik V_j with V_k = g_ks V^s."""
    v_low = np.einsum("...ks,...s->...k", g, v_upper)
    return (np.einsum("...ij,...k->...ijk", g, v_low)
            - np.einsum("...ik,...j->...ijk", g, v_low))


def _check_skew(A: np.ndarray, what: str) -> None:
    defect = float(np.max(np.abs(A + np.swapaxes(A, -1, -2)))) if A.size else 0.0
    if defect > _SKEW_TOL:
        raise TorsionSkewnessError(
            f"{what} violates skewness in the last two slots (defect {defect:.3e})")


def _total_antisym_defect(C: np.ndarray) -> float:
    base = C
    worst = 0.0
    perms = (((-3, -2, -1), 1.0), ((-2, -3, -1), -1.0), ((-3, -1, -2), -1.0),
             ((-1, -2, -3), -1.0), ((-2, -1, -3), 1.0), ((-1, -3, -2), 1.0))
    axes0 = (-3, -2, -1)
    for order, sign in perms:
        moved = np.moveaxis(base, axes0, order)
        worst = max(worst, float(np.max(np.abs(moved - sign * base))))
    return worst


def torsion_at(chart: TargetChart, y: np.ndarray) -> np.ndarray:
    """Evaluate A_ijk(y) for the chart's torsion spec, shape (..., n, n, n)."""
    y = np.asarray(y, dtype=float)
    n = chart.dim
    spec = chart.torsion
    batch = y.shape[:-1]
    if spec.kind == "zero":
        return np.zeros(batch + (n, n, n))
    if spec.kind == "vectorial":
        vfun, _ = _as_callable(spec.vector, n, 1)
        g = metric_at(chart, y)
        return _vectorial_tensor(g, np.asarray(vfun(y), dtype=float))
    if spec.kind == "totally_antisymmetric":
        if spec.kappa is not None:
            if n != 3:
                raise ChartDomainError("scaled volume-form torsion needs a 3-dimensional chart")
            g = metric_at(chart, y)
            vol = np.sqrt(np.linalg.det(g))
            return spec.kappa * vol[..., None, None, None] * _EPS3
        ffun, _ = _as_callable(spec.form, n, 3)
        C = np.asarray(ffun(y), dtype=float)
        defect = _total_antisym_defect(C)
        if defect > _SKEW_TOL:
            raise TorsionSkewnessError(
                f"3-form torsion input is not totally antisymmetric (defect {defect:.3e})")
        return C
    if spec.kind in ("cartan_type", "raw"):
        cfun, _ = _as_callable(spec.coefficients, n, 3)
        A = np.asarray(cfun(y), dtype=float)
        _check_skew(A, f"{spec.kind} torsion input")
        if spec.kind == "raw":
            return A
        g = metric_at(chart, y)
        return decompose_torsion(A, g).cartan
    raise ValueError(f"unknown torsion kind {spec.kind!r}")


def torsion_grad_at(chart: TargetChart, y: np.ndarray) -> np.ndarray:
    """Partial derivatives d_a A_ijk, ordered (..., a, i, j, k)."""
    y = np.asarray(y, dtype=float)
    n = chart.dim
    spec = chart.torsion
    batch = y.shape[:-1]
    if spec.kind == "zero":
        return np.zeros(batch + (n, n, n, n))
    if spec.kind == "vectorial":
        vfun, v_const = _as_callable(spec.vector, n, 1)
        v = np.asarray(vfun(y), dtype=float)
        g = metric_at(chart, y)
        dg = metric_grad_at(chart, y)
        if v_const:
            dv = np.zeros(batch + (n, n))
        elif spec.vector_grad is not None:
            dv = np.asarray(spec.vector_grad(y))
        else:
            h = chart.fd_step
            yp, ym = _fd_shift_points(y, h)
            dv = (np.asarray(vfun(yp)) - np.asarray(vfun(ym))) / (2.0 * h)
        v_low = np.einsum("...ks,...s->...k", g, v)
        dv_low = (np.einsum("...aks,...s->...ak", dg, v)
                  + np.einsum("...ks,...as->...ak", g, dv))
        return (np.einsum("...aij,...k->...aijk", dg, v_low)
                + np.einsum("...ij,...ak->...aijk", g, dv_low)
                - np.einsum("...aik,...j->...aijk", dg, v_low)
                - np.einsum("...ik,...aj->...aijk", g, dv_low))
    if spec.kind == "totally_antisymmetric":
        if spec.kappa is not None:
            g = metric_at(chart, y)
            dg = metric_grad_at(chart, y)
            ginv = np.linalg.inv(g)
            vol = np.sqrt(np.linalg.det(g))
            # d_a sqrt(det g) = 1/2 sqrt(det g) g^{ij} d_a g_ij
            dvol = 0.5 * vol[..., None] * np.einsum("...ij,...aij->...a", ginv, dg)
            return spec.kappa * np.einsum("...a,ijk->...aijk", dvol, _EPS3)
        ffun, f_const = _as_callable(spec.form, n, 3)
        if f_const:
            return np.zeros(batch + (n, n, n, n))
        if spec.form_grad is not None:
            return np.asarray(spec.form_grad(y))
    if spec.kind == "raw":
        cfun, c_const = _as_callable(spec.coefficients, n, 3)
        if c_const:
            return np.zeros(batch + (n, n, n, n))
        if spec.coefficients_grad is not None:
            return np.asarray(spec.coefficients_grad(y))
    if spec.kind == "cartan_type" and chart.metric_is_constant:
        _, c_const = _as_callable(spec.coefficients, n, 3)
        if c_const:
            return np.zeros(batch + (n, n, n, n))
    # generic fallback: central differences of the evaluated tensor
    h = chart.fd_step
    yp, ym = _fd_shift_points(y, h)
    return (torsion_at(chart, yp) - torsion_at(chart, ym)) / (2.0 * h)


def nabla_torsion_at(chart: TargetChart, y: np.ndarray) -> np.ndarray:
    """Levi-Civita covariant derivative nab_a A_ijk, ordered (..., a, i, j, k)."""
    dA = torsion_grad_at(chart, y)
    A = torsion_at(chart, y)
    Gam = christoffel_at(chart, y)
    return (dA
            - np.einsum("...sai,...sjk->...aijk", Gam, A)
            - np.einsum("...saj,...isk->...aijk", Gam, A)
            - np.einsum("...sak,...ijs->...aijk", Gam, A))


def torsion_curvature_at(chart: TargetChart, y: np.ndarray) -> np.ndarray:
    """Curvature R^Tor_ijkl of the metric connection with torsion A."""
    R = lc_curvature_at(chart, y)
    A = torsion_at(chart, y)
    if chart.torsion.is_zero:
        return R
    nabA = nabla_torsion_at(chart, y)
    ginv = inverse_metric_at(chart, y)
    A_up = np.einsum("...jks,...sr->...jkr", A, ginv)     # A_jk^r
    quad = np.einsum("...irl,...jkr->...ijkl", A, A_up)   # A_irl A_jk^r
    return (R
            + np.einsum("...ijkl->...ijkl", nabA)          # nab_i A_jkl
            - np.einsum("...jikl->...ijkl", nabA)          # nab_j A_ikl
            + quad
            - np.einsum("...jikl->...ijkl", quad))


def covariant_curvature_grad(chart: TargetChart, y: np.ndarray,
                             with_torsion: bool) -> np.ndarray:
    """nab^LC_a R_ijkl for R^LC or R^Tor, ordered (..., a, i, j, k, l).

    Uses the chart's parallel flags when set (round spheres, flat space,
    constant torsion on flat space); otherwise differentiates the curvature
    evaluator by central finite differences and subtracts the four
    Christoffel corrections.
    """
    y = np.asarray(y, dtype=float)
    n = chart.dim
    if with_torsion:
        evaluator = torsion_curvature_at
        parallel = chart.torsion_curvature_parallel
    else:
        evaluator = lc_curvature_at
        parallel = chart.curvature_parallel
    if parallel:
        return np.zeros(y.shape[:-1] + (n,) * 5)
    h = chart.fd_step
    yp, ym = _fd_shift_points(y, h)
    dR = (evaluator(chart, yp) - evaluator(chart, ym)) / (2.0 * h)
    R = evaluator(chart, y)
    Gam = christoffel_at(chart, y)
    return (dR
            - np.einsum("...sai,...sjkl->...aijkl", Gam, R)
            - np.einsum("...saj,...iskl->...aijkl", Gam, R)
            - np.einsum("...sak,...ijsl->...aijkl", Gam, R)
            - np.einsum("...sal,...ijks->...aijkl", Gam, R))


# ----------------------------------------------------------------------
# Cartan decomposition of torsion tensors
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class TorsionDecomposition:
    """Pointwise orthogonal split A = vectorial + antisymmetric + cartan."""

    vectorial: np.ndarray
    potential: np.ndarray        # the vector V with the vectorial part's closed form
    antisymmetric: np.ndarray
    cartan: np.ndarray


def _c12(A: np.ndarray, ginv: np.ndarray) -> np.ndarray:
    """Trace over the first two slots: c12(A)_l = g^{ij} A_ijl."""
    return np.einsum("...ij,...ijl->...l", ginv, A)


def decompose_torsion(A: np.ndarray, g: np.ndarray) -> TorsionDecomposition:
    """Split a skew-in-last-two-slots tensor into its three irreducible parts.

    The vectorial part is generated by V = c12(A)# / (n-1); the totally
    antisymmetric part is the cyclic average; the Cartan part is the remainder
    (cyclic-sum-free and trace-free). In dimension 2 the last two parts vanish.
    """
    A = np.asarray(A, dtype=float)
    g = np.asarray(g, dtype=float)
    _check_skew(A, "decomposition input")
    n = A.shape[-1]
    ginv = np.linalg.inv(g)
    v_low = _c12(A, ginv) / (n - 1)
    v_up = np.einsum("...ls,...s->...l", ginv, v_low)
    t1 = (np.einsum("...ij,...k->...ijk", g, v_low)
          - np.einsum("...ik,...j->...ijk", g, v_low))
    t2 = (A + np.einsum("...jki->...ijk", A) + np.einsum("...kij->...ijk", A)) / 3.0
    if n == 2:
        # the cyclic average of a skew-last-two-slots tensor is a 3-form,
        # and there are no 3-forms in dimension 2
        t2 = np.zeros_like(A)
    t3 = A - t1 - t2
    return TorsionDecomposition(vectorial=t1, potential=v_up,
                                antisymmetric=t2, cartan=t3)


def torsion_inner(S: np.ndarray, T: np.ndarray, ginv: np.ndarray) -> np.ndarray:
    """Induced inner product on third-order tensors, all slots raised with g."""
    return np.einsum("...ijk,...abc,...ia,...jb,...kc->...", S, T, ginv, ginv, ginv)


def vectorial_membership_defect(t1: np.ndarray, g: np.ndarray) -> float:
    """How far t1 is from the exact vectorial closed form for some V."""
    ginv = np.linalg.inv(g)
    n = t1.shape[-1]
    v_low = _c12(t1, ginv) / (n - 1)
    recon = (np.einsum("...ij,...k->...ijk", g, v_low)
             - np.einsum("...ik,...j->...ijk", g, v_low))
    return float(np.max(np.abs(t1 - recon))) if t1.size else 0.0


def antisymmetric_membership_defect(t2: np.ndarray) -> float:
    return _total_antisym_defect(t2)


def cartan_membership_defect(t3: np.ndarray, g: np.ndarray) -> float:
    """Cyclic sum and first-two-slot trace must both vanish."""
    cyc = t3 + np.einsum("...jki->...ijk", t3) + np.einsum("...kij->...ijk", t3)
    ginv = np.linalg.inv(g)
    tr = _c12(t3, ginv)
    worst_cyc = float(np.max(np.abs(cyc))) if t3.size else 0.0
    worst_tr = float(np.max(np.abs(tr))) if t3.size else 0.0
    return max(worst_cyc, worst_tr)


# ----------------------------------------------------------------------
# chart catalog
# ----------------------------------------------------------------------

def flat_chart(dim: int, torsion: TorsionSpec | None = None) -> TargetChart:
    """Euclidean R^n with the identity metric."""
    eye = np.eye(dim)

    def metric(y):
        return np.broadcast_to(eye, y.shape[:-1] + (dim, dim)).copy()

    spec = torsion if torsion is not None else TorsionSpec.zero()
    # on a constant metric, any non-callable payload yields a constant A(y)
    constant_torsion = not any(callable(p) for p in (spec.vector, spec.form,
                                                     spec.coefficients))
    return TargetChart(dim=dim, metric=metric, torsion=spec,
                       name="flat", params={"dim": dim},
                       curvature_parallel=True, metric_is_constant=True,
                       torsion_curvature_parallel=constant_torsion)


def _conformal_sphere_metric(dim: int):
    """Round unit sphere in stereographic coordinates: g = 4 delta / (1+|y|^2)^2."""
    eye = np.eye(dim)

    def metric(y):
        r2 = np.sum(y * y, axis=-1)
        f = 4.0 / (1.0 + r2) ** 2
        return f[..., None, None] * eye

    def metric_grad(y):
        # g_ij = F(r2) delta_ij with F(s) = 4 (1+s)^-2, so
        # d_a g_ij = F'(r2) * 2 y_a * delta_ij with F'(s) = -8 (1+s)^-3
        r2 = np.sum(y * y, axis=-1)
        dF = (-8.0 / (1.0 + r2) ** 3)[..., None] * (2.0 * y)
        return np.einsum("...a,ij->...aij", dF, eye)

    def metric_hess(y):
        r2 = np.sum(y * y, axis=-1)
        Fp = -8.0 / (1.0 + r2) ** 3
        Fpp = 24.0 / (1.0 + r2) ** 4
        # d_b d_a g_ij = [F'' 4 y_a y_b + 2 F' delta_ab] delta_ij
        term = (4.0 * Fpp[..., None, None] * np.einsum("...a,...b->...ab", y, y)
                + 2.0 * Fp[..., None, None] * eye)
        return np.einsum("...ab,ij->...abij", term, eye)

    return metric, metric_grad, metric_hess


def sphere2_chart(torsion: TorsionSpec | None = None,
                  domain_radius: float = 4.0) -> TargetChart:
    """Round unit 2-sphere, stereographic chart (antipode excluded)."""
    metric, grad, hess = _conformal_sphere_metric(2)
    spec = torsion if torsion is not None else TorsionSpec.zero()
    return TargetChart(dim=2, metric=metric, metric_grad=grad, metric_hess=hess,
                       torsion=spec, name="sphere2", params={},
                       domain_radius=domain_radius, curvature_parallel=True)


def sphere3_chart(kappa: float = 0.0, torsion: TorsionSpec | None = None,
                  domain_radius: float = 4.0) -> TargetChart:
    """Round unit 3-sphere, stereographic chart.

    With ``kappa`` nonzero the torsion is the scaled volume form
    kappa * sqrt(det g) * eps, which is parallel for the Levi-Civita
    connection; together with the constant curvature this makes the
    torsion-connection curvature parallel as well.
    """
    metric, grad, hess = _conformal_sphere_metric(3)
    if torsion is None:
        torsion = TorsionSpec.scaled_volume(kappa) if kappa else TorsionSpec.zero()
    parallel_tor = torsion.is_zero or (torsion.kind == "totally_antisymmetric"
                                       and torsion.kappa is not None)
    return TargetChart(dim=3, metric=metric, metric_grad=grad, metric_hess=hess,
                       torsion=torsion, name="sphere3",
                       params={"kappa": kappa},
                       domain_radius=domain_radius, curvature_parallel=True,
                       torsion_curvature_parallel=parallel_tor)

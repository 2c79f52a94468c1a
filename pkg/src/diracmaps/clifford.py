"""Two-dimensional Clifford algebra acting on C^2 spinor values.

The representation is fixed once here; nothing downstream depends on the
particular matrices, only on the two defining properties (checked in tests
and by `frame_defects`):

  * gamma_a gamma_b + gamma_b gamma_a = -2 delta_ab Id
  * each gamma_a is skew-Hermitian, so <g_a psi, chi> = -<psi, g_a chi>

A spinor value is a length-2 complex vector; grid fields carry them in the
last axis. The spinor inner product is conjugate-linear in the FIRST slot.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_SIGMA1 = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
_SIGMA2 = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)


@dataclass(frozen=True)
class CliffordFrame:
    """A concrete pair of gamma matrices for the two frame directions."""

    gamma1: np.ndarray = field(default_factory=lambda: 1j * _SIGMA1)
    gamma2: np.ndarray = field(default_factory=lambda: 1j * _SIGMA2)

    def gamma(self, alpha: int) -> np.ndarray:
        if alpha == 1:
            return self.gamma1
        if alpha == 2:
            return self.gamma2
        raise ValueError(f"frame direction must be 1 or 2, got {alpha}")

    @property
    def chirality(self) -> np.ndarray:
        return self.gamma1 @ self.gamma2


DEFAULT_FRAME = CliffordFrame()


def clifford_multiply(alpha: int, psi: np.ndarray, frame: CliffordFrame = DEFAULT_FRAME) -> np.ndarray:
    """Apply gamma_alpha to spinor value(s); `psi` has the spinor axis last."""
    g = frame.gamma(alpha)
    return np.einsum("ab,...b->...a", g, psi)


def spinor_inner(psi: np.ndarray, chi: np.ndarray) -> np.ndarray:
    """Hermitian C^2 product, conjugate-linear in the first argument."""
    return np.einsum("...a,...a->...", np.conj(psi), chi)


def frame_defects(frame: CliffordFrame = DEFAULT_FRAME) -> dict[str, float]:
    """Max deviation from the two defining invariants of a gamma pair."""
    gammas = (frame.gamma1, frame.gamma2)
    eye = np.eye(2)
    anticomm = 0.0
    for a in range(2):
        for b in range(2):
            acc = gammas[a] @ gammas[b] + gammas[b] @ gammas[a] + 2.0 * (a == b) * eye
            anticomm = max(anticomm, float(np.max(np.abs(acc))))
    skew = max(float(np.max(np.abs(g + g.conj().T))) for g in gammas)
    return {"anticommutator": anticomm, "skew_hermitian": skew}

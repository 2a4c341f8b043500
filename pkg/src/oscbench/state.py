"""Phase-space points in mode coordinates.

A state holds the complex amplitudes xi_1..xi_J and their conjugate
partners eta_1..eta_J.  On the real subspace eta_j = conj(xi_j) and the
point represents an actual wave function psi = sum_j xi_j phi_j; the
normal-form machinery also needs general complex points, where the two
blocks are independent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class StateVector:
    xi: np.ndarray
    eta: np.ndarray

    def __post_init__(self):
        self.xi = np.asarray(self.xi, dtype=complex)
        self.eta = np.asarray(self.eta, dtype=complex)
        if self.xi.shape != self.eta.shape or self.xi.ndim != 1:
            raise ValueError("xi and eta must be 1-d arrays of equal length")

    @classmethod
    def real_point(cls, xi) -> "StateVector":
        xi = np.asarray(xi, dtype=complex)
        return cls(xi=xi, eta=np.conj(xi))

    @classmethod
    def zero(cls, J: int) -> "StateVector":
        return cls(xi=np.zeros(J, complex), eta=np.zeros(J, complex))

    @property
    def J(self) -> int:
        return self.xi.size

    @property
    def is_real_point(self) -> bool:
        return bool(np.allclose(self.eta, np.conj(self.xi), rtol=0.0, atol=1e-12))

    def actions(self) -> np.ndarray:
        """I_j = xi_j eta_j; real and equal to |xi_j|^2 on the real subspace."""
        return np.real(self.xi * self.eta)

    def norm_s(self, s: float) -> float:
        """Weighted norm over both blocks: (sum_j j^{2s}(|xi_j|^2 + |eta_j|^2))^{1/2}.

        On the real subspace this equals 2 sum_j j^{2s} xi_j eta_j, which
        is then real.
        """
        j = np.arange(1, self.J + 1, dtype=float)
        w = j ** (2 * s)
        return float(np.sqrt(np.sum(w * (np.abs(self.xi) ** 2 + np.abs(self.eta) ** 2))))

    def pairing_norm_sq(self, s: float) -> complex:
        """2 sum_j j^{2s} xi_j eta_j; real and equal to norm_s^2 on real points."""
        j = np.arange(1, self.J + 1, dtype=float)
        return complex(2.0 * np.sum(j ** (2 * s) * self.xi * self.eta))

    def copy(self) -> "StateVector":
        return StateVector(xi=self.xi.copy(), eta=self.eta.copy())

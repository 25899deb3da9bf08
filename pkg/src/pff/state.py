from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


@dataclass
class SimState:
    """Nodal unknowns, load factor and history, plus the last converged copy.

    ``x`` is the full dof vector ``[ux0, uy0, ux1, uy1, ..., phi0, phi1, ...]``.
    ``H`` has one row of four Gauss-point values per element id (inactive
    rows are kept so element ids stay stable under refinement).
    """

    x: np.ndarray
    lam: float
    H: np.ndarray
    x_n: np.ndarray
    lam_n: float
    H_n: np.ndarray

    @classmethod
    def zeros(cls, n_nodes: int, n_elements: int) -> "SimState":
        x = np.zeros(3 * n_nodes)
        H = np.zeros((n_elements, 4))
        return cls(x, 0.0, H, x.copy(), 0.0, H.copy())

    @property
    def n_nodes(self) -> int:
        return self.x.size // 3

    @property
    def u(self) -> np.ndarray:
        return self.x[: 2 * self.n_nodes].reshape(-1, 2)

    @property
    def phi(self) -> np.ndarray:
        return self.x[2 * self.n_nodes :]

    @property
    def phi_n(self) -> np.ndarray:
        return self.x_n[2 * self.n_nodes :]

    def copy(self) -> "SimState":
        return replace(
            self, x=self.x.copy(), H=self.H.copy(), x_n=self.x_n.copy(), H_n=self.H_n.copy()
        )

    def commit(self) -> "SimState":
        """Make the current fields the new step-start snapshot."""
        return replace(self, x_n=self.x.copy(), lam_n=self.lam, H_n=self.H.copy())

    def rollback(self) -> "SimState":
        """Discard the current iterate and return to the snapshot."""
        return replace(self, x=self.x_n.copy(), lam=self.lam_n, H=self.H_n.copy())

"""Two-degree-of-freedom pitch-plunge section in nondimensional time.

Time is ``tau = omega_alpha * t`` and plunge is ``h_bar = h / b``, positive
downward.  The equations of motion are

    (m_tot/m) [[1, x_a], [x_a, r_a^2]] q'' + diag((w_h/w_a)^2, r_a^2) q
        = (V_f^2 / pi) [-C_L, 2 C_M] + s [F_Y, 2 M_Z]

with ``s = 1 / (m b w_a^2)``.  They are integrated in modal coordinates.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np


class StructureError(ValueError):
    pass


@dataclass(frozen=True)
class StructuralParams:
    x_alpha: float = 1.8
    r_alpha2: float = 3.48
    omega_h: float = 100.0
    omega_alpha: float = 100.0
    mu: float = 60.0
    V_f: float = 0.425
    b: float = 0.5
    mass_ratio_total: float = 1.0
    slosh_force_scale: float = 0.0
    # Coefficient of alpha^3 in the pitch stiffness row; 0 keeps the model linear.
    cubic_pitch: float = 0.0

    def __post_init__(self):
        if not self.r_alpha2 > self.x_alpha ** 2:
            raise StructureError(
                f"mass matrix not positive definite: r_alpha2={self.r_alpha2} "
                f"<= x_alpha^2={self.x_alpha ** 2}")
        if not self.omega_alpha > 0:
            raise StructureError("omega_alpha must be positive")
        if self.V_f < 0:
            raise StructureError("V_f must be non-negative")
        if self.mass_ratio_total < 1:
            raise StructureError("mass_ratio_total must be >= 1")

    @property
    def reduced_velocity(self) -> float:
        """Free-stream speed in semichords per unit tau, ``V_f * sqrt(mu)``."""
        return self.V_f * math.sqrt(self.mu)

    def with_tank(self, m: float, fuel_mass: float) -> "StructuralParams":
        """Return a copy carrying ``fuel_mass`` (kg per unit span) on a section of mass ``m``."""
        return replace(self, mass_ratio_total=(m + fuel_mass) / m,
                       slosh_force_scale=1.0 / (m * self.b * self.omega_alpha ** 2))

    def to_json(self, path: str | Path):
        Path(path).write_text(json.dumps(asdict(self), indent=2))

    @classmethod
    def from_json(cls, path: str | Path) -> "StructuralParams":
        return cls(**json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class MotionState:
    h_bar: float = 0.0
    alpha: float = 0.0
    h_bar_dot: float = 0.0
    alpha_dot: float = 0.0
    tau: float = 0.0

    @property
    def q(self) -> np.ndarray:
        return np.array([self.h_bar, self.alpha])

    @property
    def qdot(self) -> np.ndarray:
        return np.array([self.h_bar_dot, self.alpha_dot])

    @classmethod
    def from_arrays(cls, q, qdot, tau: float) -> "MotionState":
        return cls(float(q[0]), float(q[1]), float(qdot[0]), float(qdot[1]), float(tau))


@dataclass(frozen=True)
class ModalBasis:
    """Mass-normalised eigenvectors (columns of ``phi``) and eigenvalues ``omega2``."""

    phi: np.ndarray
    omega2: np.ndarray

    def to_modal(self, q: np.ndarray, Mbar: np.ndarray) -> np.ndarray:
        return self.phi.T @ Mbar @ q

    def to_physical(self, eta: np.ndarray) -> np.ndarray:
        return self.phi @ eta


def build_matrices(p: StructuralParams) -> tuple[np.ndarray, np.ndarray]:
    Mbar = p.mass_ratio_total * np.array([[1.0, p.x_alpha], [p.x_alpha, p.r_alpha2]])
    Kbar = np.array([[(p.omega_h / p.omega_alpha) ** 2, 0.0], [0.0, p.r_alpha2]])
    if np.linalg.det(Mbar) <= 0 or Mbar[0, 0] <= 0:
        raise StructureError("mass matrix not positive definite")
    return Mbar, Kbar


def modal_decompose(Mbar: np.ndarray, Kbar: np.ndarray) -> ModalBasis:
    """Solve ``K phi = lambda M phi`` by Cholesky reduction to a symmetric problem."""
    Mbar = np.asarray(Mbar, float)
    Kbar = np.asarray(Kbar, float)
    try:
        L = np.linalg.cholesky(Mbar)
    except np.linalg.LinAlgError:
        raise StructureError("mass matrix not positive definite") from None
    Linv = np.linalg.inv(L)
    A = Linv @ Kbar @ Linv.T
    A = 0.5 * (A + A.T)
    lam, y = np.linalg.eigh(A)
    phi = Linv.T @ y
    # Fix the sign so the largest-magnitude component of each mode is positive.
    for i in range(phi.shape[1]):
        j = np.argmax(np.abs(phi[:, i]))
        if phi[j, i] < 0:
            phi[:, i] = -phi[:, i]
    if np.any(lam <= 0):
        raise StructureError(f"non-positive modal eigenvalue {lam}")
    return ModalBasis(phi, lam)


def assemble_loads(C_L: float, C_M: float, F_Y_ea: float, M_Z_ea: float,
                   p: StructuralParams) -> np.ndarray:
    """Generalized force vector on the plunge and pitch equations."""
    aero = p.V_f ** 2 / math.pi
    return np.array([-aero * C_L + p.slosh_force_scale * F_Y_ea,
                     2.0 * aero * C_M + 2.0 * p.slosh_force_scale * M_Z_ea])


def _modal_rk4(eta, etad, w2, Q, h):
    # eta'' = Q - w2 * eta, Q frozen over the step
    k1x, k1v = etad, Q - w2 * eta
    x2, v2 = eta + 0.5 * h * k1x, etad + 0.5 * h * k1v
    k2x, k2v = v2, Q - w2 * x2
    x3, v3 = eta + 0.5 * h * k2x, etad + 0.5 * h * k2v
    k3x, k3v = v3, Q - w2 * x3
    x4, v4 = eta + h * k3x, etad + h * k3v
    k4x, k4v = v4, Q - w2 * x4
    return (eta + h / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x),
            etad + h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v))


class ModalIntegrator:
    """Carries the modal state between steps of a coupled run.

    The optional cubic pitch stiffness is applied as an extra generalized
    force evaluated at the start of each step.
    """

    def __init__(self, p: StructuralParams, state: MotionState | None = None):
        self.params = p
        self.Mbar, self.Kbar = build_matrices(p)
        self.basis = modal_decompose(self.Mbar, self.Kbar)
        self._Minv = np.linalg.inv(self.Mbar)
        self.reset(state or MotionState())

    def reset(self, state: MotionState):
        self.eta = self.basis.to_modal(state.q, self.Mbar)
        self.etad = self.basis.to_modal(state.qdot, self.Mbar)
        self.tau = state.tau
        self.qddot = np.zeros(2)

    @property
    def state(self) -> MotionState:
        return MotionState.from_arrays(self.basis.to_physical(self.eta),
                                       self.basis.to_physical(self.etad), self.tau)

    def nonlinear_force(self, q: np.ndarray) -> np.ndarray:
        if self.params.cubic_pitch == 0.0:
            return np.zeros(2)
        return np.array([0.0, -self.params.cubic_pitch * self.params.r_alpha2 * q[1] ** 3])

    def advance(self, loads: np.ndarray, dtau: float) -> MotionState:
        q = self.basis.to_physical(self.eta)
        F = np.asarray(loads, float) + self.nonlinear_force(q)
        Q = self.basis.phi.T @ F
        self.eta, self.etad = _modal_rk4(self.eta, self.etad, self.basis.omega2, Q, dtau)
        self.tau += dtau
        qn = self.basis.to_physical(self.eta)
        self.qddot = self._Minv @ (F - self.Kbar @ qn)
        return self.state


def step(state: MotionState, loads: np.ndarray, basis: ModalBasis, dtau: float,
         Mbar: np.ndarray | None = None) -> MotionState:
    """Advance the physical state one step of classical RK4 in modal coordinates.

    ``Mbar`` is needed to project onto the modes; when omitted it is recovered
    from the basis via ``M = (phi phi^T)^-1``.
    """
    if not dtau > 0:
        raise StructureError("dtau must be positive")
    phi = basis.phi
    if Mbar is None:
        Mbar = np.linalg.inv(phi @ phi.T)
    eta = phi.T @ Mbar @ state.q
    etad = phi.T @ Mbar @ state.qdot
    Q = phi.T @ np.asarray(loads, float)
    eta, etad = _modal_rk4(eta, etad, basis.omega2, Q, dtau)
    return MotionState.from_arrays(phi @ eta, phi @ etad, state.tau + dtau)


def energy(state: MotionState, Mbar: np.ndarray, Kbar: np.ndarray) -> float:
    q, qd = state.q, state.qdot
    return float(0.5 * qd @ Mbar @ qd + 0.5 * q @ Kbar @ q)

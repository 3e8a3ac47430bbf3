"""Linear unsteady thin-airfoil loads used as training data and ground truth.

Circulatory lift follows the two-term exponential Wagner approximation,
realised with two lag states integrated exactly for a downwash that is linear
in time across each step.  Non-circulatory (added-mass) lift and moment are
the classical thin-airfoil terms.  In nondimensional time ``tau`` and with
``U = V_f * sqrt(mu)`` semichords per unit ``tau``::

    alpha_eff = alpha + h'/U + (1/2 - a) alpha'/U
    C_L = 2 pi [(1 - A1 - A2) alpha_eff + z1 + z2] + pi (h'' + U alpha' - a alpha'') / U^2
    C_M = (a + 1/2) C_Lc / 2 + pi / (2 U^2) [a h'' - U (1/2 - a) alpha' - (1/8 + a^2) alpha'']

``C_L`` is based on the semichord (lift / (rho U^2 b)), ``C_M`` on the chord
squared, matching the load factors of the structural equation.  Lift is
positive up, moment positive nose-up, plunge positive down.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .core import TimeSeriesDataset
from .structure import MotionState, StructuralParams

WAGNER_A = (0.165, 0.335)
WAGNER_B = (0.0455, 0.3)


def wagner(s):
    """Two-term exponential approximation of the Wagner indicial lift function."""
    s = np.asarray(s, dtype=float)
    # written as 1/2 plus growing terms so phi(0) is exactly 0.5
    out = (0.5 - WAGNER_A[0] * np.expm1(-WAGNER_B[0] * s)
           - WAGNER_A[1] * np.expm1(-WAGNER_B[1] * s))
    return out if out.ndim else float(out)


def forced_pitch(t, alpha_mean: float, alpha_0: float, omega: float):
    return alpha_mean + alpha_0 * np.sin(omega * np.asarray(t, float))


@dataclass(frozen=True)
class AeroLoads:
    C_L: float
    C_M: float


@dataclass(frozen=True)
class AeroOracleState:
    z1: float = 0.0
    z2: float = 0.0
    alpha_eff: float = 0.0  # downwash angle at the end of the previous step
    U: float = 1.0
    a: float = -0.5
    b: float = 0.5

    @classmethod
    def for_params(cls, p: StructuralParams, a: float = -0.5) -> "AeroOracleState":
        return cls(U=p.reduced_velocity, a=a, b=p.b)

    def effective_alpha(self, m: MotionState) -> float:
        return m.alpha + (m.h_bar_dot + (0.5 - self.a) * m.alpha_dot) / self.U

    def settled(self, m: MotionState) -> "AeroOracleState":
        """Lag states in equilibrium with the downwash of ``m``."""
        w = self.effective_alpha(m)
        return replace(self, z1=WAGNER_A[0] * w, z2=WAGNER_A[1] * w, alpha_eff=w)


def _lag_update(z, A, beta, u0, u1, ds):
    # exact solution of z' = beta (A u - z) for u linear from u0 to u1 over ds
    if ds == 0.0:
        return z
    x = beta * ds
    E = math.exp(-x)
    ramp = 1.0 - (1.0 - E) / x if x > 1e-8 else 0.5 * x
    return E * z + A * (u0 * (1.0 - E) + (u1 - u0) * ramp)


def _coefficients(st: AeroOracleState, m: MotionState, w: float, z1: float, z2: float,
                  h_dd: float, a_dd: float) -> AeroLoads:
    U, a = st.U, st.a
    clc = 2.0 * math.pi * ((1.0 - WAGNER_A[0] - WAGNER_A[1]) * w + z1 + z2)
    clnc = math.pi * (h_dd + U * m.alpha_dot - a * a_dd) / U ** 2
    cmnc = math.pi / (2.0 * U ** 2) * (
        a * h_dd - U * (0.5 - a) * m.alpha_dot - (0.125 + a * a) * a_dd)
    return AeroLoads(clc + clnc, 0.5 * (a + 0.5) * clc + cmnc)


def step_loads(state: AeroOracleState, motion: MotionState, dtau: float,
               accel: tuple[float, float] = (0.0, 0.0)
               ) -> tuple[AeroOracleState, AeroLoads]:
    """Advance the lag states by ``dtau`` to ``motion`` and return loads there.

    ``accel`` holds ``(h_bar'', alpha'')`` for the added-mass terms.
    """
    if not dtau > 0:
        raise ValueError("dtau must be positive")
    w = state.effective_alpha(motion)
    ds = state.U * dtau
    z1 = _lag_update(state.z1, WAGNER_A[0], WAGNER_B[0], state.alpha_eff, w, ds)
    z2 = _lag_update(state.z2, WAGNER_A[1], WAGNER_B[1], state.alpha_eff, w, ds)
    new = replace(state, z1=z1, z2=z2, alpha_eff=w)
    return new, _coefficients(new, motion, w, z1, z2, accel[0], accel[1])


def loads_at(state: AeroOracleState, motion: MotionState,
             accel: tuple[float, float] = (0.0, 0.0)) -> AeroLoads:
    """Loads for the current lag states without advancing them."""
    return _coefficients(state, motion, state.effective_alpha(motion),
                         state.z1, state.z2, accel[0], accel[1])


@dataclass(frozen=True)
class ForcedMotion:
    """Prescribed sinusoidal pitch (and optional plunge) in physical time.

    ``omega`` is in rad/s; :meth:`at` converts to nondimensional time using
    ``omega_alpha``.
    """

    alpha_mean: float = 0.0
    alpha_0: float = math.radians(2.0)
    omega: float = 2.0 * math.pi
    h_0: float = 0.0
    h_phase: float = 0.0

    def at(self, tau: float, omega_alpha: float) -> tuple[MotionState, tuple[float, float]]:
        r = self.omega / omega_alpha
        th = r * tau
        alpha = self.alpha_mean + self.alpha_0 * math.sin(th)
        ad = self.alpha_0 * r * math.cos(th)
        add = -self.alpha_0 * r * r * math.sin(th)
        ph = th + self.h_phase
        h = self.h_0 * math.sin(ph)
        hd = self.h_0 * r * math.cos(ph)
        hdd = -self.h_0 * r * r * math.sin(ph)
        return MotionState(h, alpha, hd, ad, tau), (hdd, add)

    def period_tau(self, omega_alpha: float) -> float:
        return 2.0 * math.pi * omega_alpha / self.omega


AERO_CHANNELS = ("t", "h_bar", "alpha", "C_L", "C_M")


def generate_series(source: str, params: StructuralParams, T: float, dtau: float,
                    motion: ForcedMotion | None = None, a: float = -0.5,
                    forced_cycles: int = 2, settle: bool = True) -> TimeSeriesDataset:
    """Sample an oracle load history on ``T / dtau + 1`` points of ``tau``.

    ``source='forced'`` prescribes ``motion`` throughout, starting from the
    settled flow at the initial incidence.  ``source='free'`` forces for
    ``forced_cycles`` and then releases the structure.
    """
    motion = motion or ForcedMotion()
    n = int(round(T / dtau)) + 1
    if source == "free":
        from .coupling import CouplingConfig, run_free
        cfg = CouplingConfig(mode="free", structure=params, motion=motion,
                             forced_cycles=forced_cycles, total_steps=n, dtau=dtau,
                             aero_a=a)
        res = run_free(cfg)
        return res.motion_and_aero()
    if source != "forced":
        raise ValueError(f"unknown motion source {source!r}")
    st = AeroOracleState.for_params(params, a)
    m0, _ = motion.at(0.0, params.omega_alpha)
    if settle:
        st = st.settled(m0)
    out = np.empty((n, 5))
    for k in range(n):
        tau = k * dtau
        m, acc = motion.at(tau, params.omega_alpha)
        if k == 0:
            L = loads_at(st, m, acc)
        else:
            st, L = step_loads(st, m, dtau, acc)
        out[k] = (tau, m.h_bar, m.alpha, L.C_L, L.C_M)
    return TimeSeriesDataset(AERO_CHANNELS, out, dtau, 0.0)

"""Sloshing loads: wall-load quadrature, frame transform and a spring-mass analog.

Tank frame: ``x`` along the chord pointing aft, ``y`` up, origin at the tank's
geometric centre.  A nose-up pitch ``alpha`` rotates the tank frame clockwise,
so the inertial components of a tank-frame vector are
``(F_x cos a + F_y sin a, F_y cos a - F_x sin a)``.  ``M_z`` is positive
nose-up.  Tank-frame gravity is ``(g sin a, -g cos a)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .core import TimeSeriesDataset


class SloshError(ValueError):
    pass


@dataclass(frozen=True)
class TankGeometry:
    l: float
    h: float
    w: float = 1.0
    fill: float = 0.5
    rho_fuel: float = 800.0
    rho_gas: float = 1.0
    g: float = 9.81

    def __post_init__(self):
        if not (self.l > 0 and self.h > 0 and self.w > 0):
            raise SloshError("tank dimensions must be positive")
        if not 0.0 < self.fill < 1.0:
            raise SloshError(f"fill fraction must lie in (0, 1), got {self.fill}")
        if not self.rho_fuel > self.rho_gas >= 0:
            raise SloshError("need rho_fuel > rho_gas >= 0")

    @property
    def depth(self) -> float:
        return self.fill * self.h

    @property
    def fuel_mass(self) -> float:
        return self.fill * self.l * self.h * self.w * self.rho_fuel

    @classmethod
    def embedded(cls, chord: float, **kw) -> "TankGeometry":
        """Tank sized 0.30 x 0.09 chords, as carried inside the wing section."""
        return cls(l=0.30 * chord, h=0.09 * chord, **kw)

    def to_json(self, path: str | Path):
        Path(path).write_text(json.dumps(asdict(self), indent=2))

    @classmethod
    def from_json(cls, path: str | Path) -> "TankGeometry":
        return cls(**json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class SloshLoads:
    F_x: float
    F_y: float
    M_z: float
    frame: str = "tank"


@dataclass(frozen=True)
class WallFieldSample:
    """Pressure and shear along each wall at uniform stations.

    North/south walls run along ``x`` in [-l/2, l/2]; east/west walls along
    ``y`` in [-h/2, h/2].
    """

    p_N: np.ndarray
    p_S: np.ndarray
    p_E: np.ndarray
    p_W: np.ndarray
    tau_N: np.ndarray | None = None
    tau_S: np.ndarray | None = None
    tau_E: np.ndarray | None = None
    tau_W: np.ndarray | None = None

    def __post_init__(self):
        for wall in "NSEW":
            p = np.asarray(getattr(self, f"p_{wall}"), float)
            t = getattr(self, f"tau_{wall}")
            t = np.zeros_like(p) if t is None else np.asarray(t, float)
            if p.ndim != 1 or p.size < 2:
                raise SloshError(f"wall {wall} needs at least 2 stations")
            if t.shape != p.shape:
                raise SloshError(f"wall {wall}: shear and pressure station counts differ")
            if not (np.all(np.isfinite(p)) and np.all(np.isfinite(t))):
                raise SloshError(f"wall {wall} has non-finite samples")
            object.__setattr__(self, f"p_{wall}", p)
            object.__setattr__(self, f"tau_{wall}", t)

    @classmethod
    def from_functions(cls, geom: TankGeometry, n_x: int = 150, n_y: int = 125,
                       p_N=None, p_S=None, p_E=None, p_W=None,
                       tau_N=None, tau_S=None, tau_E=None, tau_W=None) -> "WallFieldSample":
        """Sample callables of the wall coordinate; ``None`` means zero."""
        x = np.linspace(-geom.l / 2, geom.l / 2, n_x)
        y = np.linspace(-geom.h / 2, geom.h / 2, n_y)

        def ev(f, s):
            return np.zeros_like(s) if f is None else np.broadcast_to(
                np.asarray(f(s), float), s.shape).copy()

        return cls(ev(p_N, x), ev(p_S, x), ev(p_E, y), ev(p_W, y),
                   ev(tau_N, x), ev(tau_S, x), ev(tau_E, y), ev(tau_W, y))


def _trap(f: np.ndarray, s: np.ndarray) -> float:
    return float(np.sum(0.5 * (f[1:] + f[:-1]) * np.diff(s)))


def integrate_wall_loads(fields: WallFieldSample, geom: TankGeometry,
                         x_ea: float = 0.0, y_ea: float = 0.0) -> SloshLoads:
    """Trapezoidal integration of wall pressure and shear into tank-frame loads.

    Signs and moment arms follow the wall-load sums term by term, including
    the mixed shear arms (``x - x_ea`` on east/west shear, ``y - y_ea`` on
    north/south shear).  With no explicit coordinate available for those
    arms, the east wall sits at ``x = +l/2``, the west at ``-l/2``, north at
    ``y = +h/2`` and south at ``-h/2``.
    """
    w, l, h = geom.w, geom.l, geom.h
    xs = np.linspace(-l / 2, l / 2, fields.p_N.size)
    xs_s = np.linspace(-l / 2, l / 2, fields.p_S.size)
    ye = np.linspace(-h / 2, h / 2, fields.p_E.size)
    yw = np.linspace(-h / 2, h / 2, fields.p_W.size)

    F_x = (_trap(fields.p_E * w, ye) - _trap(fields.p_W * w, yw)
           + _trap(fields.tau_S * w, xs_s) + _trap(fields.tau_N * w, xs))
    F_y = (_trap(fields.p_N * w, xs) - _trap(fields.p_S * w, xs_s)
           + _trap(fields.tau_W * w, yw) + _trap(fields.tau_E * w, ye))
    x_e, x_w, y_n, y_s = l / 2, -l / 2, h / 2, -h / 2
    M_z = (_trap(fields.p_E * w * (ye - y_ea), ye)
           + _trap(fields.p_N * w * (xs - x_ea), xs)
           - _trap(fields.p_W * w * (yw - y_ea), yw)
           - _trap(fields.p_S * w * (xs_s - x_ea), xs_s)
           + _trap(fields.tau_W * w * (x_w - x_ea), yw)
           + _trap(fields.tau_N * w * (y_n - y_ea), xs)
           - _trap(fields.tau_E * w * (x_e - x_ea), ye)
           - _trap(fields.tau_S * w * (y_s - y_ea), xs_s))
    return SloshLoads(F_x, F_y, M_z, "tank")


def transform_to_inertial(loads: SloshLoads, alpha: float) -> SloshLoads:
    if loads.frame != "tank":
        raise SloshError(f"expected tank-frame loads, got frame {loads.frame!r}")
    c, s = math.cos(alpha), math.sin(alpha)
    return SloshLoads(loads.F_x * c + loads.F_y * s, loads.F_y * c - loads.F_x * s,
                      loads.M_z, "inertial")


@dataclass(frozen=True)
class SloshAnalogParams:
    m_s: float
    m_0: float
    omega_s: float
    zeta_s: float
    h_s: float  # slosh-mass height above the tank centre (m)
    h_0: float  # rigid-mass height above the tank centre (m)
    g: float = 9.81

    @property
    def m_f(self) -> float:
        return self.m_s + self.m_0


def analog_params(geom: TankGeometry, zeta_s: float = 0.02) -> SloshAnalogParams:
    """First lateral sloshing mode of a rectangular tank as a spring-mass pair.

    The slosh mass sits at the side-wall centre of pressure of the mode,
    ``d/2 - (l / pi) tanh(pi d / 2l)`` above the liquid centroid; the rigid mass height keeps the combined centroid at
    the liquid centroid.
    """
    if not 0.0 <= zeta_s < 1.0:
        raise SloshError("zeta_s must lie in [0, 1)")
    l, d, g = geom.l, geom.depth, geom.g
    kd = math.pi * d / l
    omega_s = math.sqrt(math.pi * g / l * math.tanh(kd))
    m_f = geom.fuel_mass
    m_s = m_f * 8.0 * l / (math.pi ** 3 * d) * math.tanh(kd)
    m_0 = m_f - m_s
    y_cg = -geom.h / 2 + d / 2
    h_s = y_cg + d / 2 - l / math.pi * math.tanh(0.5 * kd)
    h_0 = (m_f * y_cg - m_s * h_s) / m_0 if m_0 > 0 else y_cg
    return SloshAnalogParams(m_s, m_0, omega_s, zeta_s, h_s, h_0, g)


@dataclass(frozen=True)
class TankKinematics:
    """Tank-centre motion with the physical derivatives the analog needs."""

    h_dd: float = 0.0       # downward plunge acceleration, m/s^2
    alpha: float = 0.0
    alpha_d: float = 0.0    # rad/s
    alpha_dd: float = 0.0   # rad/s^2
    a_lat: float = 0.0      # extra tank-frame lateral centre acceleration, m/s^2

    @classmethod
    def from_nondim(cls, h_bar_dd: float, alpha: float, alpha_dot: float,
                    alpha_ddot: float, b: float, omega_alpha: float) -> "TankKinematics":
        w2 = omega_alpha ** 2
        return cls(b * w2 * h_bar_dd, alpha, omega_alpha * alpha_dot, w2 * alpha_ddot)


@dataclass(frozen=True)
class SloshAnalogState:
    x_s: float = 0.0
    x_s_dot: float = 0.0
    params: SloshAnalogParams | None = field(default=None, compare=False)


def _accels(k: TankKinematics, y: float) -> tuple[float, float]:
    # tank-frame acceleration of a point at height y above the centre
    s, c = math.sin(k.alpha), math.cos(k.alpha)
    return k.a_lat + k.h_dd * s + y * k.alpha_dd, -k.h_dd * c - y * k.alpha_d ** 2


def _slosh_rhs(p: SloshAnalogParams, x, v, k: TankKinematics):
    ax_s, _ = _accels(k, p.h_s)
    g_x = p.g * math.sin(k.alpha)
    return v, -(2 * p.zeta_s * p.omega_s * v + p.omega_s ** 2 * x) + (g_x - ax_s)


def analog_loads(state: SloshAnalogState, k: TankKinematics) -> SloshLoads:
    """Tank-frame wall loads for the current slosh coordinate and tank motion."""
    p = state.params
    ax_s, _ = _accels(k, p.h_s)
    ax_0, _ = _accels(k, p.h_0)
    _, ay = _accels(k, 0.0)
    g_x, g_y = p.g * math.sin(k.alpha), -p.g * math.cos(k.alpha)
    _, xdd = _slosh_rhs(p, state.x_s, state.x_s_dot, k)
    rel_s = ax_s + xdd - g_x
    rel_0 = ax_0 - g_x
    F_x = -p.m_0 * rel_0 - p.m_s * rel_s
    F_y = -p.m_f * (ay - g_y)
    M_z = -p.m_s * rel_s * p.h_s - p.m_0 * rel_0 * p.h_0
    return SloshLoads(F_x, F_y, M_z, "tank")


def step_analog(state: SloshAnalogState, k0: TankKinematics, k1: TankKinematics,
                dt: float) -> tuple[SloshAnalogState, SloshLoads]:
    """RK4 step of the slosh coordinate from kinematics ``k0`` to ``k1``.

    The midpoint kinematics are the average of the endpoints.  Returns the
    new state and the loads at the end of the step.
    """
    if not dt > 0:
        raise SloshError("dt must be positive")
    p = state.params
    km = TankKinematics(*(0.5 * (a + b) for a, b in
                          zip((k0.h_dd, k0.alpha, k0.alpha_d, k0.alpha_dd, k0.a_lat),
                              (k1.h_dd, k1.alpha, k1.alpha_d, k1.alpha_dd, k1.a_lat))))
    x, v = state.x_s, state.x_s_dot
    a1x, a1v = _slosh_rhs(p, x, v, k0)
    a2x, a2v = _slosh_rhs(p, x + 0.5 * dt * a1x, v + 0.5 * dt * a1v, km)
    a3x, a3v = _slosh_rhs(p, x + 0.5 * dt * a2x, v + 0.5 * dt * a2v, km)
    a4x, a4v = _slosh_rhs(p, x + dt * a3x, v + dt * a3v, k1)
    new = replace(state, x_s=x + dt / 6 * (a1x + 2 * a2x + 2 * a3x + a4x),
                  x_s_dot=v + dt / 6 * (a1v + 2 * a2v + 2 * a3v + a4v))
    return new, analog_loads(new, k1)


def analog_energy(state: SloshAnalogState) -> float:
    """Kinetic plus spring energy of the slosh mass relative to the tank."""
    p = state.params
    return 0.5 * p.m_s * (state.x_s_dot ** 2 + p.omega_s ** 2 * state.x_s ** 2)


SLOSH_CHANNELS = ("t", "h_bar", "alpha", "F_x", "F_y", "M_z")


def _derivs(x: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    d1 = np.gradient(x, dt, edge_order=2)
    return d1, np.gradient(d1, dt, edge_order=2)


def generate_slosh_series(motion: TimeSeriesDataset, geom: TankGeometry,
                          b: float, omega_alpha: float, zeta_s: float = 0.02
                          ) -> TimeSeriesDataset:
    """Drive the analog with a nondimensional motion history.

    Rates and accelerations are taken from ``h_bar_dot``/``alpha_dot`` and
    ``h_bar_ddot``/``alpha_ddot`` channels when present, otherwise from
    second-order finite differences.  The time step is ``motion.dt`` in
    units of ``tau``.
    """
    h = motion.column("h_bar")
    al = motion.column("alpha")
    names = motion.channel_names
    dtau = motion.dt
    if "alpha_ddot" in names and "h_bar_ddot" in names:
        hdd, ad, add = (motion.column(c) for c in ("h_bar_ddot", "alpha_dot", "alpha_ddot"))
    else:
        _, hdd = _derivs(h, dtau)
        ad, add = _derivs(al, dtau)
    kin = [TankKinematics.from_nondim(hdd[i], al[i], ad[i], add[i], b, omega_alpha)
           for i in range(len(motion))]
    st = SloshAnalogState(params=analog_params(geom, zeta_s))
    dt = dtau / omega_alpha
    t = motion.column("t") if "t" in names else motion.time
    out = np.empty((len(motion), 6))
    L = analog_loads(st, kin[0])
    out[0] = (t[0], h[0], al[0], L.F_x, L.F_y, L.M_z)
    for i in range(1, len(motion)):
        st, L = step_analog(st, kin[i - 1], kin[i], dt)
        out[i] = (t[i], h[i], al[i], L.F_x, L.F_y, L.M_z)
    return TimeSeriesDataset(SLOSH_CHANNELS, out, motion.dt, motion.t0)

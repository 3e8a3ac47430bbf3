"""Forced and free aero-structural runs with oracle or surrogate load sources.

One load evaluation per structural step (explicit coupling).  Accelerations
fed to the oracles are those the integrator produced at the end of the
previous step.  The fuel is part of the structural mass through m_tot/m, so
the rigid-fluid plunge reaction ``m_f * h''`` is removed from the vertical
slosh force before assembly; the recorded slosh series keep the full loads.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .aero_oracle import AeroOracleState, ForcedMotion, loads_at, step_loads
from .core import TimeSeriesDataset, write_csv
from .rnn import RnnModel, Rollout
from .slosh_oracle import (SloshAnalogState, SloshLoads, TankGeometry, TankKinematics,
                           analog_loads, analog_params, step_analog, transform_to_inertial)
from .structure import (MotionState, ModalIntegrator, StructuralParams, assemble_loads,
                        build_matrices, energy)


class CouplingError(RuntimeError):
    pass


MOTION_CHANNELS = ("t", "h_bar", "alpha", "h_bar_dot", "alpha_dot", "h_bar_ddot", "alpha_ddot")
AERO_LOAD_CHANNELS = ("t", "C_L", "C_M")
SLOSH_LOAD_CHANNELS = ("t", "F_x", "F_y", "M_z", "F_X", "F_Y", "M_Z")
FORCE_CHANNELS = ("t", "F_h", "F_alpha", "F_h_aero", "F_alpha_aero", "F_h_slosh",
                  "F_alpha_slosh", "energy")
GROUPS = {"motion": MOTION_CHANNELS, "aero": AERO_LOAD_CHANNELS,
          "slosh": SLOSH_LOAD_CHANNELS, "forces": FORCE_CHANNELS}


@dataclass
class CouplingConfig:
    mode: str = "free"
    aero_source: str = "oracle"
    slosh_source: str = "none"
    forced_cycles: int = 2
    total_steps: int = 2000
    dtau: float = 0.05
    structure: StructuralParams = field(default_factory=StructuralParams)
    motion: ForcedMotion = field(default_factory=ForcedMotion)
    tank: TankGeometry | None = None
    aero_a: float = -0.5
    section_mass: float = 50.0  # kg per unit span, sets m_tot/m and the slosh load scale
    zeta_s: float = 0.02
    aero_model: RnnModel | None = field(default=None, repr=False)
    slosh_model: RnnModel | None = field(default=None, repr=False)
    # steps whose loads come from the oracle to seed a surrogate window;
    # None means the model's batch length
    seed_steps: int | None = None
    motion_data: TimeSeriesDataset | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.mode not in ("forced", "free"):
            raise CouplingError(f"mode must be 'forced' or 'free', got {self.mode!r}")
        if self.aero_source not in ("oracle", "surrogate", "none"):
            raise CouplingError(f"unknown aero_source {self.aero_source!r}")
        if self.slosh_source not in ("oracle", "surrogate", "none"):
            raise CouplingError(f"unknown slosh_source {self.slosh_source!r}")
        if not self.dtau > 0:
            raise CouplingError("dtau must be positive")
        if self.total_steps < 1:
            raise CouplingError("total_steps must be >= 1")
        if self.mode == "free" and self.total_steps < self.forced_steps:
            raise CouplingError(
                f"total_steps={self.total_steps} shorter than the forced phase "
                f"({self.forced_steps} steps)")
        if self.slosh_source != "none" and self.tank is None:
            raise CouplingError("slosh_source is active but no tank geometry was given")
        if self.aero_source == "surrogate" and self.aero_model is None:
            raise CouplingError("aero_source='surrogate' needs aero_model")
        if self.slosh_source == "surrogate" and self.slosh_model is None:
            raise CouplingError("slosh_source='surrogate' needs slosh_model")

    @property
    def forced_steps(self) -> int:
        per = self.motion.period_tau(self.structure.omega_alpha)
        return int(round(self.forced_cycles * per / self.dtau))

    def resolved_structure(self) -> StructuralParams:
        """Structure with the fuel mass and slosh load scale matching the sources."""
        p = self.structure
        if self.slosh_source == "none":
            return replace(p, mass_ratio_total=1.0, slosh_force_scale=0.0)
        return p.with_tank(self.section_mass, self.tank.fuel_mass / self.tank.w)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in ("mode", "aero_source", "slosh_source",
                                           "forced_cycles", "total_steps", "dtau", "aero_a",
                                           "section_mass", "zeta_s", "seed_steps")}
        d["structure"] = asdict(self.structure)
        d["motion"] = asdict(self.motion)
        d["tank"] = asdict(self.tank) if self.tank is not None else None
        return d

    @classmethod
    def from_dict(cls, d: dict, **extra) -> "CouplingConfig":
        d = dict(d)
        d["structure"] = StructuralParams(**d.get("structure", {}))
        d["motion"] = ForcedMotion(**d.get("motion", {}))
        if d.get("tank") is not None:
            d["tank"] = TankGeometry(**d["tank"])
        # paths to checkpoints are resolved by the caller
        for k in ("aero_checkpoint", "slosh_checkpoint", "motion_csv"):
            d.pop(k, None)
        d.update(extra)
        return cls(**d)


@dataclass
class CoupledRunResult:
    dtau: float
    t0: float
    series: dict[str, np.ndarray]   # group name -> (n, channels) table, first column tau
    timings: dict[str, float]
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        lens = {v.shape[0] for v in self.series.values()}
        if len(lens) > 1:
            raise CouplingError("series groups differ in length")
        if any(t < 0 for t in self.timings.values()):
            raise CouplingError("negative timing")

    def __len__(self) -> int:
        return next(iter(self.series.values())).shape[0]

    def dataset(self, group: str) -> TimeSeriesDataset:
        return TimeSeriesDataset(GROUPS[group], self.series[group], self.dtau, self.t0)

    def column(self, name: str) -> np.ndarray:
        for g, names in GROUPS.items():
            if name in names and g in self.series:
                return self.series[g][:, names.index(name)]
        raise KeyError(name)

    def motion_and_aero(self) -> TimeSeriesDataset:
        cols = ("t", "h_bar", "alpha", "C_L", "C_M")
        return TimeSeriesDataset(cols, np.column_stack([self.column(c) for c in cols]),
                                 self.dtau, self.t0)

    def motion_and_slosh(self) -> TimeSeriesDataset:
        cols = ("t", "h_bar", "alpha", "F_x", "F_y", "M_z")
        return TimeSeriesDataset(cols, np.column_stack([self.column(c) for c in cols]),
                                 self.dtau, self.t0)

    def write(self, out_dir: str | Path):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for g in self.series:
            write_csv(out / f"{g}.csv", self.dataset(g))
        (out / "timing.json").write_text(json.dumps(self.timings, indent=1, sort_keys=True))

    @classmethod
    def read(cls, run_dir: str | Path) -> "CoupledRunResult":
        from .core import read_csv
        d = Path(run_dir)
        series, dtau, t0 = {}, None, 0.0
        for g, names in GROUPS.items():
            f = d / f"{g}.csv"
            if not f.exists():
                continue
            ds = read_csv(f)
            if ds.channel_names != names:
                raise CouplingError(f"{f}: unexpected columns {ds.channel_names}")
            series[g] = np.array(ds.samples)
            dtau, t0 = ds.dt, ds.t0
        if not series:
            raise CouplingError(f"no run series found in {d}")
        tf = d / "timing.json"
        timings = json.loads(tf.read_text()) if tf.exists() else {}
        return cls(dtau, t0, series, timings)


# ------------------------------------------------------------------ load sources

class _AeroSource:
    def __init__(self, cfg: CouplingConfig, p: StructuralParams):
        self.kind = cfg.aero_source
        self.state = AeroOracleState.for_params(p, cfg.aero_a)
        self.dtau = cfg.dtau
        self.model = cfg.aero_model
        self.rollout = None
        self.hist_m, self.hist_l = [], []
        if self.kind == "surrogate":
            if self.model.n_in != 4 or self.model.n_out != 2:
                raise CouplingError(
                    f"aero surrogate expects 2 motion + 2 load inputs, has n_in="
                    f"{self.model.n_in}, n_out={self.model.n_out}")
            self.seed = cfg.seed_steps or self.model.config.batch_len

    def __call__(self, k: int, m: MotionState, acc) -> tuple[float, float]:
        if self.kind == "none":
            return 0.0, 0.0
        if self.kind == "surrogate" and k >= self.seed:
            if self.rollout is None:
                self.rollout = Rollout(self.model, np.array(self.hist_m),
                                       np.array(self.hist_l))
            y = self.rollout.advance(np.array([m.h_bar, m.alpha]))
            return float(y[0]), float(y[1])
        if k == 0:
            self.state = self.state.settled(m)
            L = loads_at(self.state, m, acc)
        else:
            self.state, L = step_loads(self.state, m, self.dtau, acc)
        if self.kind == "surrogate":
            # oracle loads seed the first window
            self.hist_m.append((m.h_bar, m.alpha))
            self.hist_l.append((L.C_L, L.C_M))
        return L.C_L, L.C_M


class _SloshSource:
    def __init__(self, cfg: CouplingConfig, p: StructuralParams):
        self.kind = cfg.slosh_source
        self.b, self.wa = p.b, p.omega_alpha
        self.dt = cfg.dtau / p.omega_alpha
        self.model = cfg.slosh_model
        self.rollout = None
        self.hist_m, self.hist_l = [], []
        self.prev = None
        if self.kind != "none":
            self.state = SloshAnalogState(params=analog_params(cfg.tank, cfg.zeta_s))
        if self.kind == "surrogate":
            if self.model.n_in != 5 or self.model.n_out != 3:
                raise CouplingError(
                    f"slosh surrogate expects 2 motion + 3 load inputs, has n_in="
                    f"{self.model.n_in}, n_out={self.model.n_out}")
            self.seed = cfg.seed_steps or self.model.config.batch_len

    def __call__(self, k: int, m: MotionState, acc) -> SloshLoads:
        if self.kind == "none":
            return SloshLoads(0.0, 0.0, 0.0)
        if self.kind == "surrogate" and k >= self.seed:
            if self.rollout is None:
                self.rollout = Rollout(self.model, np.array(self.hist_m),
                                       np.array(self.hist_l))
            y = self.rollout.advance(np.array([m.h_bar, m.alpha]))
            return SloshLoads(float(y[0]), float(y[1]), float(y[2]))
        kin = TankKinematics.from_nondim(acc[0], m.alpha, m.alpha_dot, acc[1], self.b, self.wa)
        if self.prev is None:
            L = analog_loads(self.state, kin)
        else:
            self.state, L = step_analog(self.state, self.prev, kin, self.dt)
        self.prev = kin
        if self.kind == "surrogate":
            self.hist_m.append((m.h_bar, m.alpha))
            self.hist_l.append((L.F_x, L.F_y, L.M_z))
        return L


def _prescribed(cfg: CouplingConfig):
    """Return k -> (MotionState, (h'', alpha'')) for the prescribed motion."""
    wa = cfg.structure.omega_alpha
    if cfg.motion_data is None:
        return lambda k: cfg.motion.at(k * cfg.dtau, wa)
    md = cfg.motion_data
    if not math.isclose(md.dt, cfg.dtau, rel_tol=1e-9):
        raise CouplingError(f"motion data dt={md.dt} differs from dtau={cfg.dtau}")
    if len(md) < cfg.total_steps:
        raise CouplingError(f"motion data has {len(md)} rows, need {cfg.total_steps}")
    h, al = md.column("h_bar"), md.column("alpha")
    hd = np.gradient(h, md.dt, edge_order=2)
    ad = np.gradient(al, md.dt, edge_order=2)
    hdd = np.gradient(hd, md.dt, edge_order=2)
    add = np.gradient(ad, md.dt, edge_order=2)
    return lambda k: (MotionState(h[k], al[k], hd[k], ad[k], k * md.dt), (hdd[k], add[k]))


def _run(cfg: CouplingConfig, free: bool) -> CoupledRunResult:
    p = cfg.resolved_structure()
    n = cfg.total_steps
    n_forced = cfg.forced_steps if free else n
    prescribed = _prescribed(cfg)
    aero = _AeroSource(cfg, p)
    slosh = _SloshSource(cfg, p)
    integ = ModalIntegrator(p)
    Mbar, Kbar = integ.Mbar, integ.Kbar
    w = cfg.tank.w if cfg.tank is not None else 1.0
    m_fuel = cfg.tank.fuel_mass if cfg.slosh_source != "none" else 0.0
    s = p.slosh_force_scale
    tm = {"aero": 0.0, "slosh": 0.0, "structure": 0.0}

    mot = np.empty((n, len(MOTION_CHANNELS)))
    aer = np.empty((n, len(AERO_LOAD_CHANNELS)))
    slo = np.empty((n, len(SLOSH_LOAD_CHANNELS)))
    frc = np.empty((n, len(FORCE_CHANNELS)))

    m, acc = prescribed(0)
    t_start = time.perf_counter()
    for k in range(n):
        tau = k * cfg.dtau
        t0 = time.perf_counter()
        C_L, C_M = aero(k, m, acc)
        t1 = time.perf_counter()
        sl = slosh(k, m, acc)
        t2 = time.perf_counter()
        si = transform_to_inertial(sl, m.alpha)
        # m_tot/m already carries the fuel as rigid mass; drop its plunge reaction
        F_Y = (si.F_y - m_fuel * p.b * p.omega_alpha ** 2 * acc[0]) / w
        M_Z = si.M_z / w
        F = assemble_loads(C_L, C_M, F_Y, M_Z, p)
        Fa = assemble_loads(C_L, C_M, 0.0, 0.0, p)
        mot[k] = (tau, m.h_bar, m.alpha, m.h_bar_dot, m.alpha_dot, acc[0], acc[1])
        aer[k] = (tau, C_L, C_M)
        slo[k] = (tau, sl.F_x, sl.F_y, sl.M_z, si.F_x, si.F_y, si.M_z)
        frc[k] = (tau, F[0], F[1], Fa[0], Fa[1], F[0] - Fa[0], F[1] - Fa[1],
                  energy(m, Mbar, Kbar))
        if not (np.all(np.isfinite(mot[k])) and np.all(np.isfinite(frc[k]))):
            raise CouplingError(f"non-finite state at step {k} (tau={tau:g})")
        if k == n - 1:
            tm["aero"] += t1 - t0
            tm["slosh"] += t2 - t1
            break
        if k + 1 <= n_forced:
            m, acc = prescribed(k + 1)
        else:
            if k == n_forced:
                integ.reset(m)
                integ.qddot = np.array(acc, float)
            m = integ.advance(F, cfg.dtau)
            acc = (float(integ.qddot[0]), float(integ.qddot[1]))
        t3 = time.perf_counter()
        tm["aero"] += t1 - t0
        tm["slosh"] += t2 - t1
        tm["structure"] += t3 - t2
    tm["total"] = time.perf_counter() - t_start
    series = {"motion": mot, "aero": aer, "slosh": slo, "forces": frc}
    return CoupledRunResult(cfg.dtau, 0.0, series, tm, cfg.to_dict())


def run_forced(cfg: CouplingConfig) -> CoupledRunResult:
    """Loads from the selected sources along the prescribed motion."""
    return _run(cfg, free=False)


def run_free(cfg: CouplingConfig) -> CoupledRunResult:
    """Forced phase of ``forced_cycles`` periods, then the structure is released."""
    if cfg.mode != "free":
        raise CouplingError("run_free needs mode='free'")
    return _run(cfg, free=True)


def run(cfg: CouplingConfig) -> CoupledRunResult:
    return run_free(cfg) if cfg.mode == "free" else run_forced(cfg)


@dataclass
class SloshPair:
    dry: CoupledRunResult
    wet: CoupledRunResult
    differences: TimeSeriesDataset

    def effect_ratios(self) -> dict[str, float]:
        """Relative change from sloshing in each generalized-force channel.

        ``RMS(wet - dry) / RMS(dry)`` on the vertical (plunge) and moment
        (pitch) rows, plus the slosh share ``RMS(slosh part) / RMS(aero part)``
        within the wet run.
        """
        d = self.differences
        out = {}
        for ch, base in (("F_h", "F_h"), ("F_alpha", "F_alpha")):
            a = self.dry.column(base)
            out[f"{ch}_change"] = _rms(d.column(f"d_{ch}")) / max(_rms(a), 1e-300)
        for ch in ("h", "alpha"):
            out[f"F_{ch}_slosh_share"] = (_rms(self.wet.column(f"F_{ch}_slosh"))
                                          / max(_rms(self.wet.column(f"F_{ch}_aero")), 1e-300))
        return out


def with_and_without_slosh(cfg: CouplingConfig) -> SloshPair:
    if cfg.slosh_source == "none":
        raise CouplingError("with_and_without_slosh needs an active slosh_source")
    dry = run(replace(cfg, slosh_source="none"))
    wet = run(cfg)
    names = ["t"]
    cols = [dry.column("t")]
    for c in ("h_bar", "alpha", "F_h", "F_alpha", "C_L", "C_M"):
        names.append(f"d_{c}")
        cols.append(wet.column(c) - dry.column(c))
    diff = TimeSeriesDataset(tuple(names), np.column_stack(cols), cfg.dtau, 0.0)
    return SloshPair(dry, wet, diff)


# ------------------------------------------------------------------ metrics

def _rms(x) -> float:
    x = np.asarray(x, float)
    return float(np.sqrt(np.mean(x * x))) if x.size else 0.0


def relative_rms(a, b) -> float:
    """``RMS(a - b) / RMS(a)``, with ``a`` the reference."""
    ref = _rms(a)
    return _rms(np.asarray(a) - np.asarray(b)) / ref if ref > 0 else _rms(np.asarray(b))


def computational_saving(t_reference: float, t_surrogate: float) -> float:
    """Percentage of the reference wall time saved by the surrogate run."""
    if not t_reference > 0:
        raise ValueError("reference time must be positive")
    return (t_reference - t_surrogate) / t_reference * 100.0


PHASE_PAIRS = (("h_bar", "C_L"), ("alpha", "C_M"), ("h_bar", "F_h"), ("alpha", "F_alpha"))
COMPARE_CHANNELS = ("h_bar", "alpha", "h_bar_dot", "alpha_dot", "C_L", "C_M",
                    "F_x", "F_y", "M_z", "F_h", "F_alpha")


def compare_metrics(a: CoupledRunResult, b: CoupledRunResult,
                    stop: int | None = None) -> dict:
    """Per-channel errors of ``b`` against ``a`` over the first ``stop`` steps."""
    if len(a) != len(b):
        raise CouplingError(f"runs differ in length: {len(a)} vs {len(b)}")
    if not math.isclose(a.dtau, b.dtau, rel_tol=1e-12):
        raise CouplingError(f"runs differ in dtau: {a.dtau} vs {b.dtau}")
    sl = slice(0, stop)
    channels = {}
    for c in COMPARE_CHANNELS:
        try:
            xa, xb = a.column(c)[sl], b.column(c)[sl]
        except KeyError:
            continue
        e = xb - xa
        channels[c] = {"rms_error": _rms(e), "max_error": float(np.max(np.abs(e))),
                       "relative_rms": relative_rms(xa, xb)}
    phase = {}
    for x, y in PHASE_PAIRS:
        try:
            phase[f"{y}_vs_{x}"] = {"a": np.column_stack([a.column(x)[sl], a.column(y)[sl]]),
                                    "b": np.column_stack([b.column(x)[sl], b.column(y)[sl]])}
        except KeyError:
            continue
    ta, tb = a.timings.get("total", 0.0), b.timings.get("total", 0.0)
    rep = {"steps": len(a) if stop is None else min(stop, len(a)),
           "channels": channels, "phase": phase,
           "timings": {"a": dict(a.timings), "b": dict(b.timings)}}
    rep["saving_percent"] = computational_saving(ta, tb) if ta > 0 else None
    return rep


def report_json(rep: dict) -> dict:
    """The report without the phase point arrays, ready for ``json.dumps``."""
    return {k: v for k, v in rep.items() if k != "phase"}

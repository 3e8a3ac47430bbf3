"""Command-line front end: data generation, training, prediction, coupled runs, evaluation."""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .aero_oracle import ForcedMotion, generate_series
from .core import DataError, TimeSeriesDataset, read_csv, split_train_test, write_csv
from .coupling import (CoupledRunResult, CouplingConfig, compare_metrics, report_json, run,
                       with_and_without_slosh)
from .rnn import (Rollout, TrainConfig, load_checkpoint, predict_single_step, save_checkpoint,
                  train)
from .slosh_oracle import TankGeometry, generate_slosh_series
from .structure import StructuralParams


class CliError(RuntimeError):
    pass


KINDS = {
    "aero": {"arch": "120,80", "batch_len": 40, "epochs": 1500,
             "motion": ("h_bar", "alpha"), "loads": ("C_L", "C_M")},
    "aero-free": {"arch": "120,80", "batch_len": 30, "epochs": 1500,
                  "motion": ("h_bar", "alpha"), "loads": ("C_L", "C_M")},
    "slosh": {"arch": "170,120", "batch_len": 15, "epochs": 4000,
              "motion": ("h_bar", "alpha"), "loads": ("F_x", "F_y", "M_z")},
}

# forced runs follow the 2 deg / 2 pi rad/s pitching case; free runs use a
# faster two-cycle excitation so the release happens after 25 tau
MOTION_DEFAULTS = {
    "forced": {"alpha0_deg": 2.0, "omega": 2.0 * math.pi, "h0": 0.0, "dtau": 0.5, "T": 300.0},
    "free": {"alpha0_deg": 2.0, "omega": 50.0, "h0": 0.01, "dtau": 0.1, "T": 99.9},
}


def resolve_seed(seed: int | None) -> int:
    if seed is not None:
        return seed
    env = os.environ.get("AEROSLOSH_SEED")
    if env:
        try:
            return int(env)
        except ValueError:
            raise CliError(f"AEROSLOSH_SEED={env!r} is not an integer") from None
    return 0


def _load_json(path: str | None) -> dict:
    if not path:
        return {}
    p = Path(path)
    if not p.exists():
        raise CliError(f"file not found: {path}")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise CliError(f"{path}: invalid JSON ({e})") from None


def _pick(cli_value, cfg: dict, key: str, default):
    # flag > config file > built-in default
    if cli_value is not None:
        return cli_value
    return cfg.get(key, default)


class Manifest:
    def __init__(self, command: str, seed: int | None):
        self.d = {"command": command, "seed": seed, "tool_version": __version__,
                  "inputs": {}, "outputs": {}, "config": {},
                  "started": time.strftime("%Y-%m-%dT%H:%M:%S%z")}

    def write(self, path: Path):
        self.d["finished"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.d, indent=1, sort_keys=True, default=str))


def _manifest_for(out: Path) -> Path:
    return out.with_name(out.name + ".manifest.json")


# ------------------------------------------------------------------ commands

def cmd_gen_aero(a) -> int:
    d = MOTION_DEFAULTS[a.motion]
    params = StructuralParams(**_load_json(a.params))
    dtau = _pick(a.dtau, d, "dtau", None)
    T = _pick(a.T, d, "T", None)
    motion = ForcedMotion(alpha_mean=math.radians(a.alpha_mean_deg),
                          alpha_0=math.radians(_pick(a.alpha0_deg, d, "alpha0_deg", None)),
                          omega=_pick(a.omega, d, "omega", None),
                          h_0=_pick(a.h0, d, "h0", None))
    data = generate_series(a.motion, params, T, dtau, motion, forced_cycles=a.forced_cycles)
    out = Path(a.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(out, data)
    man = Manifest("gen-aero", resolve_seed(a.seed))
    man.d["config"] = {"motion_source": a.motion, "params": asdict(params),
                       "motion": asdict(motion), "dtau": dtau, "T": T,
                       "forced_cycles": a.forced_cycles}
    man.d["inputs"] = {"params": a.params}
    man.d["outputs"] = {"data": str(out)}
    man.write(_manifest_for(out))
    return 0


def cmd_gen_slosh(a) -> int:
    if not Path(a.tank).exists():
        raise CliError(f"tank file not found: {a.tank}")
    tank = TankGeometry(**_load_json(a.tank))
    motion = read_csv(a.motion)
    params = StructuralParams(**_load_json(a.params))
    data = generate_slosh_series(motion, tank, params.b, params.omega_alpha, a.zeta)
    out = Path(a.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(out, data)
    man = Manifest("gen-slosh", resolve_seed(a.seed))
    man.d["config"] = {"tank": asdict(tank), "b": params.b,
                       "omega_alpha": params.omega_alpha, "zeta_s": a.zeta}
    man.d["inputs"] = {"motion": a.motion, "tank": a.tank, "params": a.params}
    man.d["outputs"] = {"data": str(out)}
    man.write(_manifest_for(out))
    return 0


def cmd_train(a) -> int:
    cfgf = _load_json(a.config)
    kind = _pick(a.kind, cfgf, "kind", "aero")
    if kind not in KINDS:
        raise CliError(f"unknown kind {kind!r}; expected one of {sorted(KINDS)}")
    k = KINDS[kind]
    arch = _pick(a.arch, cfgf, "arch", k["arch"])
    if isinstance(arch, str):
        try:
            arch = [int(x) for x in arch.split(",") if x.strip()]
        except ValueError:
            raise CliError(f"bad --arch {arch!r}; expected e.g. 120,80") from None
    seed = resolve_seed(a.seed if a.seed is not None else cfgf.get("seed"))
    tc = TrainConfig(
        epochs=int(_pick(a.epochs, cfgf, "epochs", k["epochs"])),
        batch_len=int(_pick(a.batch_len, cfgf, "batch_len", k["batch_len"])),
        windows_per_epoch=int(_pick(a.windows, cfgf, "windows_per_epoch", 32)),
        learning_rate=float(_pick(a.lr, cfgf, "learning_rate", 1e-3)),
        final_learning_rate=_pick(a.lr_final, cfgf, "final_learning_rate", 1e-5),
        loss_variant=_pick(a.loss_variant, cfgf, "loss_variant", "mse"),
        rng_seed=seed)
    motion = tuple(cfgf.get("motion_channels", k["motion"]))
    loads = tuple(cfgf.get("load_channels", k["loads"]))
    data = read_csv(a.data)
    frac = float(_pick(a.train_fraction, cfgf, "train_fraction", 1.0))
    if frac < 1.0:
        data, _ = split_train_test(data, frac)
    model, hist = train(data, arch, tc, motion=motion, loads=loads,
                        progress_every=a.progress)
    out = Path(a.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, out)
    hpath = Path(a.history) if a.history else out.with_name(out.stem + ".loss.csv")
    ep = np.arange(1, len(hist) + 1, dtype=float)
    write_csv(hpath, TimeSeriesDataset(("epoch", "loss", "log10_loss"),
                                       np.column_stack([ep, hist, np.log10(np.maximum(hist, 1e-300))]), 1.0, 1.0),
              time_column=False)
    man = Manifest("train", seed)
    man.d["config"] = {"kind": kind, "arch": arch, "train": asdict(tc),
                       "motion_channels": motion, "load_channels": loads,
                       "train_fraction": frac, "final_loss": float(hist[-1])}
    man.d["inputs"] = {"data": a.data, "config": a.config}
    man.d["outputs"] = {"checkpoint": str(out), "history": str(hpath)}
    man.write(_manifest_for(out))
    return 0


def cmd_predict(a) -> int:
    model = load_checkpoint(a.ckpt)
    data = read_csv(a.data)
    mc, lc = model.motion_channels, model.load_channels
    try:
        M = np.column_stack([data.column(c) for c in mc])
        Lt = np.column_stack([data.column(c) for c in lc])
    except KeyError as e:
        raise CliError(f"data lacks channel {e} required by the checkpoint") from None
    t = data.column("t") if "t" in data.channel_names else data.time
    L = a.window or model.config.batch_len
    names = ["t"]
    for c in lc:
        names += [f"{c}_true", f"{c}_pred"]
    if a.mode == "single":
        X = np.concatenate([M[1:], Lt[:-1]], axis=1)
        n = X.shape[0] - L + 1
        if n < 1:
            raise CliError(f"data too short for a window of {L}")
        rows = []
        sc = model.output_scaler
        for s in range(a.start, n) if a.start is not None else range(n):
            y = predict_single_step(model, X[s:s + L])
            truth = Lt[s + L]
            e = (y - truth) / sc.span if sc is not None else y - truth
            r = [t[s + L]]
            for j in range(len(lc)):
                r += [truth[j], y[j]]
            rows.append(r + [float(np.sum(e * e))])
            if a.start is not None:
                break
        names.append("sq_error_scaled")
        out_arr = np.array(rows)
    else:
        s0 = a.start or 0
        if s0 + L >= len(data):
            raise CliError(f"data too short for a seed window of {L} at {s0}")
        pred = np.empty((len(data) - s0 - L, len(lc)))
        ro = Rollout(model, M[s0:s0 + L], Lt[s0:s0 + L], L)
        for j, i in enumerate(range(s0 + L, len(data))):
            pred[j] = ro.advance(M[i])
        idx = np.arange(s0 + L, len(data))
        cols = [t[idx]]
        for j in range(len(lc)):
            cols += [Lt[idx, j], pred[:, j]]
        out_arr = np.column_stack(cols)
    out = Path(a.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(out, TimeSeriesDataset(tuple(names), out_arr, 1.0), time_column=False)
    man = Manifest("predict", resolve_seed(a.seed))
    man.d["config"] = {"mode": a.mode, "window": L, "start": a.start}
    if a.mode == "single":
        man.d["config"]["mean_sq_error_scaled"] = float(np.mean(out_arr[:, -1]))
    man.d["inputs"] = {"checkpoint": a.ckpt, "data": a.data}
    man.d["outputs"] = {"predictions": str(out)}
    man.write(_manifest_for(out))
    return 0


def build_coupling_config(d: dict, base: Path) -> CouplingConfig:
    def path(p):
        q = Path(p)
        return q if q.is_absolute() else base / q
    extra = {}
    if d.get("aero_checkpoint"):
        extra["aero_model"] = load_checkpoint(path(d["aero_checkpoint"]))
    if d.get("slosh_checkpoint"):
        extra["slosh_model"] = load_checkpoint(path(d["slosh_checkpoint"]))
    if d.get("motion_csv"):
        extra["motion_data"] = read_csv(path(d["motion_csv"]))
    d = {k: v for k, v in d.items() if k != "pair"}
    if isinstance(d.get("motion"), dict) and "alpha_0_deg" in d["motion"]:
        m = dict(d["motion"])
        m["alpha_0"] = math.radians(m.pop("alpha_0_deg"))
        d["motion"] = m
    try:
        return CouplingConfig.from_dict(d, **extra)
    except TypeError as e:
        raise CliError(f"bad coupling config: {e}") from None


def cmd_couple(a) -> int:
    d = _load_json(a.config)
    cfg = build_coupling_config(d, Path(a.config).parent)
    out = Path(a.out_dir)
    man = Manifest("couple", resolve_seed(a.seed))
    man.d["config"] = {**cfg.to_dict(), "pair": bool(d.get("pair", False))}
    man.d["inputs"] = {"config": a.config,
                       **{k: d[k] for k in ("aero_checkpoint", "slosh_checkpoint", "motion_csv")
                          if d.get(k)}}
    if d.get("pair"):
        pair = with_and_without_slosh(cfg)
        pair.dry.write(out / "without_slosh")
        pair.wet.write(out / "with_slosh")
        write_csv(out / "differences.csv", pair.differences, time_column=False)
        (out / "slosh_effect.json").write_text(
            json.dumps(pair.effect_ratios(), indent=1, sort_keys=True))
        man.d["outputs"] = {"without_slosh": str(out / "without_slosh"),
                            "with_slosh": str(out / "with_slosh"),
                            "differences": str(out / "differences.csv"),
                            "effect": str(out / "slosh_effect.json")}
    else:
        res = run(cfg)
        res.write(out)
        man.d["outputs"] = {"run_dir": str(out)}
    man.write(out / "manifest.json")
    return 0


def cmd_eval(a) -> int:
    ra, rb = CoupledRunResult.read(a.a), CoupledRunResult.read(a.b)
    rep = compare_metrics(ra, rb, stop=a.stop)
    out = Path(a.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    body = report_json(rep)
    body["phase_files"] = {}
    for name, pts in rep["phase"].items():
        f = out.with_name(f"{out.stem}_phase_{name}.csv")
        x, y = name.split("_vs_")[1], name.split("_vs_")[0]
        arr = np.column_stack([pts["a"], pts["b"]])
        write_csv(f, TimeSeriesDataset((f"{x}_a", f"{y}_a", f"{x}_b", f"{y}_b"), arr, 1.0),
                  time_column=False)
        body["phase_files"][name] = f.name
    # timings are wall-clock and vary between runs
    out.write_text(json.dumps(body, indent=1, sort_keys=True))
    man = Manifest("eval", resolve_seed(a.seed))
    man.d["config"] = {"stop": a.stop}
    man.d["inputs"] = {"a": a.a, "b": a.b}
    man.d["outputs"] = {"report": str(out)}
    man.write(_manifest_for(out))
    return 0


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="aeroslosh", description=__doc__)
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=None,
                       help="random seed (falls back to $AEROSLOSH_SEED, then 0)")

    p = sub.add_parser("gen-aero", help="oracle aerodynamic load series")
    p.add_argument("--motion", choices=("forced", "free"), default="forced")
    p.add_argument("--params", help="structural parameter JSON")
    p.add_argument("--out", required=True)
    p.add_argument("--dtau", type=float)
    p.add_argument("--T", type=float, help="horizon in tau")
    p.add_argument("--alpha0-deg", type=float)
    p.add_argument("--alpha-mean-deg", type=float, default=0.0)
    p.add_argument("--omega", type=float, help="forcing frequency, rad/s")
    p.add_argument("--h0", type=float, help="plunge forcing amplitude, h/b")
    p.add_argument("--forced-cycles", type=int, default=2)
    common(p)
    p.set_defaults(func=cmd_gen_aero)

    p = sub.add_parser("gen-slosh", help="oracle slosh load series for a motion CSV")
    p.add_argument("--motion", required=True, help="CSV with t, h_bar, alpha")
    p.add_argument("--tank", required=True, help="tank geometry JSON")
    p.add_argument("--params", help="structural parameter JSON (b, omega_alpha)")
    p.add_argument("--zeta", type=float, default=0.02)
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_gen_slosh)

    p = sub.add_parser("train", help="train a recurrent surrogate")
    p.add_argument("--data", required=True)
    p.add_argument("--kind", choices=sorted(KINDS))
    p.add_argument("--config", help="training config JSON")
    p.add_argument("--arch")
    p.add_argument("--batch-len", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--windows", type=int, help="windows per epoch")
    p.add_argument("--lr", type=float)
    p.add_argument("--lr-final", type=float)
    p.add_argument("--loss-variant", choices=("mse", "root"))
    p.add_argument("--train-fraction", type=float,
                   help="train on this leading fraction of the series")
    p.add_argument("--out", required=True)
    p.add_argument("--history")
    p.add_argument("--progress", type=int, default=0)
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="single-step or rollout prediction")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--mode", choices=("single", "rollout"), default="single")
    p.add_argument("--window", type=int)
    p.add_argument("--start", type=int)
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("couple", help="forced or free coupled run")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", required=True)
    common(p)
    p.set_defaults(func=cmd_couple)

    p = sub.add_parser("eval", help="compare two run directories")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--stop", type=int, help="compare only the first N steps")
    common(p)
    p.set_defaults(func=cmd_eval)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CliError, DataError, ValueError, RuntimeError, OSError, KeyError) as e:
        msg = str(e).splitlines()[0] if str(e) else ""
        print(f"error: {type(e).__name__}: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

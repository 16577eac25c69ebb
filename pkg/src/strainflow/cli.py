"""Experiment runner and command-line interface.

Subcommands: run, mixed, bounds, equilibria, asympt, counterexample,
plotdata, sweep. A run is described by one declarative JSON config (every
field has a default; flag overrides via --set); outputs are CSV series with
17-significant-digit formatting plus JSON reports, and a manifest written
atomically at the end of every run.

Exit codes: 0 all enabled checks pass, 1 a check failed, 2 config error,
3 model hypothesis error, 4 integration failure.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import copy
import hashlib
import itertools
import json
import os
import sys
import time
from dataclasses import asdict, dataclass

import numpy as np

from . import __version__
from .asymptotics import asymptotics_report, equilibria_enumerate, volume_fractions
from .bounds import bounds_profile
from .counterexample import dense_data_demo, simulate_cyl
from .displacement import approximate_initial_data, integrate, seeded_state
from .errors import ConfigError, HypothesisError, StrainflowError
from .mixed import solve_field
from .state import SimpleState, Trajectory
from .stress_models import POSITIVE, StressModel, make_model

FMT = ".17g"


def _fmt(x) -> str:
    return format(float(x), FMT)


def _write_csv(path, header: list[str], rows) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(x) for x in row) + "\n")


def _write_json_atomic(path, payload: dict) -> None:
    tmp = str(path) + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
    os.replace(tmp, path)


def _output_root() -> str:
    return os.environ.get("STRAINFLOW_OUT", ".")


# -- configuration ---------------------------------------------------------------


_DEFAULTS = {
    "model": {"name": "cubic", "params": {}},
    "bc": "displacement",
    "mu": 0.5,
    "n": 8,
    "initial": {"kind": "seeded", "seed": 0, "lo": None, "hi": None},
    "stepper": {"kind": "rk45", "rtol": 1e-9, "atol": 1e-12, "tau": 1e-2},
    "t_final": 50.0,
    "record_every": 0.25,
    "output_dir": ".",
    "analyses": {
        "bounds_lower": "auto",
        "bounds_upper": "auto",
        "asympt": True,
        "invariants": True,
    },
}


@dataclass
class ExperimentConfig:
    model: dict
    bc: str
    mu: float
    n: int
    initial: dict
    stepper: dict
    t_final: float
    record_every: float
    output_dir: str
    analyses: dict

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(data) - set(_DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        merged = copy.deepcopy(_DEFAULTS)
        for key, value in data.items():
            if isinstance(merged[key], dict):
                if not isinstance(value, dict):
                    raise ConfigError(f"field {key!r} must be an object")
                merged[key].update(value)
            else:
                merged[key] = value
        cfg = cls(**merged)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.bc not in ("displacement", "mixed"):
            raise ConfigError(f"unknown boundary condition kind {self.bc!r}")
        if not isinstance(self.model.get("name"), str):
            raise ConfigError("model.name must be a string")
        if self.t_final <= 0:
            raise ConfigError("t_final must be positive")
        if self.record_every <= 0:
            raise ConfigError("record_every must be positive")
        if int(self.n) < 1:
            raise ConfigError("n must be at least 1")
        kind = self.initial.get("kind")
        if kind not in ("seeded", "explicit", "ramp", "file"):
            raise ConfigError(f"unknown initial data kind {kind!r}")
        if kind == "explicit" and not self.initial.get("values"):
            raise ConfigError("explicit initial data needs a non-empty values list")
        if self.stepper.get("kind") not in ("rk45", "prox"):
            raise ConfigError(f"unknown stepper {self.stepper.get('kind')!r}")

    def to_dict(self) -> dict:
        return copy.deepcopy(asdict(self))

    def hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()


def load_config(path: str, overrides: list[str] | None = None) -> ExperimentConfig:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    for ov in overrides or []:
        if "=" not in ov:
            raise ConfigError(f"override {ov!r} must look like dotted.key=value")
        key, raw = ov.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        target = data
        parts = key.split(".")
        for part in parts[:-1]:
            target = target.setdefault(part, {})
        target[parts[-1]] = value
    return ExperimentConfig.from_dict(data)


def _build_model(cfg: ExperimentConfig) -> StressModel:
    try:
        return make_model(cfg.model["name"], **cfg.model.get("params", {}))
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"cannot build model: {exc}") from exc


def _initial_state(cfg: ExperimentConfig, model: StressModel) -> SimpleState:
    spec = cfg.initial
    kind = spec["kind"]
    n = int(cfg.n)
    if kind == "seeded":
        return seeded_state(model, n, cfg.mu, int(spec.get("seed", 0)),
                            lo=spec.get("lo"), hi=spec.get("hi"))
    if kind == "explicit":
        values = np.asarray(spec["values"], dtype=float)
        weights = spec.get("weights")
        if weights is None:
            return SimpleState.uniform(values)
        return SimpleState(values=values, weights=np.asarray(weights, dtype=float))
    if kind == "ramp":
        m = int(spec.get("samples", 512))
        x = (np.arange(m) + 0.5) / m
        samples = 2.0 * cfg.mu * x
        state, _ = approximate_initial_data(samples, n)
        return state
    if kind == "file":
        from .errors import DegenerateDataError

        samples = np.loadtxt(spec["path"], dtype=float).ravel()
        mean = samples.mean() if len(samples) else 0.0
        if mean <= 0:
            raise ConfigError("file data carries no positive mass")
        try:
            state, _ = approximate_initial_data(samples * (cfg.mu / mean), n)
        except DegenerateDataError as exc:
            raise ConfigError(str(exc)) from exc
        return state
    raise ConfigError(f"unknown initial data kind {kind!r}")


# -- invariant checks -------------------------------------------------------------


def _run_checks(cfg, model, traj: Trajectory, profile) -> dict[str, bool]:
    checks: dict[str, bool] = {}
    mu = cfg.mu
    checks["mass_conservation"] = bool(
        np.max(np.abs(traj.mass() - mu)) <= 1e-12 * max(1.0, abs(mu))
    )
    order0 = np.argsort(traj.values[0], kind="stable")
    ordered = traj.values[:, order0]
    checks["ordering_preserved"] = bool(np.all(np.diff(ordered, axis=1) >= -1e-10))
    if cfg.stepper["kind"] == "rk45":
        i0 = 1 if traj.n_records > 1 else 0
        e0, z0 = traj.energy[i0], traj.dissipation_cum[i0]
        resid = traj.energy[i0:] - e0 + (traj.dissipation_cum[i0:] - z0)
        checks["energy_equation"] = bool(
            np.max(np.abs(resid)) <= 1e-6 * (1.0 + abs(e0))
        )
    else:
        checks["energy_nonincreasing"] = bool(np.all(np.diff(traj.energy) <= 1e-8))
    if profile is not None:
        sel = traj.times > 0
        ok = True
        if profile.lower is not None:
            ok = ok and bool(
                np.all(traj.values[sel].min(axis=1) >= profile.lower_at(traj.times[sel]) - 1e-12)
            )
        if profile.upper is not None:
            ok = ok and bool(
                np.all(traj.values[sel].max(axis=1) <= profile.upper_at(traj.times[sel]) + 1e-12)
            )
        checks["bound_enclosure"] = ok
    return checks


# -- run pipeline ------------------------------------------------------------------


def command_run(cfg: ExperimentConfig) -> int:
    t_start = time.perf_counter()
    out_dir = os.path.join(_output_root(), cfg.output_dir)
    os.makedirs(out_dir, exist_ok=True)
    manifest_path = os.path.join(out_dir, "manifest.json")
    files: list[str] = []
    checks: dict[str, bool] = {}
    report: dict = {"config": cfg.to_dict()}

    def finish(exit_code: int, error: str | None = None) -> int:
        manifest = {
            "config_hash": cfg.hash(),
            "package_version": __version__,
            "files": files,
            "wall_time_s": time.perf_counter() - t_start,
            "checks": checks,
            "exit_code": exit_code,
        }
        if error:
            manifest["error"] = error
        _write_json_atomic(manifest_path, manifest)
        return exit_code

    model = _build_model(cfg)
    state = _initial_state(cfg, model)

    # universal bound curves (hypothesis failures end the run with code 3)
    profile = None
    want_lower = cfg.analyses.get("bounds_lower", "auto")
    want_upper = cfg.analyses.get("bounds_upper", "auto")
    if want_lower == "auto":
        want_lower = model.domain == POSITIVE
    if want_upper == "auto":
        want_upper = True
    grid = np.arange(0.0, cfg.t_final + 0.5 * cfg.record_every, cfg.record_every)
    grid = grid if grid[-1] >= cfg.t_final else np.append(grid, cfg.t_final)
    grid[-1] = cfg.t_final
    if want_lower or want_upper:
        try:
            profile = bounds_profile(
                model, cfg.bc, mu=cfg.mu, t_grid=grid[1:],
                want_lower=bool(want_lower), want_upper=bool(want_upper),
            )
            report["bounds_constants"] = profile.constants
        except HypothesisError as exc:
            print(f"hypothesis failure: {exc}", file=sys.stderr)
            return finish(3, str(exc))

    # integration
    if cfg.bc == "displacement":
        traj = integrate(
            model, state, cfg.t_final,
            stepper=cfg.stepper["kind"],
            record_every=cfg.record_every,
            rtol=cfg.stepper.get("rtol", 1e-9),
            atol=cfg.stepper.get("atol", 1e-12),
            tau=cfg.stepper.get("tau", 1e-2),
        )
    else:
        try:
            traj, _limit = solve_field(
                model, state.values, grid,
                rtol=cfg.stepper.get("rtol", 1e-9),
                atol=cfg.stepper.get("atol", 1e-12),
            )
        except StrainflowError as exc:
            print(f"integration failure: {exc}", file=sys.stderr)
            return finish(4, str(exc))
    traj.metadata["seed"] = cfg.initial.get("seed")
    prefix = os.path.join(out_dir, "trajectory")
    csv_path, json_path = traj.save(prefix)
    files.extend([os.path.basename(csv_path), os.path.basename(json_path)])

    if "error" in traj.metadata:
        print(f"integration failure: {traj.metadata['error']}", file=sys.stderr)
        report["error"] = traj.metadata["error"]
        _write_json_atomic(os.path.join(out_dir, "report.json"), report)
        files.append("report.json")
        return finish(4, traj.metadata["error"])

    # analyses
    if cfg.analyses.get("asympt", True) and cfg.bc == "displacement":
        report["asymptotics"] = asymptotics_report(model, traj).to_dict()
    report["converged"] = bool(traj.converged)
    report["final_stress_mean"] = float(traj.stress_mean[-1])
    if cfg.analyses.get("invariants", True) and cfg.bc == "displacement":
        checks.update(_run_checks(cfg, model, traj, profile))
    report["checks"] = checks
    report["wall_time_s"] = time.perf_counter() - t_start
    _write_json_atomic(os.path.join(out_dir, "report.json"), report)
    files.append("report.json")
    all_pass = all(checks.values()) if checks else True
    return finish(0 if all_pass else 1)


# -- smaller subcommands -------------------------------------------------------------


def command_mixed(args) -> int:
    model = make_model(args.model, **_parse_params(args.param))
    out_dir = os.path.join(_output_root(), args.out)
    os.makedirs(out_dir, exist_ok=True)
    if args.p0.startswith("file:"):
        samples = np.loadtxt(args.p0[5:], dtype=float).ravel()
    elif ":" in args.p0:  # step:a,b
        kind, payload = args.p0.split(":", 1)
        if kind != "step":
            raise ConfigError(f"unknown p0 spec {args.p0!r}")
        a, b = (float(x) for x in payload.split(","))
        samples = np.where(np.linspace(0, 1, args.n) < 0.5, a, b)
    else:
        samples = np.full(args.n, float(args.p0))
    grid = np.linspace(0.0, args.t_final, args.records)
    traj, limit = solve_field(model, samples, grid)
    rows = np.column_stack([traj.times, traj.values, traj.energy])
    header = ["t"] + [f"p_{i + 1}" for i in range(traj.values.shape[1])] + ["energy"]
    path = os.path.join(out_dir, "mixed.csv")
    _write_csv(path, header, rows)
    _write_json_atomic(
        os.path.join(out_dir, "mixed.json"),
        {
            "model": model.spec,
            "limit_field": [float(x) for x in limit],
            "converged": bool(traj.converged),
        },
    )
    print(path)
    return 0


def command_bounds(args) -> int:
    model = make_model(args.model, **_parse_params(args.param))
    out_dir = os.path.join(_output_root(), args.out)
    os.makedirs(out_dir, exist_ok=True)
    profile = bounds_profile(model, args.kind, mu=args.mu)
    nan = np.full_like(profile.t_grid, np.nan)
    lower = profile.lower if profile.lower is not None else nan
    upper = profile.upper if profile.upper is not None else nan
    path = os.path.join(out_dir, "bounds.csv")
    _write_csv(path, ["t", "lower", "upper"], np.column_stack([profile.t_grid, lower, upper]))
    _write_json_atomic(
        os.path.join(out_dir, "bounds.json"),
        {"kind": profile.kind, "mu": profile.mu, "constants": profile.constants},
    )
    print(path)
    return 0


def command_equilibria(args) -> int:
    model = make_model(args.model, **_parse_params(args.param))
    verdict, found = equilibria_enumerate(model, args.mu)
    payload = {
        "verdict": verdict,
        "mu": args.mu,
        "examples": [
            {
                "stress_level": d.stress_level,
                "branch_values": list(d.branch_values),
                "fractions": list(d.fractions),
            }
            for d in found[:16]
        ],
    }
    if args.out:
        out_dir = os.path.join(_output_root(), args.out)
        os.makedirs(out_dir, exist_ok=True)
        _write_json_atomic(os.path.join(out_dir, "equilibria.json"), payload)
    print(json.dumps(payload, indent=1, sort_keys=True))
    return 0


def command_asympt(args) -> int:
    traj = Trajectory.load(args.trajectory)
    spec = traj.metadata.get("model", {})
    model = make_model(spec["name"], **spec.get("params", {}))
    out_dir = os.path.join(_output_root(), args.out)
    os.makedirs(out_dir, exist_ok=True)
    report = asymptotics_report(model, traj)
    _write_json_atomic(os.path.join(out_dir, "asympt.json"), report.to_dict())
    series = np.sqrt(traj.dissipation)
    header = ["t", "rhs_norm", "c"]
    cols = [traj.times, series, traj.stress_mean]
    fr = volume_fractions(model, traj)
    if fr.n_slots > 1:
        for j in range(fr.n_slots):
            header.append(f"fraction_{j + 1}")
            cols.append(fr.fractions[:, j])
        header.append("fraction_residual")
        cols.append(fr.residual)
    _write_csv(os.path.join(out_dir, "asympt.csv"), header, np.column_stack(cols))
    print(os.path.join(out_dir, "asympt.json"))
    return 0


def command_counterexample(args) -> int:
    out_dir = os.path.join(_output_root(), args.out)
    os.makedirs(out_dir, exist_ok=True)
    if args.demo:
        summary = dense_data_demo(t_final=args.t_final)
        _write_json_atomic(os.path.join(out_dir, "counterexample.json"), {"members": summary})
        members = [(m["z0"],) for m in summary]
        for i, (z0,) in enumerate(members):
            traj = simulate_cyl(2.0, 0.0, z0, args.t_final, n_records=args.records)
            _write_csv(
                os.path.join(out_dir, f"member_{i:02d}.csv"),
                ["t", "r", "theta", "z", "lyapunov"],
                np.column_stack([traj.times, traj.r, traj.theta, traj.z, traj.lyapunov]),
            )
        print(os.path.join(out_dir, "counterexample.json"))
        return 0
    traj = simulate_cyl(args.r0, args.theta0, args.z0, args.t_final, n_records=args.records)
    path = os.path.join(out_dir, "counterexample.csv")
    _write_csv(
        path,
        ["t", "r", "theta", "z", "lyapunov"],
        np.column_stack([traj.times, traj.r, traj.theta, traj.z, traj.lyapunov]),
    )
    print(path)
    return 0


# -- plot data --------------------------------------------------------------------


def _svg_polyline(path, xs, series: dict[str, np.ndarray], width=640, height=400) -> None:
    """Bare-bones SVG line chart; one polyline per named series."""
    xs = np.asarray(xs, dtype=float)
    all_y = np.concatenate([np.asarray(v, dtype=float) for v in series.values()])
    finite = np.isfinite(all_y)
    y_lo, y_hi = (np.min(all_y[finite]), np.max(all_y[finite])) if finite.any() else (0, 1)
    if y_hi == y_lo:
        y_hi = y_lo + 1.0
    x_lo, x_hi = float(xs[0]), float(xs[-1])
    pad = 40
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2"]

    def sx(x):
        return pad + (x - x_lo) / (x_hi - x_lo) * (width - 2 * pad)

    def sy(y):
        return height - pad - (y - y_lo) / (y_hi - y_lo) * (height - 2 * pad)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect x="{pad}" y="{pad}" width="{width - 2 * pad}" height="{height - 2 * pad}" '
        'fill="none" stroke="#999"/>',
    ]
    for i, (name, ys) in enumerate(series.items()):
        ys = np.asarray(ys, dtype=float)
        ok = np.isfinite(ys)
        pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs[ok], ys[ok]))
        color = colors[i % len(colors)]
        parts.append(f'<polyline fill="none" stroke="{color}" points="{pts}"/>')
        parts.append(
            f'<text x="{pad + 6}" y="{pad + 14 + 14 * i}" fill="{color}" '
            f'font-size="11">{name}</text>'
        )
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts))


def command_plotdata(args) -> int:
    traj = Trajectory.load(args.trajectory)
    spec = traj.metadata.get("model", {})
    model = make_model(spec["name"], **spec.get("params", {}))
    out_dir = os.path.join(_output_root(), args.out)
    os.makedirs(out_dir, exist_ok=True)
    base = os.path.join(out_dir, f"plot_{args.kind}")
    n = traj.values.shape[1]
    if args.kind == "fan":
        nan = np.full(traj.n_records, np.nan)
        lower, upper = nan.copy(), nan.copy()
        mu = traj.metadata.get("mu")
        if traj.metadata.get("kind") == "displacement" and mu is not None:
            sel = traj.times > 0
            try:
                prof = bounds_profile(
                    model, "displacement", mu=mu, t_grid=traj.times[sel],
                    want_lower=model.domain == POSITIVE, want_upper=True,
                )
                if prof.lower is not None:
                    lower[sel] = prof.lower
                if prof.upper is not None:
                    upper[sel] = prof.upper
            except HypothesisError:
                pass
        header = ["t"] + [f"p_{i + 1}" for i in range(n)] + ["lower", "upper"]
        rows = np.column_stack([traj.times, traj.values, lower, upper])
        _write_csv(base + ".csv", header, rows)
        series = {f"p_{i + 1}": traj.values[:, i] for i in range(min(n, 6))}
        series["lower"] = lower
        series["upper"] = upper
        _svg_polyline(base + ".svg", traj.times, series)
    elif args.kind == "c":
        _write_csv(base + ".csv", ["t", "c"], np.column_stack([traj.times, traj.stress_mean]))
        _svg_polyline(base + ".svg", traj.times, {"c": traj.stress_mean})
    elif args.kind == "energy":
        _write_csv(
            base + ".csv",
            ["t", "energy", "dissipation"],
            np.column_stack([traj.times, traj.energy, traj.dissipation]),
        )
        _svg_polyline(base + ".svg", traj.times,
                      {"energy": traj.energy, "dissipation": traj.dissipation})
    elif args.kind == "fractions":
        fr = volume_fractions(model, traj)
        header = ["t"] + [f"fraction_{j + 1}" for j in range(fr.n_slots)] + ["residual"]
        rows = np.column_stack([traj.times, fr.fractions, fr.residual])
        _write_csv(base + ".csv", header, rows)
        _svg_polyline(base + ".svg", traj.times,
                      {f"fraction_{j + 1}": fr.fractions[:, j] for j in range(fr.n_slots)})
    else:
        print(f"unknown plot kind {args.kind!r}", file=sys.stderr)
        return 2
    print(base + ".csv")
    return 0


# -- sweep ------------------------------------------------------------------------


def _sweep_member(payload) -> dict:
    index, base_config, assignment, out_root = payload
    data = copy.deepcopy(base_config)
    for key, value in assignment.items():
        target = data
        parts = key.split(".")
        for part in parts[:-1]:
            target = target.setdefault(part, {})
        target[parts[-1]] = value
    data["output_dir"] = os.path.join(out_root, f"member_{index:03d}")
    row = {"index": index, "params": assignment}
    try:
        cfg = ExperimentConfig.from_dict(data)
        code = command_run(cfg)
        row["exit_code"] = code
        report_path = os.path.join(_output_root(), data["output_dir"], "report.json")
        with open(report_path) as fh:
            report = json.load(fh)
        row["checks"] = report.get("checks", {})
        asym = report.get("asymptotics") or {}
        row["sigma_bar_residual"] = asym.get("sigma_bar_residual")
    except Exception as exc:  # member failures recorded, sweep continues
        row["exit_code"] = -1
        row["error"] = str(exc)
    return row


def command_sweep(args) -> int:
    try:
        with open(args.config) as fh:
            base_config = json.load(fh)
        grid: dict = json.loads(args.grid) if not os.path.exists(args.grid) else json.load(open(args.grid))
    except (OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out_dir = os.path.join(_output_root(), args.out)
    os.makedirs(out_dir, exist_ok=True)
    keys = sorted(grid)
    combos = list(itertools.product(*(grid[k] for k in keys))) if keys else []
    members = [
        (i, base_config, dict(zip(keys, combo)), args.out)
        for i, combo in enumerate(combos)
    ]
    rows: list[dict] = []
    if members:
        workers = args.workers or os.cpu_count() or 1
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_member, members))
    n_pass = sum(1 for r in rows if r.get("exit_code") == 0)
    aggregate = {
        "members": rows,
        "n_members": len(rows),
        "n_pass": n_pass,
        "pass_rate": (n_pass / len(rows)) if rows else None,
    }
    _write_json_atomic(os.path.join(out_dir, "sweep.json"), aggregate)
    print(os.path.join(out_dir, "sweep.json"))
    return 0


# -- argument parsing ---------------------------------------------------------------


def _parse_params(items: list[str] | None) -> dict:
    params = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"model parameter {item!r} must look like key=value")
        key, raw = item.split("=", 1)
        try:
            params[key] = json.loads(raw)
        except json.JSONDecodeError:
            params[key] = raw
    return params


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="strainflow",
        description="numerical laboratory for a nonlocal strain gradient flow",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one configured experiment")
    p_run.add_argument("--config", default=None,
                       help="JSON config file; omitted means all defaults")
    p_run.add_argument("--set", dest="overrides", action="append", default=[],
                       help="override a config entry, e.g. --set stepper.tau=0.01")
    p_run.add_argument("--model", default=None, help="model name shorthand")
    p_run.add_argument("--mu", type=float, default=None)
    p_run.add_argument("--n", type=int, default=None)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--t-final", type=float, default=None)
    p_run.add_argument("--stepper", choices=["rk45", "prox"], default=None)
    p_run.add_argument("--tau", type=float, default=None)
    p_run.add_argument("--record-every", type=float, default=None)
    p_run.add_argument("--out", dest="output_dir", default=None)

    p_mixed = sub.add_parser("mixed", help="decoupled traction-free flow")
    p_mixed.add_argument("--model", default="singular-cubic")
    p_mixed.add_argument("--param", action="append", default=[])
    p_mixed.add_argument("--p0", default="1.0", help="constant | step:a,b | file:PATH")
    p_mixed.add_argument("--n", type=int, default=8)
    p_mixed.add_argument("--t-final", type=float, default=20.0)
    p_mixed.add_argument("--records", type=int, default=201)
    p_mixed.add_argument("--out", default="out_mixed")

    p_bounds = sub.add_parser("bounds", help="universal bound curves")
    p_bounds.add_argument("--model", default="singular-cubic")
    p_bounds.add_argument("--param", action="append", default=[])
    p_bounds.add_argument("--kind", choices=["mixed", "displacement"], default="displacement")
    p_bounds.add_argument("--mu", type=float, default=1.0)
    p_bounds.add_argument("--out", default="out_bounds")

    p_eq = sub.add_parser("equilibria", help="uniqueness of the equilibrium state")
    p_eq.add_argument("--model", default="cubic")
    p_eq.add_argument("--param", action="append", default=[])
    p_eq.add_argument("--mu", type=float, required=True)
    p_eq.add_argument("--out", default="")

    p_as = sub.add_parser("asympt", help="long-time diagnostics of a saved trajectory")
    p_as.add_argument("--trajectory", required=True, help="path prefix of trajectory.{csv,json}")
    p_as.add_argument("--out", default="out_asympt")

    p_cx = sub.add_parser("counterexample", help="spiral ODE ensemble")
    p_cx.add_argument("--demo", action="store_true")
    p_cx.add_argument("--r0", type=float, default=2.0)
    p_cx.add_argument("--theta0", type=float, default=0.0)
    p_cx.add_argument("--z0", type=float, default=0.0)
    p_cx.add_argument("--t-final", type=float, default=1e3)
    p_cx.add_argument("--records", type=int, default=401)
    p_cx.add_argument("--out", default="out_counterexample")

    p_plot = sub.add_parser("plotdata", help="plot-ready CSV/SVG from a trajectory")
    p_plot.add_argument("--trajectory", required=True)
    p_plot.add_argument("--kind", required=True, choices=["fan", "c", "energy", "fractions"])
    p_plot.add_argument("--out", default="out_plots")

    p_sweep = sub.add_parser("sweep", help="concurrent grid of runs")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--grid", required=True,
                         help="JSON object mapping dotted config keys to value lists")
    p_sweep.add_argument("--workers", type=int, default=None)
    p_sweep.add_argument("--out", default="out_sweep")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            overrides = list(args.overrides)
            flag_map = {
                "model.name": args.model,
                "mu": args.mu,
                "n": args.n,
                "initial.seed": args.seed,
                "t_final": args.t_final,
                "stepper.kind": args.stepper,
                "stepper.tau": args.tau,
                "record_every": args.record_every,
                "output_dir": args.output_dir,
            }
            overrides += [
                f"{key}={json.dumps(val)}"
                for key, val in flag_map.items()
                if val is not None
            ]
            if args.config is None:
                data: dict = {}
                for ov in overrides:
                    key, raw = ov.split("=", 1)
                    try:
                        value = json.loads(raw)
                    except json.JSONDecodeError:
                        value = raw
                    target = data
                    parts = key.split(".")
                    for part in parts[:-1]:
                        target = target.setdefault(part, {})
                    target[parts[-1]] = value
                cfg = ExperimentConfig.from_dict(data)
            else:
                cfg = load_config(args.config, overrides)
            return command_run(cfg)
        if args.command == "mixed":
            return command_mixed(args)
        if args.command == "bounds":
            return command_bounds(args)
        if args.command == "equilibria":
            return command_equilibria(args)
        if args.command == "asympt":
            return command_asympt(args)
        if args.command == "counterexample":
            return command_counterexample(args)
        if args.command == "plotdata":
            return command_plotdata(args)
        if args.command == "sweep":
            return command_sweep(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except HypothesisError as exc:
        print(f"hypothesis failure: {exc}", file=sys.stderr)
        return 3
    except StrainflowError as exc:
        print(f"run failure: {exc}", file=sys.stderr)
        return 4
    raise AssertionError("unreachable")


if __name__ == "__main__":
    sys.exit(main())

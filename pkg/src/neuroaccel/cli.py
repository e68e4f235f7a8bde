"""Command-line experiment runner.

Subcommands: characterize, benchmark, sweep, design-report, validate-config.
Worker count for grid sweeps comes from ``NEUROACCEL_WORKERS`` (default 1).
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import os
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from pathlib import Path

import numpy as np

from . import __version__
from . import config as config_mod
from .benchmark import run_benchmark
from .constants import G
from .design import design_report
from .dynamics import amplitude_sweep, frequency_sweep, hysteresis_width, sensor_frequency_response
from .errors import ConfigError, NeuroaccelError
from .learning import fit_readout, predict, score
from .tasks import build_target_matrix

log = logging.getLogger("neuroaccel")

WORKERS_ENV = "NEUROACCEL_WORKERS"


# --- output helpers ------------------------------------------------------------


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_csv(path: Path, header: list[str], rows, chash: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={chash}\n")
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    return path


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def write_json(path: Path, obj: dict, chash: str) -> Path:
    obj = {"config_hash": chash, **obj}
    _atomic_write(path, json.dumps(obj, indent=2, default=_json_default) + "\n")
    return path


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(type(o))


class Manifest:
    def __init__(self, out: Path, cfg: dict, command: str):
        self.out = out
        self.cfg = cfg
        self.chash = config_mod.config_hash(cfg)
        self.command = command
        self.files: list[str] = []
        self.summary: dict = {}
        self.t0 = time.perf_counter()

    def add(self, *paths: Path) -> None:
        for p in paths:
            self.files.append(str(Path(p).relative_to(self.out)))

    def write(self, status: str = "ok") -> Path:
        out = self.out / "manifest.json"
        body = {
            "config_hash": self.chash,
            "tool_version": __version__,
            "command": self.command,
            "profile": self.cfg.get("profile", "full"),
            "status": status,
            "wall_time_s": round(time.perf_counter() - self.t0, 3),
            "outputs": self.files,
            "acceptance_summary": self.summary,
        }
        _atomic_write(out, json.dumps(body, indent=2, default=_json_default) + "\n")
        return out

    def write_config(self) -> None:
        p = self.out / "config.json"
        write_json(p, {"config": self.cfg}, self.chash)
        self.add(p)


# --- subcommands -----------------------------------------------------------------


def cmd_characterize(exp: config_mod.Experiment, out: Path, man: Manifest) -> None:
    c = exp.cfg["characterize"]
    phys = exp.physics
    settings = exp.sweep_settings
    h = man.chash
    fds = np.linspace(float(c["fd_min"]), float(c["fd_max"]), int(c["fd_points"]))
    hysteretic = {}
    peaks = {}
    for v0 in c["v0_set"]:
        up = frequency_sweep(phys, float(v0), fds, "up", settings)
        dn = frequency_sweep(phys, float(v0), fds, "down", settings)
        p = write_csv(
            out / f"frequency_sweep_v0_{v0:g}.csv",
            ["fd_hz", "amplitude_m", "direction"],
            itertools.chain(up.rows(), dn.rows()),
            h,
        )
        man.add(p)
        width = hysteresis_width(up, dn)
        hysteretic[f"{v0:g}"] = width > 0
        peaks[f"{v0:g}"] = float(up.axis_values[np.argmax(up.amplitude_signal)])
        if width > 0:
            man.add(
                write_csv(
                    out / f"hysteresis_v0_{v0:g}.csv",
                    ["fd_hz", "amplitude_up_m", "amplitude_down_m"],
                    zip(up.axis_values, up.amplitude_signal, dn.amplitude_signal[::-1]),
                    h,
                )
            )
    vs = np.linspace(0.0, float(c["v0_max"]), int(c["v0_points"]))[1:]
    amp_jumps = {}
    for fd in c["amplitude_fd_set"]:
        up = amplitude_sweep(phys, float(fd), vs, "up", settings)
        dn = amplitude_sweep(phys, float(fd), vs, "down", settings)
        man.add(
            write_csv(
                out / f"amplitude_sweep_fd_{fd:g}.csv",
                ["v0_v", "amplitude_m", "direction"],
                itertools.chain(up.rows(), dn.rows()),
                h,
            )
        )
        amp_jumps[f"{fd:g}"] = hysteresis_width(up, dn) > 0
    f = np.geomspace(float(c["sensor_f_min"]), float(c["sensor_f_max"]), int(c["sensor_points"]))
    sens = sensor_frequency_response(phys, float(c["sensor_accel_g"]) * G, f)
    man.add(
        write_csv(
            out / "sensor_response.csv",
            ["vibration_hz", "displacement_per_accel_m_per_ms2", "direction"],
            sens.rows(),
            h,
        )
    )
    man.summary = {
        "frequency_sweep_hysteretic": hysteretic,
        "frequency_sweep_peak_fd_hz": peaks,
        "amplitude_sweep_hysteretic": amp_jumps,
        "sensor_peak_hz": float(f[np.argmax(sens.amplitude_signal)]),
    }


def _benchmark_outputs(res, out: Path, man: Manifest) -> None:
    h = man.chash
    task = res.task
    rows = [list(r.values()) for r in res.score.rows(task)]
    man.add(write_csv(out / "scores.csv", ["task", "n", "nrmse", "rmse", "success", "ci"], rows, h))
    res.model.config_hash = h
    p = out / "model.json"
    _atomic_write(p, res.model.to_json() + "\n")
    man.add(p)
    cols = [f"target_{lab}" for lab in res.labels] + [f"prediction_{lab}" for lab in res.labels]
    idx = np.arange(res.predictions.shape[0])
    man.add(
        write_csv(
            out / "predictions.csv",
            ["test_index"] + cols,
            (list(r) for r in np.column_stack([idx, res.targets, res.predictions])),
            h,
        )
    )
    for p in res.run.save(out / "run", h):
        man.add(p)


def _summary(res) -> dict:
    s = {"gamma": res.gamma, "events": res.events, "saturated_orders": res.saturated_orders}
    s["clip_fraction"] = res.run.clip_fraction
    s["metric"] = {lab: res.metric(lab) for lab in res.labels}
    return s


def cmd_benchmark(exp, task: str, out: Path, man: Manifest) -> None:
    drive = exp.drive(task)
    res = run_benchmark(
        task,
        exp.task_spec(task),
        exp.physics,
        drive,
        exp.acquisition,
        exp.shaker_for(drive),
        exp.run_settings,
        exp.gamma_grid,
        paper_faithful=bool(exp.cfg["learning"]["paper_faithful"]),
        target_source=exp.cfg["narma"]["target_source"],
    )
    _benchmark_outputs(res, out, man)
    man.summary = _summary(res)


def _grid_points(grid: dict) -> list[dict]:
    keys = sorted(grid)
    return [dict(zip(keys, vals)) for vals in itertools.product(*(grid[k] for k in keys))]


def _rank_value(task: str, res, gamma=None) -> float:
    """Lower is better: NRMSE at n=10 for NARMA, minus mean success for parity."""
    if task == "narma":
        return res.metric("10") if "10" in res.labels else float(np.mean([res.metric(l) for l in res.labels]))
    return -float(np.mean([res.metric(l) for l in res.labels]))


def _sweep_worker(cfg: dict, task: str, point: dict) -> list[dict]:
    exp = config_mod.Experiment(cfg).with_overrides(task, point)
    drive = exp.drive(task)
    res = run_benchmark(
        task,
        exp.task_spec(task),
        exp.physics,
        drive,
        exp.acquisition,
        exp.shaker_for(drive),
        exp.run_settings,
        exp.gamma_grid,
        paper_faithful=bool(exp.cfg["learning"]["paper_faithful"]),
        target_source=exp.cfg["narma"]["target_source"],
    )
    rows = []
    gammas = [point["gamma"]] if "gamma" in point else [None]
    for g in gammas:
        if g is not None:
            # fixed regularization: refit on the same reservoir states
            spec = exp.task_spec(task)
            X = res.run.states
            full = res.run.full_inputs("setpoint" if task == "parity" else exp.cfg["narma"]["target_source"])
            Y = build_target_matrix(task, full, spec.n_range, res.saturated_orders)[res.run.washout :]
            ntr, nte = spec.train_len, spec.test_len
            model = fit_readout(X[:ntr], Y[:ntr], float(g))
            pred = predict(model, X[ntr : ntr + nte])
            kind = "classification" if task == "parity" else "regression"
            res.score = score(pred, Y[ntr : ntr + nte], kind, labels=res.labels)
            res.gamma = float(g)
        row = {**{k: point[k] for k in sorted(point)}, "gamma_used": res.gamma, "rank_value": _rank_value(task, res)}
        row.update({f"n{lab}": res.metric(lab) for lab in res.labels})
        rows.append(row)
    return rows


def cmd_sweep(exp, out: Path, man: Manifest, workers: int) -> None:
    task = exp.cfg["sweep"]["task"]
    points = _grid_points(exp.cfg["sweep"]["grid"])
    done: list[dict] = []
    partial = out / "sweep_partial.jsonl"
    partial.parent.mkdir(parents=True, exist_ok=True)
    partial.write_text("")
    interrupted = False
    try:
        if workers <= 1:
            for p in points:
                rows = _sweep_worker(exp.cfg, task, p)
                _record(partial, rows, done)
        else:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                futs = [pool.submit(_sweep_worker, exp.cfg, task, p) for p in points]
                for fut in as_completed(futs):
                    _record(partial, fut.result(), done)
    except KeyboardInterrupt:
        interrupted = True
    # deterministic order regardless of completion order
    done.sort(key=lambda r: (r["rank_value"], json.dumps(r, sort_keys=True, default=float)))
    if done:
        header = list(done[0].keys())
        man.add(write_csv(out / "sweep_ranked.csv", ["rank"] + header, ([i + 1] + [r[k] for k in header] for i, r in enumerate(done)), man.chash))
    partial.unlink(missing_ok=True)
    man.summary = {
        "task": task,
        "points_total": len(points),
        "points_completed": len(done),
        "completed": [{k: r[k] for k in r if k in SWEEP_KEYS} for r in done],
        "interrupted": interrupted,
    }
    if interrupted:
        raise KeyboardInterrupt


SWEEP_KEYS = set(config_mod.SWEEPABLE)


def _record(partial: Path, rows: list[dict], done: list[dict]) -> None:
    with open(partial, "a") as fh:
        for r in rows:
            fh.write(json.dumps(r, default=float) + "\n")
    done.extend(rows)


# --- entry point -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="neuroaccel", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, out=True):
        p.add_argument("-c", "--config", help="YAML file overriding the defaults")
        p.add_argument("--fast", action="store_true", help="reduced profile, not comparable to full runs")
        if out:
            p.add_argument("-o", "--output-dir", help="overrides output_dir from the config")

    p = sub.add_parser("characterize", help="frequency, amplitude and sensor-response sweeps")
    common(p)
    p = sub.add_parser("benchmark", help="run the NARMA or parity pipeline")
    common(p)
    p.add_argument("task", choices=("narma", "parity"))
    p.add_argument("--alpha", type=float, help="override the feedback gain")
    p.add_argument("--paper-faithful", action="store_true", help="select gamma on the test block")
    p = sub.add_parser("sweep", help="hyperparameter grid over v0, fd, alpha, theta, gamma")
    common(p)
    p = sub.add_parser("design-report", help="closed-form design numbers as JSON")
    p.add_argument("-o", "--output", help="also write the report to this file")
    p = sub.add_parser("validate-config", help="check a config file and print its hash")
    common(p, out=False)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "design-report":
            rep = design_report()
            text = json.dumps(rep, indent=2)
            print(text)
            if args.output:
                _atomic_write(Path(args.output), text + "\n")
            return 0

        cfg = config_mod.load(args.config, fast=args.fast)
        if args.command == "benchmark":
            if args.alpha is not None:
                cfg[args.task]["alpha"] = args.alpha
            if args.paper_faithful:
                cfg["learning"]["paper_faithful"] = True
        exp = config_mod.Experiment(cfg)
        if args.command == "validate-config":
            print(f"config ok, hash {config_mod.config_hash(cfg)}")
            return 0

        out = Path(args.output_dir or cfg["output_dir"])
        if args.command == "benchmark":
            out = out / args.task
        out.mkdir(parents=True, exist_ok=True)
        man = Manifest(out, cfg, args.command)
        man.write_config()
        try:
            if args.command == "characterize":
                cmd_characterize(exp, out, man)
            elif args.command == "benchmark":
                cmd_benchmark(exp, args.task, out, man)
            elif args.command == "sweep":
                workers = int(os.environ.get(WORKERS_ENV, "1"))
                cmd_sweep(exp, out, man, workers)
        except KeyboardInterrupt:
            man.write("interrupted")
            return 130
        except Exception:
            man.write("failed")
            raise
        man.write("ok")
        print(f"wrote {len(man.files)} files to {out} (config hash {man.chash})")
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NeuroaccelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
